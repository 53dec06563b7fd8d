"""Planar domains, boundary charts, and the normal-offset coordinate map.

A chart carries an arclength parametrization gamma(s) = (alpha, beta) of a
boundary piece anchored at the origin, with gamma(0) = (0,0), T(0) = (1,0)
and inward normal N(0) = (0,1).  The offset map

    M(r, s) = gamma(s) + r * N(s)

sends the rectangle-with-graph-top region {0 <= r < rmax(s), 0 <= s <= s0}
diffeomorphically onto a one-sided collar of the boundary; rmax is capped by
the radius of curvature and, optionally, by a horizontal clipping line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.special import ellipeinc

FLAT_CURVATURE = 1e-12   # |K| below this counts as a locally flat piece

_GL_NODES, _GL_WEIGHTS = leggauss(16)


class JunctionError(ValueError):
    """Tangent jump between consecutive arc pieces."""

    def __init__(self, index, jump):
        self.index = index
        self.jump = jump
        super().__init__(
            f"non-smooth junction at piece {index}: tangent jump {jump:.3e} rad"
        )


class CenterAtInfinity(ValueError):
    """Curvature center requested on a flat piece."""


class OutsideRegionError(ValueError):
    """Point or coordinate pair falls outside the admissible collar."""


# ---------------------------------------------------------------------------
# domain primitives
# ---------------------------------------------------------------------------

class PlanarDomain:
    """Closed planar domain, symmetric in x, tangent to y=0 at the origin.

    Subclasses provide the boundary curve by arclength from the origin anchor
    (positive s toward x > 0) plus an exact signed distance.  Sign convention:
    signed_distance < 0 inside.
    """

    spec: dict

    # -- curve by arclength (vectorized over s, valid on |s| <= perimeter/2)
    def curve(self, s):
        raise NotImplementedError

    def curve_tangent(self, s):
        raise NotImplementedError

    def curve_curvature(self, s):
        raise NotImplementedError

    def curve_curvature_rate(self, s):
        raise NotImplementedError

    def perimeter(self) -> float:
        raise NotImplementedError

    def signed_distance(self, pts):
        raise NotImplementedError

    def bbox(self):
        raise NotImplementedError

    def contains(self, pts, shrink: float = 0.0):
        return self.signed_distance(pts) < -shrink

    def boundary_points(self, n: int):
        """Full closed boundary: points, outward normals, arclength-from-anchor.

        Samples come in exact mirror pairs (right half computed, left half
        mirrored) so symmetry checks see bitwise-mirrored data.
        """
        half = self.perimeter() / 2.0
        m = max(8, n // 2)
        s = np.linspace(0.0, half, m, endpoint=False)
        pts_r = self.curve(s)
        tan_r = self.curve_tangent(s)
        nu_r = np.column_stack([tan_r[:, 1], -tan_r[:, 0]])   # outward
        pts_l = pts_r[1:].copy()
        pts_l[:, 0] = -pts_l[:, 0]
        nu_l = nu_r[1:].copy()
        nu_l[:, 0] = -nu_l[:, 0]
        pts = np.vstack([pts_r, pts_l])
        nu = np.vstack([nu_r, nu_l])
        sarr = np.concatenate([s, -s[1:]])
        return pts, nu, sarr


def _as_points(pts):
    a = np.atleast_2d(np.asarray(pts, dtype=float))
    if a.shape[-1] != 2:
        raise ValueError("points must have shape (..., 2)")
    return a


class EllipseDomain(PlanarDomain):
    """Ellipse with lower co-vertex at the origin and minor axis on x = 0.

    Boundary: x^2/a^2 + (y-b)^2/b^2 = 1, parametrized P(u) = (a sin u,
    b (1 - cos u)).  a is the horizontal semi-axis, b the vertical one.
    """

    def __init__(self, a: float, b: float):
        if a <= 0 or b <= 0:
            raise ValueError("semi-axes must be positive")
        self.a = float(a)
        self.b = float(b)
        self.spec = {"type": "ellipse", "a": self.a, "b": self.b}
        # modulus for the incomplete elliptic arclength integral
        self._m = 1.0 - (self.b / self.a) ** 2

    # speed of the u-parametrization
    def _speed(self, u):
        return np.sqrt(self.a**2 * np.cos(u) ** 2 + self.b**2 * np.sin(u) ** 2)

    def _arc(self, u):
        return self.a * ellipeinc(u, self._m)

    def _param(self, s):
        """Invert the arclength integral by Newton (exact derivative)."""
        s = np.asarray(s, dtype=float)
        u = s / self.a
        for _ in range(60):
            f = self._arc(u) - s
            u = u - f / self._speed(u)
            if np.max(np.abs(f)) < 1e-14 * max(1.0, float(np.max(np.abs(s))) if s.size else 1.0):
                break
        return u

    def perimeter(self) -> float:
        return float(self._arc(2.0 * math.pi))

    def curve(self, s):
        u = self._param(np.asarray(s, dtype=float))
        return np.stack([self.a * np.sin(u), self.b * (1.0 - np.cos(u))], axis=-1)

    def curve_tangent(self, s):
        u = self._param(np.asarray(s, dtype=float))
        v = self._speed(u)
        return np.stack([self.a * np.cos(u) / v, self.b * np.sin(u) / v], axis=-1)

    def curve_curvature(self, s):
        u = self._param(np.asarray(s, dtype=float))
        return self.a * self.b / self._speed(u) ** 3

    def curve_curvature_rate(self, s):
        # dK/ds = (dK/du) / v,  K = a b v^-3
        u = self._param(np.asarray(s, dtype=float))
        v = self._speed(u)
        dv2_du = (self.b**2 - self.a**2) * np.sin(2.0 * u)
        dK_du = -1.5 * self.a * self.b * dv2_du / v**5
        return dK_du / v

    def bbox(self):
        return (-self.a, self.a, 0.0, 2.0 * self.b)

    def signed_distance(self, pts):
        P = _as_points(pts)
        x, y = np.abs(P[:, 0]), P[:, 1]
        # Newton on g(u) = (P - E(u)) . E'(u), seeded from a coarse scan
        ugrid = np.linspace(0.0, math.pi, 256)
        Ex = self.a * np.sin(ugrid)
        Ey = self.b * (1.0 - np.cos(ugrid))
        d2 = (x[:, None] - Ex[None, :]) ** 2 + (y[:, None] - Ey[None, :]) ** 2
        u = ugrid[np.argmin(d2, axis=1)]
        for _ in range(40):
            ex, ey = self.a * np.sin(u), self.b * (1.0 - np.cos(u))
            tx, ty = self.a * np.cos(u), self.b * np.sin(u)
            gx, gy = x - ex, y - ey
            g = gx * tx + gy * ty
            gp = -(tx * tx + ty * ty) + gx * (-self.a * np.sin(u)) + gy * (self.b * np.cos(u))
            stepped = np.clip(u - g / np.where(np.abs(gp) > 1e-300, gp, 1.0), 0.0, math.pi)
            if np.max(np.abs(stepped - u)) < 1e-15:
                u = stepped
                break
            u = stepped
        ex, ey = self.a * np.sin(u), self.b * (1.0 - np.cos(u))
        v = self._speed(u)
        nux, nuy = self.b * np.sin(u) / v, -self.a * np.cos(u) / v   # outward
        sd = (x - ex) * nux + (y - ey) * nuy
        return sd if sd.shape else float(sd)


class DiskDomain(PlanarDomain):
    """Disk of radius R tangent to y = 0 at the origin (center (0, R))."""

    def __init__(self, radius: float):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.spec = {"type": "disk", "radius": self.radius}

    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius

    def curve(self, s):
        u = np.asarray(s, dtype=float) / self.radius
        return np.stack(
            [self.radius * np.sin(u), self.radius * (1.0 - np.cos(u))], axis=-1
        )

    def curve_tangent(self, s):
        u = np.asarray(s, dtype=float) / self.radius
        return np.stack([np.cos(u), np.sin(u)], axis=-1)

    def curve_curvature(self, s):
        return np.full_like(np.asarray(s, dtype=float), 1.0 / self.radius)

    def curve_curvature_rate(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def bbox(self):
        R = self.radius
        return (-R, R, 0.0, 2.0 * R)

    def signed_distance(self, pts):
        P = _as_points(pts)
        d = np.hypot(P[:, 0], P[:, 1] - self.radius) - self.radius
        return d if d.shape else float(d)


@dataclass(frozen=True)
class ArcPiece:
    curvature: float      # signed; 0 means straight
    length: float
    theta0: float         # tangent angle at piece start
    start: tuple          # start point
    center: tuple | None  # circle center, None for straight pieces


class ArcsDomain(PlanarDomain):
    """Boundary pieced from circular arcs and straight segments, mirrored.

    The right half starts at the origin heading along +x; each entry turns by
    its signed span.  The half must end on x = 0 with tangent angle pi so the
    mirrored whole closes smoothly (C^1; curvature may jump at junctions).
    """

    def __init__(self, entries, centers=None):
        pieces = []
        pos = np.array([0.0, 0.0])
        theta = 0.0
        for i, entry in enumerate(entries):
            if "length" in entry:
                L = float(entry["length"])
                if L <= 0:
                    raise ValueError(f"piece {i}: length must be positive")
                pieces.append(ArcPiece(0.0, L, theta, tuple(pos), None))
                pos = pos + L * np.array([math.cos(theta), math.sin(theta)])
            else:
                R = float(entry["radius"])
                span = float(entry.get("span", math.radians(entry["span_deg"])))
                if R <= 0 or span == 0.0:
                    raise ValueError(f"piece {i}: need positive radius, nonzero span")
                k = math.copysign(1.0 / R, span)
                n_in = np.array([-math.sin(theta), math.cos(theta)])
                center = pos + np.copysign(R, span) * n_in
                if centers is not None and centers[i] is not None:
                    given = np.asarray(centers[i], dtype=float)
                    # a wrong center tilts the start tangent: reject with index
                    radial = pos - given
                    if abs(np.hypot(*radial) - R) > 1e-8 * max(1.0, R):
                        raise JunctionError(i, float(abs(np.hypot(*radial) - R)))
                    t_implied = math.copysign(1.0, span) * np.array([-radial[1], radial[0]]) / R
                    jump = math.atan2(
                        t_implied[1] * math.cos(theta) - t_implied[0] * math.sin(theta),
                        t_implied[0] * math.cos(theta) + t_implied[1] * math.sin(theta),
                    )
                    if abs(jump) > 1e-8:
                        raise JunctionError(i, abs(jump))
                    center = given
                pieces.append(ArcPiece(k, R * abs(span), theta, tuple(pos), tuple(center)))
                phi0 = math.atan2(pos[1] - center[1], pos[0] - center[0])
                phi1 = phi0 + span
                pos = center + R * np.array([math.cos(phi1), math.sin(phi1)])
                theta += span
        if abs(theta - math.pi) > 1e-8:
            raise ValueError(
                f"half boundary must turn by pi to close (got {theta:.6f} rad)"
            )
        if abs(pos[0]) > 1e-9:
            raise ValueError(f"half boundary must end on x = 0 (got x = {pos[0]:.3e})")
        if pos[1] <= 0:
            raise ValueError("half boundary must end above the origin")
        self.pieces = pieces
        self.top = float(pos[1])
        self._cum = np.concatenate([[0.0], np.cumsum([p.length for p in pieces])])
        arcs = []
        for p in pieces:
            if p.curvature == 0.0:
                arcs.append({"length": p.length})
            else:
                arcs.append({"radius": 1.0 / abs(p.curvature),
                             "span_deg": math.degrees(p.curvature * p.length)})
        self.spec = {"type": "arcs", "arcs": arcs}

    def perimeter(self) -> float:
        return 2.0 * float(self._cum[-1])

    def _eval_half(self, s):
        """Points/tangents/curvature for s in [0, half-perimeter]."""
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(self.pieces) - 1)
        x = np.empty_like(s)
        y = np.empty_like(s)
        tx = np.empty_like(s)
        ty = np.empty_like(s)
        K = np.empty_like(s)
        for i, p in enumerate(self.pieces):
            m = idx == i
            if not np.any(m):
                continue
            ds = s[m] - self._cum[i]
            if p.curvature == 0.0:
                c, sn = math.cos(p.theta0), math.sin(p.theta0)
                x[m] = p.start[0] + ds * c
                y[m] = p.start[1] + ds * sn
                tx[m], ty[m] = c, sn
                K[m] = 0.0
            else:
                th = p.theta0 + p.curvature * ds
                cx, cy = p.center
                R = 1.0 / abs(p.curvature)
                sgn = math.copysign(1.0, p.curvature)
                # radial direction = tangent rotated by -sgn*90deg
                x[m] = cx + sgn * R * np.sin(th)
                y[m] = cy - sgn * R * np.cos(th)
                tx[m] = np.cos(th)
                ty[m] = np.sin(th)
                K[m] = p.curvature
        return x, y, tx, ty, K

    def curve(self, s):
        s = np.asarray(s, dtype=float)
        sa = np.abs(s)
        x, y, *_ = self._eval_half(sa)
        x = np.where(s < 0, -x, x)
        return np.stack([x, y], axis=-1)

    def curve_tangent(self, s):
        s = np.asarray(s, dtype=float)
        sa = np.abs(s)
        _, _, tx, ty, _ = self._eval_half(sa)
        ty = np.where(s < 0, -ty, ty)
        return np.stack([tx, ty], axis=-1)

    def curve_curvature(self, s):
        sa = np.abs(np.asarray(s, dtype=float))
        return self._eval_half(sa)[4]

    def curve_curvature_rate(self, s):
        # piecewise-constant curvature: zero within pieces
        return np.zeros_like(np.asarray(s, dtype=float))

    def bbox(self):
        pts, _, _ = self.boundary_points(2048)
        return (float(pts[:, 0].min()), float(pts[:, 0].max()),
                float(pts[:, 1].min()), float(pts[:, 1].max()))

    def signed_distance(self, pts):
        P = _as_points(pts)
        xq = np.abs(P[:, 0])
        yq = P[:, 1]
        best = np.full(len(P), np.inf)
        sd = np.zeros(len(P))
        for fold in (1.0, -1.0):
            x = fold * xq
            for p in self.pieces:
                if p.curvature == 0.0:
                    c, sn = math.cos(p.theta0), math.sin(p.theta0)
                    wx, wy = x - p.start[0], yq - p.start[1]
                    t = np.clip(wx * c + wy * sn, 0.0, p.length)
                    fx, fy = p.start[0] + t * c, p.start[1] + t * sn
                    nux, nuy = sn, -c
                else:
                    cx, cy = p.center
                    R = 1.0 / abs(p.curvature)
                    sgn = math.copysign(1.0, p.curvature)
                    phi = np.arctan2(yq - cy, x - cx)
                    phi_a = p.theta0 - sgn * math.pi / 2.0
                    span = p.curvature * p.length
                    # angular offset from the arc start, oriented with the span;
                    # overshoot past the far end wraps to whichever end is nearer
                    off = np.mod(sgn * (phi - phi_a), 2.0 * math.pi)
                    over = off > abs(span)
                    off = np.where(over,
                                   np.where(off - abs(span) <= 2.0 * math.pi - off,
                                            abs(span), 0.0),
                                   off)
                    phi_c = phi_a + sgn * off
                    fx = cx + R * np.cos(phi_c)
                    fy = cy + R * np.sin(phi_c)
                    nux = sgn * np.cos(phi_c)
                    nuy = sgn * np.sin(phi_c)
                d = np.hypot(x - fx, yq - fy)
                closer = d < best
                best = np.where(closer, d, best)
                sdi = (x - fx) * nux + (yq - fy) * nuy
                sd = np.where(closer, np.where(np.abs(sdi) > 0, np.sign(sdi), 1.0) * d, sd)
        return sd if sd.shape else float(sd)


class SplineDomain(PlanarDomain):
    """Mirrored clamped-cubic boundary.

    Control points trace the right half from the origin to the top axis
    crossing; the parametric cubic is clamped to tangent (1,0) at the origin
    and (-1,0) at the top, and the left half is the mirror image.
    """

    def __init__(self, points):
        P = np.asarray(points, dtype=float)
        if P.ndim != 2 or P.shape[1] != 2 or len(P) < 3:
            raise ValueError("need at least 3 control points, shape (n, 2)")
        if abs(P[0, 0]) > 1e-12 or abs(P[0, 1]) > 1e-12:
            raise ValueError("first control point must be the origin")
        if abs(P[-1, 0]) > 1e-12 or P[-1, 1] <= 0:
            raise ValueError("last control point must sit on x = 0 above the origin")
        if np.any(P[1:-1, 0] <= 0):
            raise ValueError("interior control points must have x > 0")
        chord = np.hypot(*np.diff(P, axis=0).T)
        t = np.concatenate([[0.0], np.cumsum(chord)])
        scale = float(np.mean(chord))
        # clamp the parametric tangent to (1,0) at the origin, (-1,0) at the top
        self._sx = CubicSpline(t, P[:, 0], bc_type=((1, scale), (1, -scale)))
        self._sy = CubicSpline(t, P[:, 1], bc_type=((1, 0.0), (1, 0.0)))
        self._tmax = float(t[-1])
        self.top = float(P[-1, 1])
        self.spec = {"type": "spline", "points": [list(map(float, q)) for q in P]}
        # arclength table over the right half: Gauss-Legendre panels aligned
        # with the spline knots (the speed is smooth only within knot spans)
        nodes, weights = _GL_NODES, _GL_WEIGHTS
        knots = self._sx.x
        sub = np.linspace(0.0, 1.0, 129)
        tp = np.unique(np.concatenate(
            [knots[i] + sub * (knots[i + 1] - knots[i]) for i in range(len(knots) - 1)]
        ))
        mid = 0.5 * (tp[1:] + tp[:-1])
        halfw = 0.5 * np.diff(tp)
        tq = mid[:, None] + halfw[:, None] * nodes[None, :]
        speed = np.hypot(self._sx(tq, 1), self._sy(tq, 1))
        seg = (speed * weights[None, :]).sum(axis=1) * halfw
        self._t_table = tp
        self._s_table = np.concatenate([[0.0], np.cumsum(seg)])
        self._half_len = float(self._s_table[-1])

    def perimeter(self) -> float:
        return 2.0 * self._half_len

    def _param(self, s_abs):
        s_abs = np.asarray(s_abs, dtype=float)
        t = np.interp(s_abs, self._s_table, self._t_table)
        for _ in range(40):
            # refine with ds/dt = speed; arc from nearest table node by GL
            i = np.clip(np.searchsorted(self._s_table, s_abs) - 1, 0, len(self._t_table) - 2)
            f = self._arc_from(self._t_table[i], t) + self._s_table[i] - s_abs
            v = np.hypot(self._sx(t, 1), self._sy(t, 1))
            step = f / v
            t = np.clip(t - step, 0.0, self._tmax)
            if np.max(np.abs(step)) < 1e-14:
                break
        return t

    def _arc_from(self, t0, t1):
        nodes, weights = _GL_NODES, _GL_WEIGHTS
        mid = 0.5 * (t0 + t1)
        halfw = 0.5 * (t1 - t0)
        tq = mid[..., None] + halfw[..., None] * nodes
        speed = np.hypot(self._sx(tq, 1), self._sy(tq, 1))
        return (speed * weights).sum(axis=-1) * halfw

    def _eval_right(self, t, der=0):
        return np.stack([self._sx(t, der), self._sy(t, der)], axis=-1)

    def curve(self, s):
        s = np.asarray(s, dtype=float)
        t = self._param(np.abs(s))
        p = self._eval_right(t)
        p[..., 0] = np.where(s < 0, -p[..., 0], p[..., 0])
        return p

    def curve_tangent(self, s):
        s = np.asarray(s, dtype=float)
        t = self._param(np.abs(s))
        d = self._eval_right(t, 1)
        v = np.hypot(d[..., 0], d[..., 1])
        T = d / v[..., None]
        T[..., 1] = np.where(s < 0, -T[..., 1], T[..., 1])
        return T

    def _curv_t(self, t):
        d1 = self._eval_right(t, 1)
        d2 = self._eval_right(t, 2)
        v2 = d1[..., 0] ** 2 + d1[..., 1] ** 2
        w = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return w / v2**1.5

    def curve_curvature(self, s):
        t = self._param(np.abs(np.asarray(s, dtype=float)))
        return self._curv_t(t)

    def curve_curvature_rate(self, s):
        s = np.asarray(s, dtype=float)
        t = self._param(np.abs(s))
        d1 = self._eval_right(t, 1)
        d2 = self._eval_right(t, 2)
        d3 = self._eval_right(t, 3)
        v2 = d1[..., 0] ** 2 + d1[..., 1] ** 2
        v = np.sqrt(v2)
        w = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        wp = d1[..., 0] * d3[..., 1] - d1[..., 1] * d3[..., 0]
        dK_dt = (wp * v2 - 3.0 * w * (d1[..., 0] * d2[..., 0] + d1[..., 1] * d2[..., 1])) / v2**2.5
        rate = dK_dt / v
        return np.where(s < 0, -rate, rate)

    def bbox(self):
        t = np.linspace(0.0, self._tmax, 512)
        p = self._eval_right(t)
        return (-float(p[:, 0].max()), float(p[:, 0].max()), 0.0, float(p[:, 1].max()))

    def signed_distance(self, pts):
        P = _as_points(pts)
        tgrid = np.linspace(0.0, self._tmax, 1024)
        bx, by = self._sx(tgrid), self._sy(tgrid)
        xq = np.abs(P[:, 0])
        yq = P[:, 1]
        best = np.full(len(P), np.inf)
        sd = np.zeros(len(P))
        for fold in (1.0, -1.0):
            x = fold * xq
            d2 = (x[:, None] - bx[None, :]) ** 2 + (yq[:, None] - by[None, :]) ** 2
            t = tgrid[np.argmin(d2, axis=1)]
            for _ in range(40):
                fx, fy = self._sx(t), self._sy(t)
                tx, ty = self._sx(t, 1), self._sy(t, 1)
                gx, gy = x - fx, yq - fy
                g = gx * tx + gy * ty
                gp = -(tx * tx + ty * ty) + gx * self._sx(t, 2) + gy * self._sy(t, 2)
                step = g / np.where(np.abs(gp) > 1e-300, gp, 1.0)
                t = np.clip(t - step, 0.0, self._tmax)
                if np.max(np.abs(step)) < 1e-15:
                    break
            fx, fy = self._sx(t), self._sy(t)
            tx, ty = self._sx(t, 1), self._sy(t, 1)
            v = np.hypot(tx, ty)
            nux, nuy = ty / v, -tx / v
            d = np.hypot(x - fx, yq - fy)
            closer = d < best
            best = np.where(closer, d, best)
            sdi = (x - fx) * nux + (yq - fy) * nuy
            sd = np.where(closer, np.where(sdi >= 0, 1.0, -1.0) * d, sd)
        return sd if sd.shape else float(sd)


def load_domain(spec) -> PlanarDomain:
    """Build a domain from a JSON-style dict (or a path to one)."""
    if isinstance(spec, (str,)):
        with open(spec) as f:
            spec = json.load(f)
    kind = spec.get("type")
    if kind == "ellipse":
        return EllipseDomain(spec["a"], spec["b"])
    if kind == "disk":
        return DiskDomain(spec["radius"])
    if kind == "arcs":
        centers = [e.get("center") for e in spec["arcs"]]
        centers = centers if any(c is not None for c in centers) else None
        return ArcsDomain(spec["arcs"], centers=centers)
    if kind == "spline":
        return SplineDomain(spec["points"])
    raise ValueError(f"unknown domain type: {kind!r}")


# ---------------------------------------------------------------------------
# boundary chart
# ---------------------------------------------------------------------------

CHART_COLUMNS = ["s", "alpha", "beta", "alphap", "betap", "K", "Kp"]


@dataclass
class BoundaryChart:
    """Sampled arclength data for a boundary piece, with cubic interpolation."""

    domain: PlanarDomain
    s0: float
    s: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    alphap: np.ndarray
    betap: np.ndarray
    alphapp: np.ndarray
    betapp: np.ndarray
    K: np.ndarray
    Kp: np.ndarray
    _interp: dict = field(default_factory=dict, repr=False)

    def _spline(self, name):
        sp = self._interp.get(name)
        if sp is None:
            sp = CubicSpline(self.s, getattr(self, name))
            self._interp[name] = sp
        return sp

    def _eval(self, name, s):
        return self._spline(name)(np.asarray(s, dtype=float))

    def gamma(self, s):
        return np.stack([self._eval("alpha", s), self._eval("beta", s)], axis=-1)

    def tangent(self, s):
        return np.stack([self._eval("alphap", s), self._eval("betap", s)], axis=-1)

    def normal(self, s):
        return np.stack([-self._eval("betap", s), self._eval("alphap", s)], axis=-1)

    def curvature(self, s):
        return self._eval("K", s)

    def curvature_rate(self, s):
        return self._eval("Kp", s)

    def radius(self, s):
        """Radius of curvature; +inf on flat (or concave) pieces."""
        K = np.asarray(self.curvature(s), dtype=float)
        with np.errstate(divide="ignore"):
            R = np.where(K > FLAT_CURVATURE, 1.0 / np.where(K > FLAT_CURVATURE, K, 1.0), np.inf)
        return R

    @property
    def max_curvature(self) -> float:
        m = self.s >= 0.0
        return float(np.max(self.K[m]))

    def point(self, r, s):
        r = np.asarray(r, dtype=float)
        return self.gamma(s) + r[..., None] * self.normal(s)

    def to_csv(self, path):
        data = np.column_stack([self.s, self.alpha, self.beta,
                                self.alphap, self.betap, self.K, self.Kp])
        header = ",".join(CHART_COLUMNS)
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def build_chart(domain: PlanarDomain, s0: float, samples: int = 2048) -> BoundaryChart:
    """Sample the boundary piece |s| <= s0 on a uniform arclength grid.

    Raises ValueError when s0 is not below half the perimeter, and checks the
    arclength and curvature-identity invariants of the construction.
    """
    if not (0 < s0 < domain.perimeter() / 2.0):
        raise ValueError(
            f"s0 = {s0} must lie in (0, half perimeter = {domain.perimeter() / 2.0:.6g})"
        )
    n = max(2048, int(samples))
    sr = np.linspace(0.0, float(s0), n + 1)
    g = domain.curve(sr)
    tg = domain.curve_tangent(sr)
    K = domain.curve_curvature(sr)
    Kp = domain.curve_curvature_rate(sr)
    # exact anchoring at s = 0
    g[0] = (0.0, 0.0)
    tg[0] = (1.0, 0.0)
    # mirror to s < 0: alpha odd, beta even, K even, Kp odd
    s = np.concatenate([-sr[:0:-1], sr])
    alpha = np.concatenate([-g[:0:-1, 0], g[:, 0]])
    beta = np.concatenate([g[:0:-1, 1], g[:, 1]])
    alphap = np.concatenate([tg[:0:-1, 0], tg[:, 0]])
    betap = np.concatenate([-tg[:0:-1, 1], tg[:, 1]])
    Kfull = np.concatenate([K[:0:-1], K])
    Kpfull = np.concatenate([-Kp[:0:-1], Kp])
    # gamma'' = K * N for an arclength parametrization
    alphapp = -Kfull * betap
    betapp = Kfull * alphap
    speed_err = np.max(np.abs(np.hypot(alphap, betap) - 1.0))
    if speed_err > 1e-9:
        raise ValueError(f"arclength parametrization off by {speed_err:.3e}")
    _check_curvature_identities(alphap, betap, alphapp, betapp, Kfull)
    return BoundaryChart(domain, float(s0), s, alpha, beta, alphap, betap,
                         alphapp, betapp, Kfull, Kpfull)


def _check_curvature_identities(ap, bp, app, bpp, K):
    """det, beta''/alpha' and -alpha''/beta' must agree where defined."""
    det = ap * bpp - bp * app
    if np.max(np.abs(det - K)) > 1e-7:
        raise ValueError("curvature determinant identity violated")
    m = np.abs(ap) > 1e-6
    if np.any(np.abs(bpp[m] / ap[m] - K[m]) > 1e-7):
        raise ValueError("curvature identity beta''/alpha' violated")
    m = np.abs(bp) > 1e-6
    if np.any(np.abs(-app[m] / bp[m] - K[m]) > 1e-7):
        raise ValueError("curvature identity -alpha''/beta' violated")


# ---------------------------------------------------------------------------
# admissible region and the offset map
# ---------------------------------------------------------------------------

@dataclass
class FlowRegion:
    """Admissible (r, s) rectangle-with-graph-top over a chart.

    rmax(s) is the curvature radius capped, when y0 is finite, by the offset
    at which the image crosses the line y = y0.  ``symmetric`` widens the
    s-range from [0, s0] to [-s0, s0].
    """

    chart: BoundaryChart
    y0: float = math.inf
    symmetric: bool = False

    def rmax(self, s):
        s = np.asarray(s, dtype=float)
        R = self.chart.radius(s)
        if not math.isfinite(self.y0):
            return R
        ap = self.chart._eval("alphap", s)
        b = self.chart._eval("beta", s)
        with np.errstate(divide="ignore", invalid="ignore"):
            cap = np.where(ap > 1e-14, (self.y0 - b) / np.where(ap > 1e-14, ap, 1.0), np.inf)
        cap = np.where(b >= self.y0, 0.0, np.maximum(cap, 0.0))
        return np.minimum(R, cap)

    def contains(self, r, s, tol: float = 0.0):
        r = np.asarray(r, dtype=float)
        s = np.asarray(s, dtype=float)
        lo = -self.chart.s0 if self.symmetric else 0.0
        ok = (s >= lo - tol) & (s <= self.chart.s0 + tol) & (r >= -tol)
        ok &= r < self.rmax(s) + tol
        return ok

    def bounding_box(self, n: int = 256):
        s = np.linspace(-self.chart.s0 if self.symmetric else 0.0, self.chart.s0, n)
        rm = np.minimum(self.rmax(s), 1e6)
        pts = np.vstack([self.chart.point(np.zeros_like(s), s),
                         self.chart.point(rm, s)])
        pad = 1e-6
        return (float(pts[:, 0].min()) - pad, float(pts[:, 0].max()) + pad,
                float(pts[:, 1].min()) - pad, float(pts[:, 1].max()) + pad)


def map_M(chart: BoundaryChart, r, s, check: bool = True):
    """Offset map (r, s) -> gamma(s) + r N(s)."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if check:
        R = chart.radius(s)
        bad = (np.abs(s) > chart.s0 + 1e-12) | (r < -1e-12) | (r >= R)
        if np.any(bad):
            raise OutsideRegionError("coordinates outside the admissible collar")
    return chart.gamma(s) + r[..., None] * chart.normal(s)


def jacobian_M(chart: BoundaryChart, r, s, check: bool = True):
    """Jacobian determinant of the offset map: K(s) r - 1 (negative in-region)."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if check:
        R = chart.radius(s)
        bad = (np.abs(s) > chart.s0 + 1e-12) | (r < -1e-12) | (r >= R)
        if np.any(bad):
            raise OutsideRegionError("coordinates outside the admissible collar")
    return chart.curvature(s) * r - 1.0


def curvature_center(chart: BoundaryChart, s):
    """Center of the osculating circle; raises CenterAtInfinity on flat pieces."""
    K = float(chart.curvature(s))
    if K <= FLAT_CURVATURE:
        raise CenterAtInfinity(f"curvature {K:.3e} at s = {s}: center at infinity")
    g = chart.gamma(s)
    n = chart.normal(s)
    return g + n / K


def try_invert(region: FlowRegion, pts, tol: float = 1e-10, maxiter: int = 50,
               seeds: int = 256):
    """Vectorized inversion of the offset map.

    Any preimage satisfies e(s) := (P - gamma(s)) . T(s) = 0 with r then the
    normal component.  Along s the derivative of e is r K(s) - 1, which is
    negative exactly on the admissible branch, so decreasing sign changes of
    e on a coarse scan isolate the in-region root; bisection plus a Newton
    polish finishes the job.  Returns (r, s, converged, in_region); converged
    coordinates outside the region are reported so containment margins stay
    quantitative.
    """
    P = _as_points(pts)
    chart = region.chart
    lo = -chart.s0 if region.symmetric else 0.0
    hi = chart.s0
    sgrid = np.linspace(lo, hi, seeds)
    gpts = chart.gamma(sgrid)
    tpts = chart.tangent(sgrid)
    ev = ((P[:, None, :] - gpts[None, :, :]) * tpts[None, :, :]).sum(axis=2)
    # decreasing crossings (admissible branch); fall back to any crossing,
    # then to the scan minimum of |e|
    dec = (ev[:, :-1] >= 0.0) & (ev[:, 1:] <= 0.0)
    anyx = ev[:, :-1] * ev[:, 1:] <= 0.0
    idx_dec = np.argmax(dec, axis=1)
    idx_any = np.argmax(anyx, axis=1)
    idx_min = np.argmin(np.abs(ev), axis=1)
    has_dec = dec.any(axis=1)
    has_any = anyx.any(axis=1)
    i0 = np.where(has_dec, idx_dec, np.where(has_any, idx_any, np.minimum(idx_min, seeds - 2)))
    a = sgrid[i0]
    b = sgrid[i0 + 1]
    bracket = has_dec | has_any

    def _ev(sv):
        return ((P - chart.gamma(sv)) * chart.tangent(sv)).sum(axis=1)

    fa = _ev(a)
    for _ in range(50):
        mid = 0.5 * (a + b)
        fm = _ev(mid)
        left = fa * fm <= 0.0
        b = np.where(bracket & left, mid, b)
        a = np.where(bracket & ~left, mid, a)
        fa = np.where(bracket & ~left, fm, fa)
    s = np.where(bracket, 0.5 * (a + b), sgrid[i0])
    g0 = chart.gamma(s)
    r = ((P - g0) * chart.normal(s)).sum(axis=1)
    resid = np.full(len(P), np.inf)
    for _ in range(maxiter):
        g = chart.gamma(s)
        nrm = chart.normal(s)
        tanv = chart.tangent(s)
        K = chart.curvature(s)
        e = P - (g + r[:, None] * nrm)
        resid = np.hypot(e[:, 0], e[:, 1])
        if np.all(resid < 1e-14):
            break
        denom = 1.0 - r * K
        denom = np.where(np.abs(denom) < 1e-12, np.copysign(1e-12, denom + 1e-300), denom)
        r = r + (e * nrm).sum(axis=1)
        s = np.clip(s + (e * tanv).sum(axis=1) / denom,
                    lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
    converged = resid < tol
    in_region = converged & region.contains(r, s, tol=1e-9)
    return r, s, converged, in_region


def invert_M(region: FlowRegion, point, tol: float = 1e-10, maxiter: int = 50):
    """Invert the offset map for one point; OutsideRegionError when it fails."""
    r, s, conv, ok = try_invert(region, np.asarray(point, dtype=float)[None, :],
                                tol=tol, maxiter=maxiter)
    if not conv[0]:
        raise OutsideRegionError("inversion did not converge: point outside the collar")
    if not ok[0]:
        raise OutsideRegionError(
            f"inverse ({r[0]:.6g}, {s[0]:.6g}) lies outside the admissible region"
        )
    return float(r[0]), float(s[0])
