"""Localized initial bumps: construction, rasterization, and validation.

The bump is a radially mollified plateau around a point one ball-radius
inside the boundary:

    u0(x, y) = C2 * phi(|P - (x0 + eps * nu_in)| / (eps/2)),

where phi is 1 on [0, 1], 0 on [3/2, inf) and smoothly nonincreasing in
between.  The support then sits strictly inside the domain and inside the
ball of radius rho/2 about the base point whenever eps < rho/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundaryChart, FlowRegion, PlanarDomain, map_M


def _glue(z):
    """exp(-1/z) extended by zero: the standard smooth step ingredient."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = np.exp(-1.0 / z[pos])
    return out


def mollifier(x):
    """C-infinity profile: 1 on [0, 1], 0 on [3/2, inf), nonincreasing."""
    x = np.asarray(x, dtype=float)
    t = np.clip((x - 1.0) * 2.0, 0.0, 1.0)
    fa = _glue(1.0 - t)
    fb = _glue(t)
    return fa / (fa + fb + 1e-300)


def mollifier_slope(x):
    """Derivative of the profile (vanishes outside (1, 3/2))."""
    x = np.asarray(x, dtype=float)
    t = (x - 1.0) * 2.0
    inside = (t > 0.0) & (t < 1.0)
    ts = np.where(inside, t, 0.5)
    fa = _glue(1.0 - ts)
    fb = _glue(ts)
    dfa = -fa / (1.0 - ts) ** 2
    dfb = fb / ts**2
    g = (dfa * (fa + fb) - fa * (dfa + dfb)) / (fa + fb) ** 2
    return np.where(inside, 2.0 * g, 0.0)


@dataclass
class BumpSpec:
    """Geometry and amplitudes of the seeding bump.

    c1/c2 are the user-facing threshold and cap amplitudes; p fixes the
    seeding exponent (p-2)/(p-1) used by the lower-bound check.
    """

    rho: float
    eps: float
    c1: float
    c2: float
    p: float
    x0: tuple = (0.0, 0.0)

    @property
    def exponent(self) -> float:
        return (self.p - 2.0) / (self.p - 1.0)

    def invariants(self):
        errs = []
        if not 0 < self.eps < self.rho / 4.0:
            errs.append("eps must lie in (0, rho/4)")
        if self.c1 * self.eps**self.exponent >= self.c2:
            errs.append("need c1 * eps^((p-2)/(p-1)) < c2")
        if self.c2 <= 0 or self.c1 <= 0:
            errs.append("amplitudes must be positive")
        return errs


class Bump:
    """Analytic bump profile bound to a domain (center resolved from x0)."""

    def __init__(self, spec: BumpSpec, domain: PlanarDomain, validate: bool = True):
        self.spec = spec
        self.domain = domain
        x0 = np.asarray(spec.x0, dtype=float)
        if np.allclose(x0, 0.0):
            nu_in = np.array([0.0, 1.0])
        else:
            # inward normal at the nearest boundary point
            h = 1e-6
            sd0 = float(domain.signed_distance([x0])[0])
            gx = float(domain.signed_distance([x0 + [h, 0]])[0] - sd0) / h
            gy = float(domain.signed_distance([x0 + [0, h]])[0] - sd0) / h
            nu_in = -np.array([gx, gy]) / math.hypot(gx, gy)
        self.center = x0 + spec.eps * nu_in
        if validate:
            errs = spec.invariants()
            sd_c = float(domain.signed_distance([self.center])[0])
            if sd_c > -spec.eps + 1e-9:
                errs.append(
                    f"ball of radius eps around the center exits the domain "
                    f"(signed distance {sd_c:.3e} > {-spec.eps:.3e})")
            if errs:
                raise ValueError("; ".join(errs))

    def value(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rho = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        return self.spec.c2 * mollifier(rho / (self.spec.eps / 2.0))

    def gradient(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        rho = np.hypot(d[:, 0], d[:, 1])
        rs = np.where(rho > 0, rho, 1.0)
        slope = self.spec.c2 * mollifier_slope(rho / (self.spec.eps / 2.0)) \
            / (self.spec.eps / 2.0)
        return slope[:, None] * d / rs[:, None]


def make_bump(spec: BumpSpec, grid, validate: bool = True):
    """Rasterize the bump onto a grid (zero outside the domain).

    Rejects grids coarser than eps/2; flags h in (eps/8, eps/2] as coarse in
    the field's validation report rather than refusing.  Values are computed
    from |x| so mirrored nodes carry bitwise-equal values.
    """
    from .solver import GridField

    if grid.hmin > spec.eps / 2.0 + 1e-12:
        raise ValueError(
            f"grid too coarse for the bump: h = {grid.hmin:.4g} > eps/2 = {spec.eps / 2:.4g}")
    bump = Bump(spec, grid.domain, validate=validate)
    X, Y = grid.meshgrid()
    pts = np.column_stack([np.abs(X.ravel()), Y.ravel()])
    vals = bump.value(pts).reshape(grid.shape)
    vals[~grid.evolved] = 0.0
    return GridField(grid, vals)


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v["passed"] for v in self.checks.values())

    def add(self, name, passed, margin, witness=None):
        self.checks[name] = {"passed": bool(passed), "margin": float(margin),
                             "witness": witness}

    def __str__(self):
        rows = [f"{k:<22} {str(v['passed']):<6} margin {v['margin']:.3e}"
                + (f"  at {v['witness']}" if v["witness"] is not None else "")
                for k, v in self.checks.items()]
        rows += [f"note: {n}" for n in self.notes]
        return "\n".join(rows)


def validate_u0(u0, spec: BumpSpec, chart: BoundaryChart = None,
                region: FlowRegion = None) -> ValidationReport:
    """Check support, amplitude cap, seeding floor, symmetry, monotonicity.

    The tangential-sign check (when a chart is given) uses the frame change
    from discrete Cartesian partials; its tolerance scales with the profile's
    third derivative times h^2 and is reported, not hidden.
    """
    from .solver import Stencil

    grid = u0.grid
    rep = ValidationReport()
    X, Y = grid.meshgrid()
    vals = u0.values
    x0 = np.asarray(spec.x0, dtype=float)

    nz = vals > 0
    if nz.any():
        d = np.hypot(X[nz] - x0[0], Y[nz] - x0[1])
        i = int(np.argmax(d))
        rep.add("support_in_half_ball", d.max() <= spec.rho / 2.0,
                spec.rho / 2.0 - float(d.max()),
                (float(X[nz][i]), float(Y[nz][i])))
    else:
        rep.add("support_in_half_ball", True, math.inf)
    rep.add("sup_below_cap", vals.max() <= spec.c2 + 1e-12,
            float(spec.c2 - vals.max()))

    center = np.array([x0[0], x0[1] + spec.eps]) if np.allclose(x0, 0.0) else None
    if center is None:
        center = Bump(spec, grid.domain, validate=False).center
    ball = (np.hypot(X - center[0], Y - center[1]) <= spec.eps / 2.0) & grid.inside
    floor = spec.c1 * spec.eps**spec.exponent
    if ball.any():
        rep.add("seeding_floor", vals[ball].min() >= floor,
                float(vals[ball].min() - floor))
    else:
        rep.add("seeding_floor", False, -floor)
        rep.notes.append("no grid node inside the seeding half-ball")

    mirr = np.abs(vals - vals[:, ::-1])
    iy, ix = np.unravel_index(int(np.argmax(mirr)), mirr.shape)
    rep.add("mirror_symmetry", float(mirr.max()) == 0.0, -float(mirr.max()),
            (float(X[iy, ix]), float(Y[iy, ix])))

    st = Stencil(grid)
    gx, gy = st.gradient(vals)
    right = grid.evolved & (X > grid.hx * (1.0 + 1e-12))
    if right.any():
        worst = float(gx[right].max())
        i = int(np.argmax(gx[right]))
        rep.add("x_monotone", worst <= 1e-12, -worst,
                (float(X[right][i]), float(Y[right][i])))

    if grid.hmin > spec.eps / 8.0:
        rep.notes.append(
            f"coarse raster: h = {grid.hmin:.3g} > eps/8 = {spec.eps / 8:.3g}; "
            "discrete derivative checks carry O((h/eps)^2) noise")

    if chart is not None and region is not None:
        # tangential sign on the pullback lattice via the frame change
        rr, ss, pts, keep = pullback_lattice(grid, chart, region, 24, 24)
        gxv = _bilinear(grid, gx, pts)
        gyv = _bilinear(grid, gy, pts)
        ap = chart._eval("alphap", ss)
        bp = chart._eval("betap", ss)
        om = 1.0 - rr * chart.curvature(ss)
        us = om * (ap * gxv + bp * gyv)
        tol = 60.0 * spec.c2 * (grid.hmin * 2.0 / spec.eps) ** 2 * (2.0 / spec.eps)
        i = int(np.argmax(us))
        rep.add("tangential_sign", float(us.max()) <= tol, float(tol - us.max()),
                (float(pts[i, 0]), float(pts[i, 1])))
        rep.notes.append(f"tangential tolerance {tol:.3e} (resolution-scaled)")
    return rep


def pullback_lattice(grid, chart, region, n_r, n_s, r_min=None, s_max=None):
    """Fixed (r, s) sample lattice inside the working region and the domain."""
    r_min = grid.hmin if r_min is None else r_min
    s_hi = chart.s0 if s_max is None else s_max
    svals = np.linspace(0.0, s_hi, n_s)
    rmax = np.minimum(region.rmax(svals), 10.0 * chart.s0)
    rr = []
    ss = []
    for sj, rm in zip(svals, rmax):
        if rm <= r_min:
            continue
        rs = np.linspace(r_min, 0.98 * rm, n_r)
        rr.append(rs)
        ss.append(np.full_like(rs, sj))
    rr = np.concatenate(rr) if rr else np.empty(0)
    ss = np.concatenate(ss) if ss else np.empty(0)
    pts = map_M(chart, rr, ss, check=False)
    keep = grid.domain.contains(pts) & (pts[:, 1] < region.y0 - 1e-12
                                        if math.isfinite(region.y0)
                                        else np.ones(len(pts), bool))
    # keep only points bilinearly interpolable from evolved/inside values
    return rr[keep], ss[keep], pts[keep], keep


def _bilinear(grid, field_values, pts):
    """Plain bilinear interpolation on the full lattice (zeros outside)."""
    fx = (pts[:, 0] - grid.x[0]) / grid.hx
    fy = (pts[:, 1] - grid.y[0]) / grid.hy
    ix = np.clip(fx.astype(int), 0, len(grid.x) - 2)
    iy = np.clip(fy.astype(int), 0, len(grid.y) - 2)
    tx = np.clip(fx - ix, 0.0, 1.0)
    ty = np.clip(fy - iy, 0.0, 1.0)
    v00 = field_values[iy, ix]
    v01 = field_values[iy, ix + 1]
    v10 = field_values[iy + 1, ix]
    v11 = field_values[iy + 1, ix + 1]
    return ((1 - ty) * ((1 - tx) * v00 + tx * v01)
            + ty * ((1 - tx) * v10 + tx * v11))


def check_us_sign_at_t0(bump: Bump, chart: BoundaryChart, region: FlowRegion,
                        n_r: int = 48, n_s: int = 48, r_min: float = 1e-4):
    """Worst tangential-sign margin min(-u0_s) from the analytic profile.

    Evaluates u0_s = (1 - rK)(alpha' u0_x + beta' u0_y) on a region lattice
    restricted to the domain; returns (margin, witness point).
    """
    svals = np.linspace(1e-9, chart.s0, n_s)
    rmax = np.minimum(region.rmax(svals), 10.0 * chart.s0)
    rr, ss = [], []
    for sj, rm in zip(svals, rmax):
        if rm <= r_min:
            continue
        rs = np.linspace(r_min, 0.98 * rm, n_r)
        rr.append(rs)
        ss.append(np.full_like(rs, sj))
    rr = np.concatenate(rr)
    ss = np.concatenate(ss)
    pts = map_M(chart, rr, ss, check=False)
    keep = bump.domain.contains(pts)
    if math.isfinite(region.y0):
        keep &= pts[:, 1] < region.y0
    rr, ss, pts = rr[keep], ss[keep], pts[keep]
    grad = bump.gradient(pts)
    ap = chart._eval("alphap", ss)
    bp = chart._eval("betap", ss)
    om = 1.0 - rr * chart.curvature(ss)
    us = om * (ap * grad[:, 0] + bp * grad[:, 1])
    i = int(np.argmax(us))
    return float(-us[i]), (float(pts[i, 0]), float(pts[i, 1]))
