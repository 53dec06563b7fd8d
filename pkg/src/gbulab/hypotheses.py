"""Numerical certification of the geometric hypotheses behind the experiment.

Eight conditions are checked for a (domain, chart, y0) triple:

    SYM        mirror symmetry across x = 0
    CURV       K(0) >= 0 and K nondecreasing on [0, s0]
    TANG       alpha', beta' > 0 on (0, s0)  (strict; flat pieces fail)
    XCONV      outward normal has nu_x >= 0 on the right half boundary
    NUY        nu_y >= 0 on the boundary part inside the offset fan (r > 0)
    REFL_S0    reflection across the normal line at s0 maps the right cap in
    REFL_PLUS  reflection across y = y0 maps the upper cap in (vacuous y0=inf)
    CENTEROUT  the closure of the working region stays strictly below the
               curvature-radius graph (r < R(s) with positive clearance)

Margins are signed worst cases over deterministic sample sets; a report
passes when every applicable margin clears its threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ArcsDomain,
    BoundaryChart,
    DiskDomain,
    EllipseDomain,
    FlowRegion,
    PlanarDomain,
    build_chart,
    try_invert,
)

PASS_TOL = 1e-9          # containment/sign margins may touch zero by this much
STRICT_TOL = 1e-9        # strict containments need clearance above this
TANG_FLOOR = 1e-12       # strict positivity floor for tangent components

CONDITIONS = ["SYM", "CURV", "TANG", "XCONV", "NUY", "REFL_S0", "REFL_PLUS",
              "CENTEROUT"]


@dataclass
class ConditionResult:
    id: str
    passed: bool
    margin: float
    witness: tuple | None = None
    note: str = ""

    def to_dict(self):
        return {
            "id": self.id,
            "passed": bool(self.passed),
            "margin": float(self.margin),
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "note": self.note,
        }


@dataclass
class HypothesisReport:
    conditions: dict
    s0: float
    y0: float
    suggested_s0: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def to_json(self) -> str:
        payload = {
            "passed": self.passed,
            "s0": float(self.s0),
            "y0": None if math.isinf(self.y0) else float(self.y0),
            "suggested_s0": self.suggested_s0,
            "conditions": {k: v.to_dict() for k, v in self.conditions.items()},
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def table(self) -> str:
        rows = [f"{'condition':<10} {'pass':<5} {'margin':>13}  witness / note"]
        for cid in CONDITIONS:
            c = self.conditions[cid]
            wit = "" if c.witness is None else f"({c.witness[0]:.4g}, {c.witness[1]:.4g})"
            note = f" {c.note}" if c.note else ""
            rows.append(f"{cid:<10} {str(c.passed):<5} {c.margin:>13.4e}  {wit}{note}")
        rows.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(rows)


def _reflect_across_line(pts, point, direction):
    """Reflect points across the line through ``point`` with unit ``direction``."""
    w = pts - point
    proj = (w * direction).sum(axis=1)[:, None] * direction
    return point + 2.0 * proj - w


def _interior_samples(domain, n, rng, bbox=None, halfspace=None, max_draw=400000):
    """Rejection-sample interior points, optionally inside a half-plane."""
    x0, x1, y0, y1 = bbox if bbox is not None else domain.bbox()
    out = []
    got = 0
    drawn = 0
    while got < n and drawn < max_draw:
        m = min(4 * n, max_draw - drawn)
        pts = np.column_stack([rng.uniform(x0, x1, m), rng.uniform(y0, y1, m)])
        drawn += m
        keep = domain.contains(pts)
        if halfspace is not None:
            q, u = halfspace
            keep &= ((pts - q) * u).sum(axis=1) > 0
        pts = pts[keep]
        out.append(pts)
        got += len(pts)
    return np.vstack(out) if out else np.empty((0, 2))


def check_reflection(domain: PlanarDomain, line_point, line_dir, half_normal,
                     n: int = 10000, seed: int = 0, boundary_pts=None):
    """Reflect the half-region {(P - q) . h > 0} across the line (q, u).

    Returns (passed, margin, witness, note); the margin is the worst signed
    clearance of the reflected samples (negative = escapes the domain).
    """
    q = np.asarray(line_point, dtype=float)
    u = np.asarray(line_dir, dtype=float)
    u = u / np.hypot(*u)
    h = np.asarray(half_normal, dtype=float)
    rng = np.random.default_rng(seed)
    samples = _interior_samples(domain, n, rng, halfspace=(q, h))
    note = ""
    if boundary_pts is not None:
        side = ((boundary_pts - q) * h).sum(axis=1) > 1e-12
        samples = np.vstack([samples, boundary_pts[side]]) if side.any() else samples
    if len(samples) == 0:
        return True, math.inf, None, "empty half-region: vacuous pass"
    if len(samples) < n:
        note = f"half-region thin: {len(samples)} samples accepted"
    refl = _reflect_across_line(samples, q, u)
    sd = domain.signed_distance(refl)
    worst = int(np.argmax(sd))
    margin = float(-sd[worst])
    return margin >= -PASS_TOL, margin, tuple(refl[worst]), note


def check_all(domain: PlanarDomain, chart: BoundaryChart, y0: float,
              region_samples: int = 10000, boundary_samples: int = 4096,
              seed: int = 0) -> HypothesisReport:
    """Evaluate all eight conditions on deterministic sample sets."""
    s0 = chart.s0
    rng = np.random.default_rng(seed)
    conditions = {}
    bpts, bnu, bs = domain.boundary_points(boundary_samples)

    # SYM: reflected interior must stay inside; mirrored boundary samples land
    # on the boundary exactly
    pts = _interior_samples(domain, region_samples, rng)
    refl = pts * np.array([-1.0, 1.0])
    sd = domain.signed_distance(refl)
    worst = int(np.argmax(sd))
    bdev = float(np.max(np.abs(domain.signed_distance(bpts * np.array([-1.0, 1.0])))))
    conditions["SYM"] = ConditionResult(
        "SYM", float(-sd[worst]) >= -PASS_TOL, float(-sd[worst]), tuple(refl[worst]),
        f"boundary mirror deviation {bdev:.2e}")

    # CURV on [0, s0]: K(0) >= 0, K' >= 0, and no decreasing jump across samples
    spos = chart.s[chart.s >= 0.0]
    Ks = chart.K[chart.s >= 0.0]
    Kps = chart.Kp[chart.s >= 0.0]
    dK = np.diff(Ks) / np.diff(spos)
    cand = np.concatenate([[Ks[0]], Kps, dK])
    i = int(np.argmin(cand))
    margin = float(cand[i])
    suggested = None
    if margin < -PASS_TOL:
        viol = (Kps[1:] < -PASS_TOL) | (dK < -PASS_TOL)
        bad = np.where(viol)[0]
        if len(bad) and bad[0] > 0:
            suggested = float(spos[bad[0]])
    conditions["CURV"] = ConditionResult("CURV", margin >= -PASS_TOL, margin)

    # TANG on (0, s0): strict positivity
    inner = (spos > 0) & (spos < s0)
    ap = chart.alphap[chart.s >= 0.0][inner]
    bp = chart.betap[chart.s >= 0.0][inner]
    tmarg = float(min(ap.min(), bp.min()))
    note = ""
    if tmarg <= TANG_FLOOR:
        note = "boundary is flat near the base point: outside this tool's scope"
        bad = np.where((ap <= TANG_FLOOR) | (bp <= TANG_FLOOR))[0]
        if len(bad) and bad[0] > 0 and suggested is None:
            suggested = float(spos[inner][bad[0] - 1])
    conditions["TANG"] = ConditionResult("TANG", tmarg > TANG_FLOOR, tmarg, None, note)

    # XCONV: nu_x >= 0 on the right half boundary
    right = bpts[:, 0] > 1e-12
    nx = bnu[right, 0]
    i = int(np.argmin(nx))
    conditions["XCONV"] = ConditionResult(
        "XCONV", float(nx[i]) >= -PASS_TOL, float(nx[i]), tuple(bpts[right][i]))

    # NUY: nu_y >= 0 on boundary points strictly inside the offset fan
    region = FlowRegion(chart, y0=y0)
    below = bpts[:, 1] < y0 - 1e-12 if math.isfinite(y0) else np.ones(len(bpts), bool)
    cand_pts = bpts[below]
    cand_nu = bnu[below]
    r, s, conv, ok = try_invert(region, cand_pts)
    inside = ok & (r > 1e-9)
    if inside.any():
        ny = cand_nu[inside, 1]
        i = int(np.argmin(ny))
        conditions["NUY"] = ConditionResult(
            "NUY", float(ny[i]) >= -PASS_TOL, float(ny[i]), tuple(cand_pts[inside][i]))
    else:
        conditions["NUY"] = ConditionResult(
            "NUY", True, math.inf, None, "no boundary piece inside the fan: vacuous")

    # REFL_S0 across the normal line at s0
    g0 = chart.gamma(s0)
    n0 = chart.normal(s0)
    t0 = chart.tangent(s0)
    passed, margin, wit, note = check_reflection(
        domain, g0, n0, t0, n=region_samples, seed=seed + 1, boundary_pts=bpts)
    conditions["REFL_S0"] = ConditionResult("REFL_S0", passed, margin, wit, note)

    # REFL_PLUS across y = y0
    if math.isfinite(y0):
        passed, margin, wit, note = check_reflection(
            domain, np.array([0.0, y0]), np.array([1.0, 0.0]), np.array([0.0, 1.0]),
            n=region_samples, seed=seed + 2, boundary_pts=bpts)
        conditions["REFL_PLUS"] = ConditionResult("REFL_PLUS", passed, margin, wit, note)
    else:
        conditions["REFL_PLUS"] = ConditionResult(
            "REFL_PLUS", True, math.inf, None, "y0 = inf: vacuous")

    # CENTEROUT: closure of (domain ∩ fan ∩ {y < y0}) keeps r < R(s) strictly
    conditions["CENTEROUT"] = _check_centerout(domain, chart, region, y0,
                                               region_samples, rng, bpts)

    return HypothesisReport(conditions, s0, y0, suggested)


def _check_centerout(domain, chart, region, y0, n, rng, bpts):
    s0 = chart.s0
    box = region.bounding_box()
    pts = _interior_samples(domain, n, rng, bbox=box)
    closure = [pts]
    # closure-of-region samples: domain boundary, symmetry axis, the normal
    # line at s0, and the y = y0 cap (all restricted to the right half)
    closure.append(bpts)
    ytop = min(y0, domain.bbox()[3] * 1.0)
    yy = np.linspace(0.0, ytop, 1024)
    axis = np.column_stack([np.zeros_like(yy), yy])
    closure.append(axis[domain.signed_distance(axis) <= 0])
    rm = min(float(region.rmax(np.array(s0))), 1e6)
    rr = np.linspace(0.0, rm, 256)
    lam = chart.point(rr, np.full_like(rr, s0))
    closure.append(lam[domain.signed_distance(lam) <= 0])
    if math.isfinite(y0):
        xr = np.linspace(0.0, box[1], 1024)
        cap = np.column_stack([xr, np.full_like(xr, y0)])
        closure.append(cap[domain.signed_distance(cap) <= 0])
    P = np.vstack([c for c in closure if len(c)])
    P = P[(P[:, 0] >= 0.0) & (P[:, 1] <= y0 + 1e-12)]
    r, s, conv, ok = try_invert(region, P)
    # candidates that invert into (a small overshoot band around) the fan are
    # the closure samples of the working region; the rest lie outside it
    note = ""
    if not conv.all():
        note = f"{int((~conv).sum())} candidates outside the collar dropped"
    R = chart.radius(np.clip(s, 0.0, s0))
    band = np.where(np.isinf(R), np.inf, 0.05 * R)
    in_fan = conv & (s >= -1e-9) & (s <= s0 + 1e-9) & (r >= -1e-9)
    in_fan &= np.where(np.isinf(R), True, r <= R + band)
    if not in_fan.any():
        return ConditionResult("CENTEROUT", False, -1e3, None,
                               "no closure sample inverts into the fan")
    clearance = np.where(np.isinf(R), 1e6, R - r)[in_fan]
    i = int(np.argmin(clearance))
    margin = float(clearance[i])
    return ConditionResult("CENTEROUT", margin > STRICT_TOL, margin,
                           tuple(P[in_fan][i]), note)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

@dataclass
class Preset:
    domain: PlanarDomain
    chart: BoundaryChart
    y0: float
    s0: float
    report: HypothesisReport = field(repr=False, default=None)


def preset_ellipse(a: float, b: float, check: bool = True, seed: int = 0) -> Preset:
    """Anchored ellipse with the clipping line on the long axis (y0 = b)."""
    if a == b:
        raise ValueError(
            "a = b is a disk: the strict-containment condition cannot hold with "
            "y0 at the radius; use polar-coordinate tooling for disks")
    if a < b:
        raise ValueError("need semi-major a > semi-minor b for this preset")
    domain = EllipseDomain(a, b)
    # largest sampled arclength keeping the piece strictly below y0 = b
    u = np.linspace(0.0, math.pi / 2.0, 513)[:-1]
    beta = b * (1.0 - np.cos(u))
    u_star = u[beta < b][-1]
    s0 = float(domain._arc(u_star))
    chart = build_chart(domain, s0)
    report = check_all(domain, chart, b, seed=seed) if check else None
    return Preset(domain, chart, float(b), s0, report)


def thin_arc_domain() -> ArcsDomain:
    """Thin mirrored-arc domain whose curvature radius drops away from the
    anchor and whose curvature centers clear the closure by a wide margin."""
    spans = [15.0, 20.0, 100.0, 45.0]
    radii = [5.0, 4.0, 0.6]
    th = np.radians(np.cumsum([0.0] + spans))
    x_end = sum(R * (math.sin(th[i + 1]) - math.sin(th[i])) for i, R in enumerate(radii))
    radii.append(x_end / (math.sin(th[3]) - math.sin(th[4])))
    return ArcsDomain([{"radius": R, "span_deg": d} for R, d in zip(radii, spans)])


def preset_almost_flat(domain: PlanarDomain | None = None, s0: float | None = None,
                       check: bool = True, seed: int = 0) -> Preset:
    """Thin-domain preset with y0 = inf (no clipping line needed)."""
    if domain is None:
        domain = thin_arc_domain()
        if s0 is None:
            s0 = 0.92 * float(domain._cum[2])   # within the first two arcs
    if s0 is None:
        s0 = 0.45 * domain.perimeter() / 2.0
    chart = build_chart(domain, s0)
    report = check_all(domain, chart, math.inf, seed=seed) if check else None
    return Preset(domain, chart, math.inf, float(s0), report)
