"""Runtime monitors, localization quotients, and report generation.

A Monitor is bound to a run (grid, chart, working region, parameter bundle)
at start; it reads frozen states between steps and never writes into them.
The record column order is a stable interface.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .flowops import (AuxParams, check_params, default_params,
                      estimate_tangent_slope)
from .geometry import BoundaryChart, FlowRegion
from .initial import _bilinear, pullback_lattice
from .solver import RunResult, SimState, Stencil

RECORD_COLUMNS = [
    "t", "dt", "max_u", "max_grad", "flux_argmax_s", "flux_at_origin",
    "margin_ux", "margin_us", "margin_J", "margin_Jbar",
    "bernstein_C1_est", "nondeg_quotient_max", "corner_coeff",
    "profile_bound_quotient",
]


@dataclass
class DiagnosticsRecord:
    t: float
    dt: float
    max_u: float
    max_grad: float
    flux_argmax_s: float
    flux_at_origin: float
    margin_ux: float
    margin_us: float
    margin_J: float
    margin_Jbar: float
    bernstein_C1_est: float
    nondeg_quotient_max: float
    corner_coeff: float
    profile_bound_quotient: float

    def row(self):
        return [getattr(self, c) for c in RECORD_COLUMNS]


# ---------------------------------------------------------------------------
# individual estimators
# ---------------------------------------------------------------------------

def boundary_flux(state: SimState, chart: BoundaryChart, n: int = 513,
                  method: str = "cubic"):
    """One-sided normal-derivative profile |du/dnu|(s) on the chart piece.

    Quadratic fit through the boundary zero and two inward samples; exact
    for fields quadratic in the normal depth.  Returns (s, flux, argmax_s)
    with ties resolved toward smallest |s|, then smallest s.
    """
    grid = state.field.grid
    h = grid.hmin
    s = np.linspace(-chart.s0, chart.s0, n)
    d1, d2 = 2.5 * h, 5.0 * h
    g = chart.gamma(s)
    nr = chart.normal(s)
    p1 = g + d1 * nr
    p2 = g + d2 * nr
    if method == "cubic":
        from scipy.interpolate import RegularGridInterpolator
        rgi = RegularGridInterpolator((grid.y, grid.x), state.field.values,
                                      method="cubic", bounds_error=False,
                                      fill_value=0.0)
        u1 = rgi(np.column_stack([p1[:, 1], p1[:, 0]]))
        u2 = rgi(np.column_stack([p2[:, 1], p2[:, 0]]))
    else:
        u1 = _bilinear(grid, state.field.values, p1)
        u2 = _bilinear(grid, state.field.values, p2)
    # derivative at depth 0 of the quadratic through (0,0), (d1,u1), (d2,u2)
    flux = np.abs((u1 * d2**2 - u2 * d1**2) / (d1 * d2 * (d2 - d1)))
    order = np.lexsort((s, np.abs(s), -flux))
    return s, flux, float(s[order[0]])


def bernstein_quotient(state: SimState, c20: float):
    """max over evolved nodes of (|grad u| - C2) * delta^{1/(p-1)}."""
    grid = state.field.grid
    gx, gy = state.stencil.gradient(state.field.values)
    gn = np.hypot(gx, gy)
    q = (gn - c20) * grid.delta ** (1.0 / (state.p - 1.0))
    return float(q[grid.evolved].max())


def interior_grad_quotient(state: SimState, depth: float = 0.1):
    """max of |grad u| delta^{1/(p-1)} over nodes at least ``depth`` deep."""
    grid = state.field.grid
    m = grid.evolved & (grid.delta >= depth)
    if not m.any():
        return 0.0
    gx, gy = state.stencil.gradient(state.field.values)
    gn = np.hypot(gx, gy)
    return float((gn[m] * grid.delta[m] ** (1.0 / (state.p - 1.0))).max())


def nondeg_quotient(state: SimState, point, radius: float):
    """max over nodes in the ball of u * delta^{-(p-2)/(p-1)}."""
    grid = state.field.grid
    if radius <= 2.0 * grid.hmin:
        raise ValueError("ball radius must exceed 2h")
    X, Y = grid.meshgrid()
    m = grid.evolved & (np.hypot(X - point[0], Y - point[1]) <= radius)
    if not m.any():
        raise ValueError("no evolved node inside the ball")
    k = (state.p - 2.0) / (state.p - 1.0)
    return float((state.field.values[m] * grid.delta[m] ** (-k)).max())


def estimate_L_constants(state: SimState):
    """Three depth-quotient constants; monitors use their max."""
    grid = state.field.grid
    gx, gy = state.stencil.gradient(state.field.values)
    gn = np.hypot(gx, gy)
    m = grid.evolved & (grid.delta > 0)
    p = state.p
    u = state.field.values[m]
    d = grid.delta[m]
    g = gn[m]
    L1 = float((g * d ** (1.0 / (p - 1.0))).max())
    L2 = float((u * d ** (-(p - 2.0) / (p - 1.0))).max())
    L3 = float((u * g ** (p - 2.0)).max() ** (1.0 / (p - 1.0)))
    return L1, L2, L3


# ---------------------------------------------------------------------------
# the run monitor
# ---------------------------------------------------------------------------

@dataclass
class Monitor:
    """Per-run diagnostics bundle; samples are frozen at construction."""

    grid: object
    chart: BoundaryChart
    region: FlowRegion
    p: float
    params: AuxParams | None = None
    t1: float = 0.0
    nondeg_radius: float = None
    lattice_shape: tuple = (40, 40)
    flux_samples: int = 512
    comparison: tuple = None      # (psi_values, c2)
    extras: dict = field(default_factory=dict)
    params_feasible: bool = None
    _k_locked: bool = False

    def __post_init__(self):
        g = self.grid
        n_r, n_s = self.lattice_shape
        self.rr, self.ss, self.pts, _ = pullback_lattice(
            g, self.chart, self.region, n_r, n_s, r_min=g.hmin,
            s_max=self.chart.s0 - 3.0 * g.hmin)
        self.ap = self.chart._eval("alphap", self.ss)
        self.bp = self.chart._eval("betap", self.ss)
        self.om = 1.0 - self.rr * self.chart.curvature(self.ss)
        # offsets for direct tangential differencing along coordinate curves
        self._ds = 1.5 * g.hmin
        from .geometry import map_M
        self._pts_fw = map_M(self.chart, self.rr, self.ss + self._ds, check=False)
        self._pts_bw = map_M(self.chart, self.rr, self.ss - self._ds, check=False)
        X, _ = g.meshgrid()
        self.right_mask = g.evolved & (X > 0)
        if self.nondeg_radius is None:
            self.nondeg_radius = max(0.15 * self.chart.s0, 2.5 * g.hmin * 1.01)
        self.c20 = None
        self.u0_c1 = None
        for key in ("interior_grad_quotient", "comparison_margin", "L_estimates"):
            self.extras.setdefault(key, [])

    def ensure_params(self, state):
        if self.params is None:
            L = max(estimate_L_constants(state))
            tau = estimate_tangent_slope(self.chart)
            pr = default_params(self.p, self.chart.s0, self.chart.max_curvature,
                                tau, max(L, 1e-6))
            # the formal smallness cap on r1 can fall below the grid spacing
            # for measured L; the monitoring window must stay resolvable
            r1 = max(pr.r1, min(0.4 * self.chart.s0,
                                0.85 * float(self.region.rmax(np.array(0.0)))))
            self.params = AuxParams(p=pr.p, sigma=pr.sigma, q=pr.q, k=pr.k,
                                    eta=pr.eta, r1=r1, s1=pr.s1, K1=pr.K1,
                                    tau=pr.tau, L=pr.L, r0=pr.r0)
        if self.params_feasible is None:
            self.params_feasible = check_params(self.params).feasible

    def _windows(self):
        pr = self.params
        w1 = (self.rr <= pr.r1) & (self.ss <= pr.s1)            # corner window
        w1e = w1 & (self.ss > pr.eta)                           # eta-shifted
        return w1, w1e

    def _shrink_k(self, u, us, ux):
        """Pick k so both weighted monitors start nonpositive at t1."""
        pr = self.params
        w1, w1e = self._windows()
        gam = pr.gamma
        cands = [pr.k]
        m = w1e & (u > 1e-10)
        if m.any():
            wgt = (self.ss[m] - pr.eta) * self.rr[m] ** (-gam) * u[m] ** pr.q
            neg = us[m] / self.om[m] < 0
            if neg.any():
                cands.append(0.9 * float((-(us[m] / self.om[m])[neg] / wgt[neg]).min()))
        m = w1 & (u > 1e-10)
        if m.any():
            wgt = self.ss[m] * self.rr[m] ** (-gam) * u[m] ** pr.q
            neg = ux[m] < 0
            if neg.any():
                cands.append(0.9 * float((-ux[m][neg] / wgt[neg]).min()))
        k = float(np.clip(min(cands), 1e-6, 0.999))
        self.params = AuxParams(p=pr.p, sigma=pr.sigma, q=pr.q, k=k, eta=pr.eta,
                                r1=pr.r1, s1=pr.s1, K1=pr.K1, tau=pr.tau,
                                L=pr.L, r0=pr.r0)
        self._k_locked = True

    def __call__(self, state: SimState) -> DiagnosticsRecord:
        g = state.field.grid
        u = state.field.values
        if self.c20 is None:
            gx0, gy0 = state.stencil.gradient(u)
            self.c20 = math.sqrt(float((gx0**2 + gy0**2).max()))
            self.u0_c1 = float(u.max()) + self.c20
        self.ensure_params(state)
        gx, gy = state.stencil.gradient(u)

        s_arr, flux, argmax_s = boundary_flux(state, self.chart,
                                              n=self.flux_samples, method="linear")
        flux0 = float(flux[np.argmin(np.abs(s_arr))])

        uv = _bilinear(g, u, self.pts)
        gxv = _bilinear(g, gx, self.pts)
        # tangential derivative by direct differencing along the coordinate
        # curves: the frame-change route amplifies near-wall one-sided noise
        # by |flux| * beta' once the boundary layer reaches cell scale
        us = (_bilinear(g, u, self._pts_fw) - _bilinear(g, u, self._pts_bw)) \
            / (2.0 * self._ds)
        ux = gxv

        if not self._k_locked and state.t >= self.t1:
            self._shrink_k(uv, us, ux)
        pr = self.params
        w1, w1e = self._windows()
        gam = pr.gamma

        margin_ux = float((-gx[self.right_mask]).min()) if self.right_mask.any() else 0.0
        margin_us = float((-us).min()) if len(us) else 0.0

        uq = np.where(uv > 0, uv, 0.0)
        J = us / self.om + pr.k * (self.ss - pr.eta) * self.rr ** (-gam) * uq**pr.q
        Jb = ux + pr.k * self.ss * self.rr ** (-gam) * uq**pr.q
        margin_J = float((-J[w1e]).min()) if w1e.any() else 0.0
        margin_Jb = float((-Jb[w1]).min()) if w1.any() else 0.0

        bern = bernstein_quotient(state, self.c20)
        nd = nondeg_quotient(state, (0.0, 0.0), self.nondeg_radius)

        corner = 0.0
        if state.t >= self.t1 and w1.any():
            rs = self.rr * self.ss
            m = w1 & (rs >= g.hmin**2)
            if m.any():
                corner = float(((-ux[m]) / rs[m]).min())

        prof = 0.0
        if w1e.any():
            prof = float((uq[w1e] * (self.ss[w1e] - pr.eta) ** (2.0 / (pr.q - 1.0))
                          * self.rr[w1e] ** (-(1.0 - 2.0 * pr.sigma))).max())

        self.extras["interior_grad_quotient"].append(
            (state.t, interior_grad_quotient(state)))
        self.extras["L_estimates"].append((state.t,) + estimate_L_constants(state))
        if self.comparison is not None:
            psi_vals, c2 = self.comparison
            diff = c2 * psi_vals - u
            self.extras["comparison_margin"].append(
                (state.t, float(diff[g.evolved].min())))

        return DiagnosticsRecord(
            t=state.t, dt=state.dt, max_u=float(u.max()), max_grad=state.max_grad,
            flux_argmax_s=argmax_s, flux_at_origin=flux0,
            margin_ux=margin_ux, margin_us=margin_us,
            margin_J=margin_J, margin_Jbar=margin_Jb,
            bernstein_C1_est=bern, nondeg_quotient_max=nd,
            corner_coeff=corner, profile_bound_quotient=prof,
        )


def corner_coefficient(state: SimState, chart: BoundaryChart, region: FlowRegion,
                       r1: float, s1: float, t1: float = 0.0,
                       lattice=(40, 40)):
    """min over the corner window of (-u_x)/(r s); degenerate cells skipped."""
    if state.t < t1:
        raise ValueError("corner estimate requested before the transient t1")
    g = state.field.grid
    rr, ss, pts, _ = pullback_lattice(g, chart, region, *lattice, r_min=g.hmin)
    m = (rr <= r1) & (ss <= s1) & (rr * ss >= g.hmin**2)
    if not m.any():
        raise ValueError("no admissible corner samples")
    st = state.stencil
    gx, _ = st.gradient(state.field.values)
    ux = _bilinear(g, gx, pts[m])
    return float(((-ux) / (rr[m] * ss[m])).min())


def sign_monitors(state: SimState, chart: BoundaryChart, region: FlowRegion,
                  params: AuxParams, lattice=(40, 40)):
    """Standalone margins dict (the Monitor computes these per record)."""
    mon = Monitor(state.field.grid, chart, region, state.p, params=params)
    rec = mon(state)
    return {
        "margin_ux": rec.margin_ux, "margin_us": rec.margin_us,
        "margin_J": rec.margin_J, "margin_Jbar": rec.margin_Jbar,
        "params_feasible": mon.params_feasible,
    }


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def write_series_csv(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([repr(float(v)) for v in r.row()])


def series_violations(rows, max_u0=None):
    """Hard-invariant scan over a diagnostics series (list of dicts)."""
    out = []
    if not rows:
        return out
    scale = max_u0 if max_u0 is not None else max(r["max_u"] for r in rows)
    for a, b in zip(rows, rows[1:]):
        budget = 1e-8 * scale * max(b["t"] - a["t"], 0.0) + 1e-12 * scale
        if b["max_u"] > a["max_u"] + budget:
            out.append(f"max_u increases at t = {b['t']:.6g}")
        if b["t"] < a["t"]:
            out.append(f"time goes backward at t = {b['t']:.6g}")
    return out


def write_report(result: RunResult, out_dir, figures: bool = True,
                 s0: float = None):
    """Emit the diagnostics CSV, extras, events, verdict, and figures.

    Returns the verdict dict; the exit status convention is nonzero iff the
    verdict lists invariant violations.
    """
    os.makedirs(out_dir, exist_ok=True)
    write_series_csv(os.path.join(out_dir, "diagnostics.csv"), result.records)
    with open(os.path.join(out_dir, "events.json"), "w") as f:
        json.dump(result.state.events, f, indent=1)
    extras = getattr(result, "extras", {})
    if extras:
        with open(os.path.join(out_dir, "extras.json"), "w") as f:
            json.dump({k: v for k, v in extras.items()}, f)

    rows = [dict(zip(RECORD_COLUMNS, r.row())) for r in result.records]
    violations = list(result.state.violations)
    violations += series_violations(rows, max_u0=result.state.max_u0)
    truncated = result.stop_reason in ("m_stop", "dt_underflow")
    offset = abs(rows[-1]["flux_argmax_s"]) if rows else 0.0
    verdict = {
        "blow_up_truncated": truncated,
        "stop_reason": result.stop_reason,
        "localizer_arc_offset": offset,
        "localizer_arc_offset_rel": offset / s0 if s0 else None,
        "invariant_violations": violations,
        "records": len(rows),
        "t_final": result.state.t,
        "max_grad_final": result.state.max_grad,
    }
    with open(os.path.join(out_dir, "verdict.json"), "w") as f:
        json.dump(verdict, f, indent=1, sort_keys=True)
    if figures:
        from .plots import render_run_figures
        render_run_figures(out_dir)
    return verdict


def validate_run_dir(run_dir):
    """Re-check a written run directory; returns (verdict, violations)."""
    rows = []
    with open(os.path.join(run_dir, "diagnostics.csv")) as f:
        rd = csv.DictReader(f)
        for row in rd:
            rows.append({k: float(v) for k, v in row.items()})
    with open(os.path.join(run_dir, "verdict.json")) as f:
        verdict = json.load(f)
    violations = series_violations(rows)
    return verdict, violations


# ---------------------------------------------------------------------------
# blow-up driver
# ---------------------------------------------------------------------------

def find_blowup_amplitude(run_factory, lo: float, hi: float, max_steps: int = 8):
    """Bisect on amplitude for the smallest truncating value found.

    run_factory(amp) must return a RunResult.  hi must truncate (it is probed
    first and doubled up to three times if it does not).  Returns
    (amplitude, RunResult of that amplitude, probes list).
    """
    probes = []

    def truncates(res):
        return res.stop_reason in ("m_stop", "dt_underflow")

    res_hi = run_factory(hi)
    probes.append((hi, res_hi.stop_reason))
    doubles = 0
    while not truncates(res_hi) and doubles < 3:
        hi *= 2.0
        res_hi = run_factory(hi)
        probes.append((hi, res_hi.stop_reason))
        doubles += 1
    if not truncates(res_hi):
        raise RuntimeError("upper amplitude does not truncate; widen the bracket")
    best = (hi, res_hi)
    for _ in range(max_steps):
        if hi / lo < 1.3:
            break
        mid = math.sqrt(lo * hi)
        res = run_factory(mid)
        probes.append((mid, res.stop_reason))
        if truncates(res):
            hi, best = mid, (mid, res)
        else:
            lo = mid
    return best[0], best[1], probes
