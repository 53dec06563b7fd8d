"""Differential operators in boundary-fitted coordinates and the weighted
monitor functions built on top of them.

All evaluators are pure and accept scalars or numpy arrays.  Conventions:
psi_r, psi_s are partial derivatives of psi composed with the offset map;
K, alpha', beta' come from a chart; 1 - r K(s) must stay positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BoundaryChart, OutsideRegionError


@dataclass
class FlowDerivs:
    """Partial derivatives of a scalar field in offset coordinates.

    Optional Cartesian first derivatives allow cross-checking the frame
    identities psi_r = -beta' psi_x + alpha' psi_y and
    psi_s = (1 - r K)(alpha' psi_x + beta' psi_y).
    """

    psi_r: float | np.ndarray
    psi_s: float | np.ndarray
    psi_rr: float | np.ndarray | None = None
    psi_ss: float | np.ndarray | None = None
    psi_x: float | np.ndarray | None = None
    psi_y: float | np.ndarray | None = None


@dataclass(frozen=True)
class AuxParams:
    """Parameter bundle for the weighted monitors.

    gamma is derived, never stored: gamma = (1 - 2 sigma)(q - 1).  K1 bounds
    the chart curvature, tau the tangent-slope quotient beta'(s)/s, L the
    empirical gradient-vs-depth constant; r0 is the collar depth available to
    the monitors (inf when unknown).
    """

    p: float
    sigma: float
    q: float
    k: float
    eta: float
    r1: float
    s1: float
    K1: float
    tau: float
    L: float
    r0: float = math.inf

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError("p must exceed 2")
        if not 0 < self.sigma < 1.0 / (2.0 * (self.p - 1.0)):
            raise ValueError("sigma must lie in (0, 1/(2(p-1)))")
        if not 1 < self.q < 2:
            raise ValueError("q must lie in (1, 2)")
        if not 0 <= self.k < 1:
            raise ValueError("k must lie in [0, 1)")
        for name in ("eta", "r1", "s1", "K1", "tau", "L"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def gamma(self) -> float:
        return (1.0 - 2.0 * self.sigma) * (self.q - 1.0)

    @property
    def bump_exponent(self) -> float:
        """(p-2)/(p-1), the depth exponent of the seeding threshold."""
        return (self.p - 2.0) / (self.p - 1.0)


@dataclass
class ParamsReport:
    feasible: bool
    gamma_margin: float
    r1_margin: float
    gamma_max: float
    r1_max: float
    binding: str
    bump_exponent: float

    def __str__(self):
        status = "feasible" if self.feasible else f"infeasible ({self.binding})"
        return (f"{status}: gamma margin {self.gamma_margin:.3e} (max {self.gamma_max:.3e}), "
                f"r1 margin {self.r1_margin:.3e} (max {self.r1_max:.3e}), "
                f"seeding exponent {self.bump_exponent:.4g}")


def check_params(params: AuxParams) -> ParamsReport:
    """Feasibility margins for the smallness constraints on gamma and r1."""
    p, sig, q, L = params.p, params.sigma, params.q, params.L
    gamma_max = sig * min(0.25, 1.0 / (p**2 * L ** (p - 1)))
    g = params.gamma
    r1_caps = {
        "r0": params.r0,
        "unit": 1.0,
        "curvature": g**2 / (2.0 * params.K1) if params.K1 > 0 else math.inf,
        "tangent-slope": g**2 / (2.0 * params.tau) if params.tau > 0 else math.inf,
        "weighted-load": 1.5 * g**2 / (p * L ** (q + p - 2) + 2.0 * q * L ** (q - 1)),
    }
    r1_max = min(r1_caps.values())
    gamma_margin = gamma_max - g
    r1_margin = r1_max - params.r1
    if gamma_margin <= 0:
        binding = "gamma-smallness"
    elif r1_margin <= 0:
        binding = "r1:" + min(r1_caps, key=r1_caps.get)
    else:
        binding = ""
    return ParamsReport(gamma_margin > 0 and r1_margin > 0, gamma_margin,
                        r1_margin, gamma_max, r1_max, binding,
                        params.bump_exponent)


# ---------------------------------------------------------------------------
# frame conversions and first/second-order operators
# ---------------------------------------------------------------------------

def _frame(chart: BoundaryChart, r, s, require_positive=True):
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    K = chart.curvature(s)
    om = 1.0 - r * K
    if require_positive and np.any(om <= 0):
        raise OutsideRegionError("1 - r K(s) must stay positive")
    return r, s, K, om


def cartesian_to_flow(psi_x, psi_y, r, s, chart: BoundaryChart) -> FlowDerivs:
    """First-order frame change: (psi_x, psi_y) -> (psi_r, psi_s)."""
    r, s, K, om = _frame(chart, r, s)
    ap = chart._eval("alphap", s)
    bp = chart._eval("betap", s)
    psi_x = np.asarray(psi_x, dtype=float)
    psi_y = np.asarray(psi_y, dtype=float)
    psi_r = -bp * psi_x + ap * psi_y
    psi_s = om * (ap * psi_x + bp * psi_y)
    return FlowDerivs(psi_r=psi_r, psi_s=psi_s, psi_x=psi_x, psi_y=psi_y)


def grad_flow(derivs: FlowDerivs, r, s, chart: BoundaryChart):
    """Reconstruct the Cartesian gradient from (psi_r, psi_s)."""
    r, s, K, om = _frame(chart, r, s)
    n = chart.normal(s)
    t = chart.tangent(s)
    pr = np.asarray(derivs.psi_r, dtype=float)
    ps = np.asarray(derivs.psi_s, dtype=float)
    return pr[..., None] * n + (ps / om)[..., None] * t


def dot_flow(du: FlowDerivs, dv: FlowDerivs, r, s, chart: BoundaryChart):
    """Cartesian inner product of two gradients from flow derivatives."""
    r, s, K, om = _frame(chart, r, s)
    return (np.asarray(du.psi_r) * np.asarray(dv.psi_r)
            + np.asarray(du.psi_s) * np.asarray(dv.psi_s) / om**2)


def laplacian_flow(derivs: FlowDerivs, r, s, chart: BoundaryChart):
    """Four-term Laplacian in offset coordinates."""
    if derivs.psi_rr is None or derivs.psi_ss is None:
        raise ValueError("laplacian needs second derivatives psi_rr, psi_ss")
    r, s, K, om = _frame(chart, r, s)
    Kp = chart.curvature_rate(s)
    return (np.asarray(derivs.psi_rr)
            - K / om * np.asarray(derivs.psi_r)
            + np.asarray(derivs.psi_ss) / om**2
            + r * Kp / om**3 * np.asarray(derivs.psi_s))


def psi_r_decompose(psi_x, psi_s, r, s, chart: BoundaryChart):
    """Express psi_r through psi_x and psi_s (undefined where beta' ~ 0)."""
    r, s, K, om = _frame(chart, r, s)
    ap = chart._eval("alphap", s)
    bp = chart._eval("betap", s)
    if np.any(bp <= 1e-10):
        raise ValueError("decomposition undefined near the symmetry point (beta' ~ 0)")
    return -np.asarray(psi_x) / bp + ap / bp * np.asarray(psi_s) / om


# ---------------------------------------------------------------------------
# weighted monitor functions
# ---------------------------------------------------------------------------

def eval_J(u_val, u_s, r, s, params: AuxParams, chart: BoundaryChart):
    """Tangential monitor u_s/(1 - rK) + k (s - eta) r^-gamma u^q."""
    r, s, K, om = _frame(chart, r, s)
    u_val = np.asarray(u_val, dtype=float)
    if np.any((r <= 0) & (u_val > 0)):
        raise ValueError("singular weight at r = 0 with nonzero state")
    w = np.where(u_val > 0, params.k * (s - params.eta)
                 * np.where(r > 0, r, 1.0) ** (-params.gamma) * u_val**params.q, 0.0)
    return np.asarray(u_s) / om + w


def eval_Jbar(u_val, u_x, r, s, params: AuxParams):
    """Axis monitor u_x + k s r^-gamma u^q."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    u_val = np.asarray(u_val, dtype=float)
    if np.any((r <= 0) & (u_val > 0)):
        raise ValueError("singular weight at r = 0 with nonzero state")
    w = np.where(u_val > 0, params.k * s
                 * np.where(r > 0, r, 1.0) ** (-params.gamma) * u_val**params.q, 0.0)
    return np.asarray(u_x) + w


def companion_A(r, s, params: AuxParams, chart: BoundaryChart | None = None):
    """gamma + r K/(1 - r K); K from the chart or its bound K1."""
    r = np.asarray(r, dtype=float)
    K = chart.curvature(s) if chart is not None else params.K1
    om = 1.0 - r * K
    return params.gamma + r * K / om


def companion_Abar(r, s, params: AuxParams, chart: BoundaryChart | None = None):
    """gamma + tau r/(1 - r K); K from the chart or its bound K1."""
    r = np.asarray(r, dtype=float)
    K = chart.curvature(s) if chart is not None else params.K1
    om = 1.0 - r * K
    return params.gamma + params.tau * r / om


def eval_theta(X, u_val, grad_norm, r, s, params: AuxParams,
               chart: BoundaryChart | None = None):
    """Seven-term growth functional driving the monitor comparison.

    State-dependent quotients degenerate to zero in the (u, |grad u|) -> 0
    limit, leaving -gamma(gamma+1)/r^2.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    u = np.asarray(u_val, dtype=float)
    g = np.asarray(grad_norm, dtype=float)
    if np.any(u < 0) or np.any(g < 0):
        raise ValueError("state values must be nonnegative")
    X = np.asarray(X, dtype=float)
    p, q, k, gam = params.p, params.q, params.k, params.gamma
    K = chart.curvature(s) if chart is not None else params.K1
    om = 1.0 - r * K
    upos = u > 0
    usafe = np.where(upos, u, 1.0)
    t1 = np.where(upos, -(p - 1) * q * g**p / usafe, 0.0)
    t2 = np.where(upos, p * k / om * usafe**q * g ** (p - 2) * r ** (-gam), 0.0)
    t3 = p * g ** (p - 1) / r * X
    t4 = np.where(upos, -q * (q - 1) * g**2 / usafe**2, 0.0)
    t5 = np.where(upos, 2.0 * q / r * g / usafe * X, 0.0)
    t6 = np.where(upos, 2.0 * q * k / om * usafe ** (q - 1) * r ** (-gam), 0.0)
    t7 = -gam * (gam + 1.0) / r**2
    return t1 + t2 + t3 + t4 + t5 + t6 + t7


def theta_brackets(X, r, s, params: AuxParams, chart: BoundaryChart | None = None):
    """The two bracketed bounds controlling the growth functional.

    Returns (b1, b2) where the functional is dominated by b1/r^2 plus
    b2 * |grad u|^p / u; feasible parameters force both nonpositive on the
    monitor window.
    """
    r = np.asarray(r, dtype=float)
    X = np.asarray(X, dtype=float)
    p, q, k, sig, gam, L = (params.p, params.q, params.k, params.sigma,
                            params.gamma, params.L)
    K = chart.curvature(s) if chart is not None else params.K1
    om = 1.0 - r * K
    B = r ** ((q - 1) * (2.0 * sig - 1.0 / (p - 1.0)) + 2.0) / om
    b1 = (k * B * (p * L ** (q + p - 2) + 2.0 * q * L ** (q - 1))
          + q / (q - 1.0) * X**2 + 0.5 * sig * X - gam * (gam + 1.0))
    b2 = p**2 * X / (2.0 * sig) * L ** (p - 1) - (p - 1.0) * q
    return b1, b2


def profile_bound(u_val, r, s, params: AuxParams):
    """Amplitude quotient u (s - eta)^{2/(q-1)} r^{-(1-2 sigma)}.

    Bounded along a run exactly when the tangential monitor stays
    nonpositive; undefined for s <= eta.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= params.eta):
        raise ValueError("profile quotient undefined for s <= eta")
    r = np.asarray(r, dtype=float)
    return (np.asarray(u_val, dtype=float)
            * (s - params.eta) ** (2.0 / (params.q - 1.0))
            * r ** (-(1.0 - 2.0 * params.sigma)))


def eval_w_coefficients(u_r, grad, r, s, params: AuxParams, chart: BoundaryChart):
    """Zeroth- and first-order coefficients of the tangential-derivative flow.

    Returns (a_w, b_w) with b_w a Cartesian vector; requires beta'(s) > 0.
    """
    r, s, K, om = _frame(chart, r, s)
    Kp = chart.curvature_rate(s)
    ap = chart._eval("alphap", s)
    bp = chart._eval("betap", s)
    if np.any(bp <= 1e-10):
        raise ValueError("coefficients undefined near the symmetry point (beta' ~ 0)")
    grad = np.asarray(grad, dtype=float)
    gnorm = np.hypot(grad[..., 0], grad[..., 1])
    p = params.p
    a_w = (K**2 / om**2
           - p * K / om * gnorm ** (p - 2) * np.asarray(u_r)
           - Kp / om**3 * ap / bp)
    b_w = p * gnorm[..., None] ** (p - 2) * grad - (2.0 * K / om)[..., None] * chart.normal(s)
    return a_w, b_w


# ---------------------------------------------------------------------------
# parameter construction helpers
# ---------------------------------------------------------------------------

def default_params(p: float, s0: float, K1: float, tau: float, L: float,
                   r0: float = math.inf, k: float = 0.5) -> AuxParams:
    """Monitor defaults: small sigma, q = 1.1, eta at 5% of the chart range,
    r1 from the smallness caps.  These defaults need not be feasible for a
    measured L; monitors then run flagged advisory."""
    sigma = min(0.1, 0.4 / (2.0 * (p - 1.0)))
    q = 1.1
    probe = AuxParams(p=p, sigma=sigma, q=q, k=min(k, 0.999), eta=0.05 * s0,
                      r1=1e-9, s1=0.75 * s0, K1=K1, tau=tau, L=L, r0=r0)
    rep = check_params(probe)
    r1 = min(0.9 * rep.r1_max, 0.45 * s0) if math.isfinite(rep.r1_max) else 0.5
    return AuxParams(p=p, sigma=sigma, q=q, k=min(k, 0.999), eta=0.05 * s0,
                     r1=r1, s1=0.75 * s0, K1=K1, tau=tau, L=L, r0=r0)


def feasible_params(p: float, s0: float, K1: float, tau: float, L: float,
                    r0: float = math.inf, k: float = 0.5) -> AuxParams:
    """Like default_params but with q shrunk toward 1 until both smallness
    constraints hold (q = 1.1 is often too aggressive for measured L)."""
    sigma = min(0.1, 0.4 / (2.0 * (p - 1.0)))
    gmax = sigma * min(0.25, 1.0 / (p**2 * L ** (p - 1)))
    q = 1.0 + 0.8 * gmax / (1.0 - 2.0 * sigma)
    probe = AuxParams(p=p, sigma=sigma, q=q, k=min(k, 0.999), eta=0.05 * s0,
                      r1=1e-12, s1=0.75 * s0, K1=K1, tau=tau, L=L, r0=r0)
    rep = check_params(probe)
    r1 = min(0.9 * rep.r1_max, 0.45 * s0)
    return AuxParams(p=p, sigma=sigma, q=q, k=min(k, 0.999), eta=0.05 * s0,
                     r1=r1, s1=0.75 * s0, K1=K1, tau=tau, L=L, r0=r0)


def estimate_tangent_slope(chart: BoundaryChart, floor: float = 1e-6) -> float:
    """tau = max over samples of beta'(s)/s on (0, s0], floored."""
    m = chart.s > 0
    return float(max(np.max(chart.betap[m] / chart.s[m]), floor))
