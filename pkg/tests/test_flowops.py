"""Flow-coordinate operators against analytic and finite-difference oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbulab.geometry import (ArcsDomain, DiskDomain, EllipseDomain, FlowRegion,
                             build_chart, map_M)
from gbulab.flowops import (AuxParams, FlowDerivs, cartesian_to_flow, check_params,
                            companion_A, companion_Abar, default_params, dot_flow,
                            eval_J, eval_Jbar, eval_theta, eval_w_coefficients,
                            grad_flow, laplacian_flow, profile_bound,
                            psi_r_decompose, theta_brackets)

H1 = 1e-5    # step for first differences of the composed field
H2 = 1e-4    # step for pure second differences (conditioning)


def fd_flow_derivs(psi, chart, r, s, second=True):
    """Finite-difference flow derivatives of psi composed with the offset map."""
    def F(rr, ss):
        return psi(map_M(chart, np.asarray(rr, float), np.asarray(ss, float),
                         check=False))
    pr = (F(r + H1, s) - F(r - H1, s)) / (2 * H1)
    ps = (F(r, s + H1) - F(r, s - H1)) / (2 * H1)
    if not second:
        return FlowDerivs(psi_r=pr, psi_s=ps)
    prr = (F(r + H2, s) - 2 * F(r, s) + F(r - H2, s)) / H2**2
    pss = (F(r, s + H2) - 2 * F(r, s) + F(r, s - H2)) / H2**2
    return FlowDerivs(psi_r=pr, psi_s=ps, psi_rr=prr, psi_ss=pss)


def sample_region(chart, n, seed, pad=0.15):
    rng = np.random.default_rng(seed)
    reg = FlowRegion(chart)
    s = rng.uniform(pad, chart.s0 - pad, n)
    r = pad / 2 + rng.uniform(0.0, 1.0, n) * (np.minimum(reg.rmax(s), 3.0) * 0.7 - pad / 2)
    return r, s


@pytest.fixture(scope="module")
def ellipse_chart():
    return build_chart(EllipseDomain(2.0, 1.0), 2.0)


@pytest.fixture(scope="module")
def disk_chart():
    return build_chart(DiskDomain(1.0), 1.2)


def make_params(**kw):
    base = dict(p=3.0, sigma=0.1, q=1.1, k=0.5, eta=0.05, r1=0.05, s1=1.5,
                K1=1.0, tau=1.0, L=1.0)
    base.update(kw)
    return AuxParams(**base)


# --- gradient / dot / frame -----------------------------------------------------

def test_grad_flow_axis_cases(disk_chart):
    g = grad_flow(FlowDerivs(psi_r=1.0, psi_s=0.0), np.array(0.3), np.array(0.0),
                  disk_chart)
    assert np.allclose(g, [0.0, 1.0], atol=1e-14)
    flat = ArcsDomain([{"length": 0.5}, {"radius": 1.0, "span_deg": 180.0},
                       {"length": 0.5}])
    chf = build_chart(flat, 0.45)
    g = grad_flow(FlowDerivs(psi_r=2.0, psi_s=3.0), np.array(0.2), np.array(0.0), chf)
    assert np.allclose(g, [3.0, 2.0], atol=1e-14)


def test_gradient_reconstruction_analytic(ellipse_chart):
    psi = lambda P: P[..., 0] ** 2 * P[..., 1] + np.sin(P[..., 0])
    gpsi = lambda P: np.stack([2 * P[..., 0] * P[..., 1] + np.cos(P[..., 0]),
                               P[..., 0] ** 2], axis=-1)
    r, s = sample_region(ellipse_chart, 500, 11)
    d = fd_flow_derivs(psi, ellipse_chart, r, s, second=False)
    G = grad_flow(d, r, s, ellipse_chart)
    ref = gpsi(map_M(ellipse_chart, r, s))
    assert np.max(np.abs(G - ref)) < 1e-6


def test_dot_flow_cases(ellipse_chart):
    r, s = sample_region(ellipse_chart, 300, 12)
    psi = lambda P: np.exp(P[..., 0] / 2) * np.cos(P[..., 1])
    phi = lambda P: P[..., 0] ** 3 - 3 * P[..., 0] * P[..., 1] ** 2
    du = fd_flow_derivs(psi, ellipse_chart, r, s, second=False)
    dv = fd_flow_derivs(phi, ellipse_chart, r, s, second=False)
    # norm nonnegativity
    assert np.all(dot_flow(du, du, r, s, ellipse_chart) >= 0)
    # matches the Cartesian inner product of reconstructed gradients
    lhs = dot_flow(du, dv, r, s, ellipse_chart)
    rhs = (grad_flow(du, r, s, ellipse_chart)
           * grad_flow(dv, r, s, ellipse_chart)).sum(axis=-1)
    assert np.max(np.abs(lhs - rhs)) < 1e-6


@settings(max_examples=60, deadline=None)
@given(px=st.floats(-5, 5), py=st.floats(-5, 5),
       r=st.floats(0.0, 0.5), s=st.floats(-1.0, 1.0))
def test_frame_identity_roundtrip(px, py, r, s):
    chart = _FRAME_CHART
    d = cartesian_to_flow(px, py, r, s, chart)
    G = grad_flow(d, np.asarray(r), np.asarray(s), chart)
    assert abs(G[0] - px) < 5e-13 * max(1.0, abs(px), abs(py))
    assert abs(G[1] - py) < 5e-13 * max(1.0, abs(px), abs(py))


_FRAME_CHART = build_chart(EllipseDomain(2.0, 1.0), 1.5)


# --- laplacian -------------------------------------------------------------------

def test_laplacian_flat_reduction():
    flat = ArcsDomain([{"length": 0.5}, {"radius": 1.0, "span_deg": 180.0},
                       {"length": 0.5}])
    chf = build_chart(flat, 0.45)
    d = FlowDerivs(psi_r=0.3, psi_s=-0.7, psi_rr=1.1, psi_ss=2.2)
    val = laplacian_flow(d, np.array(0.2), np.array(0.25), chf)
    assert abs(val - (1.1 + 2.2)) < 1e-12


def test_laplacian_disk_radial(disk_chart):
    # psi = f(depth): the operator reduces to f'' - f'/(1 - r), which is the
    # polar Laplacian of f(1 - rho) with rho the distance to the center
    f = lambda r: r**4
    fp = lambda r: 4 * r**3
    fpp = lambda r: 12 * r**2
    psi = lambda P: f(1.0 - np.hypot(P[..., 0], P[..., 1] - 1.0))
    r = np.linspace(0.1, 0.7, 25)
    s = np.linspace(-0.9, 0.9, 25)
    d = fd_flow_derivs(psi, disk_chart, r, s)
    val = laplacian_flow(d, r, s, disk_chart)
    ref = fpp(r) - fp(r) / (1 - r)
    assert np.max(np.abs(val - ref)) < 1e-5


def test_laplacian_analytic_ellipse(ellipse_chart):
    psi = lambda P: P[..., 0] ** 2 * P[..., 1] + np.sin(P[..., 0])
    lap = lambda P: 2 * P[..., 1] - np.sin(P[..., 0])
    r, s = sample_region(ellipse_chart, 1000, 13)
    d = fd_flow_derivs(psi, ellipse_chart, r, s)
    val = laplacian_flow(d, r, s, ellipse_chart)
    assert np.max(np.abs(val - lap(map_M(ellipse_chart, r, s)))) < 1e-5


def test_laplacian_flat_limit():
    # as K -> 0 the operator approaches psi_rr + psi_ss linearly in K
    d = FlowDerivs(psi_r=0.4, psi_s=0.6, psi_rr=1.0, psi_ss=-0.5)
    diffs = []
    for R in (10.0, 100.0, 1000.0):
        ch = build_chart(DiskDomain(R), 1.0)
        v = laplacian_flow(d, np.array(0.3), np.array(0.2), ch)
        diffs.append(abs(v - 0.5))
    K = np.array([1 / 10, 1 / 100, 1 / 1000])
    assert np.all(np.asarray(diffs) < 1.0 * K)


# --- psi_r decomposition ----------------------------------------------------------

def test_psi_r_decompose_cases(ellipse_chart):
    # consistency: from Cartesian partials, the decomposition returns psi_r
    rng = np.random.default_rng(5)
    r = rng.uniform(0.05, 0.5, 200)
    s = rng.uniform(0.2, 1.8, 200)
    px, py = rng.normal(size=(2, 200))
    d = cartesian_to_flow(px, py, r, s, ellipse_chart)
    rec = psi_r_decompose(px, d.psi_s, r, s, ellipse_chart)
    assert np.max(np.abs(rec - d.psi_r)) < 1e-10
    with pytest.raises(ValueError, match="symmetry point"):
        psi_r_decompose(1.0, 1.0, np.array(0.1), np.array(0.0), ellipse_chart)


def test_psi_r_decompose_fd_oracle(ellipse_chart):
    psi = lambda P: np.cos(P[..., 0]) * P[..., 1] ** 2
    r, s = sample_region(ellipse_chart, 300, 14)
    d = fd_flow_derivs(psi, ellipse_chart, r, s, second=False)
    P = map_M(ellipse_chart, r, s)
    px = -np.sin(P[..., 0]) * P[..., 1] ** 2
    rec = psi_r_decompose(px, d.psi_s, r, s, ellipse_chart)
    assert np.max(np.abs(rec - d.psi_r)) < 1e-6


def test_decompose_diagonal_frame():
    # a 45-degree frame with K = 0: psi_x = 0 gives psi_r = psi_s/(1-rK) = psi_s
    flat = ArcsDomain([{"length": 0.5}, {"radius": 1.0, "span_deg": 180.0},
                       {"length": 0.5}])
    ch = build_chart(flat, 2.0)   # reaches 45 degrees on the arc
    # find s where alpha' = beta' = sqrt(2)/2
    s45 = 0.5 + 1.0 * math.radians(45.0)
    ap = float(ch._eval("alphap", s45))
    assert abs(ap - math.sqrt(0.5)) < 1e-9
    val = psi_r_decompose(0.0, 1.3, np.array(0.0), np.array(s45), ch)
    assert abs(val - 1.3) < 1e-9


# --- weighted monitors -------------------------------------------------------------

def test_eval_J_trivial_and_weight(ellipse_chart):
    pr = make_params()
    r, s = np.array(0.2), np.array(0.5)
    om = 1.0 - r * ellipse_chart.curvature(s)
    assert abs(eval_J(0.0, -0.3, r, s, pr, ellipse_chart) - (-0.3 / om)) < 1e-14
    pr0 = make_params(k=0.0)
    assert abs(eval_J(0.7, -0.3, r, s, pr0, ellipse_chart) - (-0.3 / om)) < 1e-14
    with pytest.raises(ValueError, match="singular"):
        eval_J(0.5, 0.0, np.array(0.0), s, pr, ellipse_chart)


def test_gamma_weight_exponent():
    pr = make_params(sigma=0.1, q=1.5)
    assert abs(pr.gamma - 0.4) < 1e-15
    # the weight r^-gamma carries that exponent
    v1 = eval_Jbar(1.0, 0.0, np.array(0.5), np.array(1.0), pr)
    v2 = eval_Jbar(1.0, 0.0, np.array(0.25), np.array(1.0), pr)
    assert abs(v2 / v1 - 2.0**0.4) < 1e-12


def test_eval_Jbar_trivial():
    pr = make_params()
    assert eval_Jbar(0.0, -1.2, np.array(0.3), np.array(0.5), pr) == -1.2
    assert eval_Jbar(0.8, -1.2, np.array(0.3), np.array(0.0), pr) == -1.2


def test_theta_limit_and_companions(ellipse_chart):
    pr = make_params(sigma=0.1, q=1.5)   # gamma = 0.4
    val = eval_theta(1.0, 0.0, 0.0, np.array(1.0), np.array(0.5), pr, ellipse_chart)
    gam = pr.gamma
    assert abs(val - (-gam * (gam + 1.0))) < 1e-14
    # A reduces to gamma when K = 0
    flat_params = make_params(sigma=0.1, q=1.5, K1=0.0)
    assert abs(companion_A(np.array(1.0), 0.0, flat_params) - 0.4) < 1e-15


def test_check_params_margins():
    pr = make_params(p=3.0, L=1.0, sigma=0.1, q=1.0 + 0.01 / 0.8)  # gamma = 0.01
    rep = check_params(pr)
    assert abs(rep.gamma_max - 0.1 * min(0.25, 1.0 / 9.0)) < 1e-15
    assert rep.gamma_margin > 0
    assert abs(rep.bump_exponent - 0.5) < 1e-15
    bad = make_params(p=3.0, L=1.0, sigma=0.1, q=1.2)   # gamma = 0.16 > 0.0111
    rep2 = check_params(bad)
    assert not rep2.feasible and rep2.binding == "gamma-smallness"


def test_profile_bound_cases():
    pr = make_params(sigma=0.1)
    assert profile_bound(0.0, np.array(0.2), np.array(1.0), pr) == 0.0
    with pytest.raises(ValueError):
        profile_bound(1.0, np.array(0.2), np.array(0.01), pr)
    # r-power exceeds the seeding exponent for p = 3, sigma = 0.1
    assert 1.0 - 2 * pr.sigma > pr.bump_exponent


def test_feasible_params_have_superlinear_q():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = rng.uniform(2.1, 4.0)
        sigma = rng.uniform(0.2, 0.8) / (2 * (p - 1))
        L = rng.uniform(0.5, 2.0)
        gmax = sigma * min(0.25, 1.0 / (p**2 * L ** (p - 1)))
        gam = rng.uniform(0.2, 0.9) * gmax
        q = 1.0 + gam / (1.0 - 2 * sigma)
        probe = AuxParams(p=p, sigma=sigma, q=q, k=0.5, eta=0.05, r1=1e-9, s1=1.0,
                          K1=1.0, tau=1.0, L=L)
        r1 = 0.9 * check_params(probe).r1_max
        pr = AuxParams(p=p, sigma=sigma, q=q, k=0.5, eta=0.05, r1=r1, s1=1.0,
                       K1=1.0, tau=1.0, L=L)
        assert check_params(pr).feasible
        assert pr.q > pr.gamma + 1.0


# --- coefficient formulas ----------------------------------------------------------

def test_w_coefficients_flat_and_zero_grad():
    flat = ArcsDomain([{"length": 0.5}, {"radius": 1.0, "span_deg": 180.0},
                       {"length": 0.5}])
    ch = build_chart(flat, 0.95)
    pr = make_params()
    s = np.array(0.8)   # on the arc: K=1, K'=0... use the straight piece instead
    s_flat = np.array(0.3)
    with pytest.raises(ValueError):
        # beta' = 0 on the straight piece: undefined
        eval_w_coefficients(0.1, np.array([0.2, 0.3]), np.array(0.1), s_flat, pr, ch)
    ch_e = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    a_w, b_w = eval_w_coefficients(0.0, np.array([0.0, 0.0]), np.array(0.2),
                                   np.array(0.8), pr, ch_e)
    K = float(ch_e.curvature(0.8))
    om = 1.0 - 0.2 * K
    assert np.allclose(b_w, -(2 * K / om) * ch_e.normal(0.8), atol=1e-12)


def test_w_coefficients_manufactured_identity(ellipse_chart):
    """Validate (a_w, b_w) end-to-end on a manufactured field.

    For any smooth u with residual f = u_t - lap(u) - |grad u|^p, the scaled
    tangential derivative w = u_s/(1-rK) satisfies

        w_t - lap(w) = a_w w + b_w . grad w + K'/(1-rK)^3 u_x / beta' + f_s/(1-rK).

    Every piece is computable independently of eval_w_coefficients.
    """
    import sympy as sp

    x, y, t = sp.symbols("x y t")
    u_expr = (1 + sp.Rational(1, 2) * t) * sp.sin(0.9 * x + 0.3) * sp.cos(0.7 * y - 0.2) + 0.1 * x**2 * y
    p = 3.0
    ux_e, uy_e = sp.diff(u_expr, x), sp.diff(u_expr, y)
    lap_e = sp.diff(u_expr, x, 2) + sp.diff(u_expr, y, 2)
    gnorm2 = ux_e**2 + uy_e**2
    f_expr = sp.diff(u_expr, t) - lap_e - gnorm2 ** sp.Rational(3, 2)
    fx_e, fy_e = sp.diff(f_expr, x), sp.diff(f_expr, y)
    mods = ["numpy"]
    ux = sp.lambdify((x, y, t), ux_e, mods)
    uy = sp.lambdify((x, y, t), uy_e, mods)
    uxt = sp.lambdify((x, y, t), sp.diff(ux_e, t), mods)
    uyt = sp.lambdify((x, y, t), sp.diff(uy_e, t), mods)
    fx = sp.lambdify((x, y, t), fx_e, mods)
    fy = sp.lambdify((x, y, t), fy_e, mods)

    ch = ellipse_chart
    pr = make_params(p=p)
    t0 = 0.37
    rng = np.random.default_rng(3)
    r = rng.uniform(0.15, 0.5, 60)
    s = rng.uniform(0.6, 1.6, 60)
    P = map_M(ch, r, s)
    om = 1.0 - r * ch.curvature(s)
    tanv = ch.tangent(s)
    nrm = ch.normal(s)

    def w_field(rr, ss, tt):
        # w = grad u . T(s): the 1 - rK factors cancel
        Q = map_M(ch, np.asarray(rr, float), np.asarray(ss, float), check=False)
        tv = ch.tangent(ss)
        return ux(Q[..., 0], Q[..., 1], tt) * tv[..., 0] + uy(Q[..., 0], Q[..., 1], tt) * tv[..., 1]

    # finite-difference flow derivatives of w at fixed time
    pr_w = (w_field(r + H1, s, t0) - w_field(r - H1, s, t0)) / (2 * H1)
    ps_w = (w_field(r, s + H1, t0) - w_field(r, s - H1, t0)) / (2 * H1)
    prr_w = (w_field(r + H2, s, t0) - 2 * w_field(r, s, t0) + w_field(r - H2, s, t0)) / H2**2
    pss_w = (w_field(r, s + H2, t0) - 2 * w_field(r, s, t0) + w_field(r, s - H2, t0)) / H2**2
    dW = FlowDerivs(psi_r=pr_w, psi_s=ps_w, psi_rr=prr_w, psi_ss=pss_w)
    lap_w = laplacian_flow(dW, r, s, ch)
    grad_w = grad_flow(FlowDerivs(psi_r=pr_w, psi_s=ps_w), r, s, ch)
    w_t = uxt(P[:, 0], P[:, 1], t0) * tanv[:, 0] + uyt(P[:, 0], P[:, 1], t0) * tanv[:, 1]
    w_val = w_field(r, s, t0)

    gradu = np.stack([ux(P[:, 0], P[:, 1], t0), uy(P[:, 0], P[:, 1], t0)], axis=-1)
    u_r = (gradu * nrm).sum(axis=1)
    a_w, b_w = eval_w_coefficients(u_r, gradu, r, s, pr, ch)
    Kp = ch.curvature_rate(s)
    bp = ch._eval("betap", s)
    fs = om * (fx(P[:, 0], P[:, 1], t0) * tanv[:, 0] + fy(P[:, 0], P[:, 1], t0) * tanv[:, 1])
    rhs = (a_w * w_val + (b_w * grad_w).sum(axis=1)
           + Kp / om**3 * gradu[:, 0] / bp + fs / om)
    lhs = w_t - lap_w
    scale = np.max(np.abs(lhs)) + 1.0
    assert np.max(np.abs(lhs - rhs)) < 2e-3 * scale


# --- bracket nonpositivity ----------------------------------------------------------

def test_brackets_nonpositive_for_feasible_params():
    rng = np.random.default_rng(42)
    for trial in range(20):
        p = rng.uniform(2.1, 4.0)
        sigma = rng.uniform(0.2, 0.8) / (2 * (p - 1))
        L = rng.uniform(0.5, 2.0)
        K1 = rng.uniform(0.1, 2.0)
        tau = rng.uniform(0.1, 2.0)
        gmax = sigma * min(0.25, 1.0 / (p**2 * L ** (p - 1)))
        gam = rng.uniform(0.2, 0.9) * gmax
        q = 1.0 + gam / (1.0 - 2 * sigma)
        probe = AuxParams(p=p, sigma=sigma, q=q, k=rng.uniform(0.05, 0.95),
                          eta=0.01, r1=1e-6, s1=1.0, K1=K1, tau=tau, L=L)
        r1 = 0.9 * check_params(probe).r1_max
        pr = AuxParams(p=p, sigma=sigma, q=q, k=probe.k, eta=0.01, r1=r1,
                       s1=1.0, K1=K1, tau=tau, L=L)
        rr, ss = np.meshgrid(np.linspace(r1 / 64, r1, 64), np.linspace(0, 1.0, 64))
        for comp in (companion_A, companion_Abar):
            X = comp(rr, ss, pr)
            b1, b2 = theta_brackets(X, rr, ss, pr)
            assert np.all(b1 <= 0), f"trial {trial}: first bracket positive"
            assert np.all(b2 <= 0), f"trial {trial}: second bracket positive"


def test_default_and_feasible_params(ellipse_chart):
    from gbulab.flowops import estimate_tangent_slope, feasible_params
    tau = estimate_tangent_slope(ellipse_chart)
    pr = default_params(3.0, ellipse_chart.s0, ellipse_chart.max_curvature, tau, 1.5)
    assert pr.q == 1.1 and pr.sigma == 0.1 and abs(pr.eta - 0.05 * ellipse_chart.s0) < 1e-15
    fp = feasible_params(3.0, ellipse_chart.s0, ellipse_chart.max_curvature, tau, 1.5)
    assert check_params(fp).feasible
