"""Chart construction, the offset map, and its inverse."""

import math

import numpy as np
import pytest

from gbulab.geometry import (
    ArcsDomain,
    CenterAtInfinity,
    DiskDomain,
    EllipseDomain,
    FlowRegion,
    JunctionError,
    OutsideRegionError,
    SplineDomain,
    build_chart,
    curvature_center,
    invert_M,
    jacobian_M,
    load_domain,
    map_M,
    try_invert,
)


# --- oracles -----------------------------------------------------------------

def fd_curvature_oracle(fx, fy, t, h0=1e-3):
    """Curvature of (fx(t), fy(t)) by central differences with h-refinement.

    Independent of any chart machinery: refine h until two consecutive
    estimates agree to 1e-8.
    """
    prev = None
    h = h0
    for _ in range(8):
        xp = (fx(t + h) - fx(t - h)) / (2 * h)
        yp = (fy(t + h) - fy(t - h)) / (2 * h)
        xpp = (fx(t + h) - 2 * fx(t) + fx(t - h)) / h**2
        ypp = (fy(t + h) - 2 * fy(t) + fy(t - h)) / h**2
        k = (xp * ypp - yp * xpp) / (xp**2 + yp**2) ** 1.5
        if prev is not None and abs(k - prev) < 1e-8:
            return k
        prev = k
        h /= 2
    return prev


def closest_point_oracle(chart, P, lo, hi, n=4096):
    """Derivative-free inverse: dense scan plus golden-section refinement."""
    s = np.linspace(lo, hi, n)
    g = chart.gamma(s)
    d2 = (g[:, 0] - P[0]) ** 2 + (g[:, 1] - P[1]) ** 2
    i = int(np.argmin(d2))
    a, b = s[max(i - 1, 0)], s[min(i + 1, n - 1)]
    phi = (math.sqrt(5) - 1) / 2
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(90):
        gc = chart.gamma(c)
        gd = chart.gamma(d)
        fc = (gc[0] - P[0]) ** 2 + (gc[1] - P[1]) ** 2
        fd = (gd[0] - P[0]) ** 2 + (gd[1] - P[1]) ** 2
        if fc < fd:
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    s_star = 0.5 * (a + b)
    g = chart.gamma(s_star)
    r_star = float((P[0] - g[0]) * chart.normal(s_star)[0]
                   + (P[1] - g[1]) * chart.normal(s_star)[1])
    return r_star, float(s_star)


def thin_arc_entries():
    """Right-half arc list of the thin test domain (closure solved exactly)."""
    spans = [15.0, 20.0, 100.0, 45.0]
    radii = [5.0, 4.0, 0.6]
    th = np.radians(np.cumsum([0.0] + spans))
    x_end = sum(R * (math.sin(th[i + 1]) - math.sin(th[i])) for i, R in enumerate(radii))
    r_last = x_end / (math.sin(th[3]) - math.sin(th[4]))
    radii.append(r_last)
    return [{"radius": R, "span_deg": d} for R, d in zip(radii, spans)]


# --- chart anchoring and curvature -------------------------------------------

def test_unit_disk_constant_curvature():
    ch = build_chart(DiskDomain(1.0), 1.2)
    s = np.linspace(-1.2, 1.2, 101)
    assert np.allclose(ch.curvature(s), 1.0, atol=1e-12)


@pytest.mark.parametrize("domain", [
    EllipseDomain(2.0, 1.0),
    DiskDomain(1.5),
    ArcsDomain(thin_arc_entries()),
    SplineDomain([[0, 0], [0.9, 0.12], [1.6, 0.7], [1.1, 1.6], [0, 2.0]]),
])
def test_chart_anchor_exact(domain):
    s0 = 0.4 * domain.perimeter() / 2
    ch = build_chart(domain, s0)
    assert tuple(ch.gamma(0.0)) == (0.0, 0.0)
    assert tuple(ch.tangent(0.0)) == (1.0, 0.0)
    n = ch.normal(0.0)
    assert n[0] == 0.0 and n[1] == 1.0


def test_ellipse_curvature_against_fd_oracle():
    a, b = 2.0, 1.0
    k_oracle = fd_curvature_oracle(lambda t: a * np.sin(t),
                                   lambda t: b * (1 - np.cos(t)), 0.0)
    assert abs(k_oracle - b / a**2) < 1e-8
    ch = build_chart(EllipseDomain(a, b), 2.0)
    assert abs(ch.curvature(0.0) - k_oracle) < 1e-8
    assert abs(ch.radius(0.0) - 4.0) < 1e-7
    # spot-check an interior sample against the oracle as well
    u = 0.7
    k_mid = fd_curvature_oracle(lambda t: a * np.sin(t),
                                lambda t: b * (1 - np.cos(t)), u)
    s_of_u = float(EllipseDomain(a, b)._arc(u))
    assert abs(ch.curvature(s_of_u) - k_mid) < 1e-7


@pytest.mark.parametrize("domain", [
    EllipseDomain(2.0, 1.0),
    DiskDomain(1.5),
    ArcsDomain(thin_arc_entries()),
    SplineDomain([[0, 0], [0.9, 0.12], [1.6, 0.7], [1.1, 1.6], [0, 2.0]]),
])
def test_arclength_invariant(domain):
    s0 = 0.4 * domain.perimeter() / 2
    ch = build_chart(domain, s0)
    # stored tangents are unit
    assert np.max(np.abs(np.hypot(ch.alphap, ch.betap) - 1.0)) < 1e-9
    # independent check: differentiate the stored positions
    dal = np.gradient(ch.alpha, ch.s)
    dbe = np.gradient(ch.beta, ch.s)
    speed = np.hypot(dal, dbe)[5:-5]
    assert np.max(np.abs(speed - 1.0)) < 1e-5


def test_curvature_three_formula_agreement():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    ap, bp, app, bpp, K = ch.alphap, ch.betap, ch.alphapp, ch.betapp, ch.K
    det = ap * bpp - bp * app
    assert np.max(np.abs(det - K)) < 1e-7
    m = np.abs(ap) > 1e-6
    assert np.max(np.abs(bpp[m] / ap[m] - K[m])) < 1e-7
    m = np.abs(bp) > 1e-6
    assert np.max(np.abs(-app[m] / bp[m] - K[m])) < 1e-7


def test_arclength_quadrature_against_scipy():
    from scipy.integrate import quad
    a, b = 2.0, 1.0
    dom = EllipseDomain(a, b)
    u = 1.1
    ref, err = quad(lambda t: math.sqrt(a**2 * math.cos(t)**2 + b**2 * math.sin(t)**2),
                    0.0, u, epsrel=1e-12)
    assert abs(dom._arc(u) - ref) < 1e-10 * max(1.0, ref)
    sp = SplineDomain([[0, 0], [0.9, 0.12], [1.6, 0.7], [1.1, 1.6], [0, 2.0]])
    i = int(0.6 * len(sp._t_table))
    tq = float(sp._t_table[i])
    ref2, _ = quad(lambda t: math.hypot(sp._sx(t, 1), sp._sy(t, 1)), 0.0, tq,
                   epsrel=1e-12, limit=200,
                   points=[k for k in sp._sx.x if 0.0 < k < tq])
    assert abs(sp._s_table[i] - ref2) < 1e-10 * max(1.0, ref2)


def test_build_chart_rejects_large_s0():
    dom = DiskDomain(1.0)
    with pytest.raises(ValueError):
        build_chart(dom, dom.perimeter() / 2)


def test_composite_arc_junction_rejection():
    entries = [{"radius": 2.0, "span_deg": 40.0}, {"radius": 1.0, "span_deg": 140.0}]
    centers = [None, (10.0, 10.0)]
    with pytest.raises(JunctionError) as e:
        ArcsDomain(entries, centers=centers)
    assert e.value.index == 1


# --- offset map ---------------------------------------------------------------

def test_map_boundary_and_normal_ray():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    s = np.linspace(-1.5, 1.5, 11)
    assert np.allclose(map_M(ch, np.zeros_like(s), s), ch.gamma(s), atol=1e-14)
    chd = build_chart(DiskDomain(1.0), 1.0)
    p = map_M(chd, np.array(0.37), np.array(0.0))
    assert np.allclose(p, [0.0, 0.37], atol=1e-14)


def test_map_region_violation():
    ch = build_chart(DiskDomain(1.0), 1.0)
    with pytest.raises(OutsideRegionError):
        map_M(ch, np.array(1.0), np.array(0.2))   # r = R


def test_jacobian_flat_and_disk():
    entries = [{"length": 0.5}, {"radius": 1.0, "span_deg": 180.0},
               {"length": 0.5}]
    flat = ArcsDomain(entries)
    ch = build_chart(flat, 0.4)
    assert jacobian_M(ch, np.array(0.2), np.array(0.3)) == -1.0
    chd = build_chart(DiskDomain(1.0), 1.0)
    assert abs(jacobian_M(chd, np.array(0.5), np.array(0.4)) + 0.5) < 1e-12


def test_jacobian_matches_fd_determinant():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    reg = FlowRegion(ch)
    rng = np.random.default_rng(1)
    s = rng.uniform(0.01, 1.99, 1000)
    r = rng.uniform(0.0, 1.0, 1000) * 0.9 * reg.rmax(s)
    h = 1e-6
    dMr = (map_M(ch, r + h, s, check=False) - map_M(ch, r - h, s, check=False)) / (2 * h)
    dMs = (map_M(ch, r, s + h, check=False) - map_M(ch, r, s - h, check=False)) / (2 * h)
    det = dMr[:, 0] * dMs[:, 1] - dMr[:, 1] * dMs[:, 0]
    assert np.max(np.abs(det - jacobian_M(ch, r, s))) < 1e-6


def test_invert_roundtrip_and_oracle():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    reg = FlowRegion(ch)
    rng = np.random.default_rng(2)
    s = rng.uniform(0.0, 2.0, 1000)
    r = rng.uniform(0.0, 1.0, 1000) * 0.98 * reg.rmax(s)
    P = map_M(ch, r, s)
    ri, si, conv, ok = try_invert(reg, P)
    assert conv.all() and ok.all()
    assert np.max(np.hypot(ri - r, si - s)) < 1e-9
    # independent derivative-free oracle on a handful of points
    for i in range(0, 1000, 200):
        ro, so = closest_point_oracle(ch, P[i], 0.0, 2.0)
        if ro < 0.9 * float(reg.rmax(so)):   # oracle only valid below the fold
            assert abs(ro - r[i]) < 1e-6 and abs(so - s[i]) < 1e-6


def test_invert_boundary_and_disk_cases():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    reg = FlowRegion(ch)
    s_star = 1.111
    r, s = invert_M(reg, ch.gamma(s_star))
    assert abs(r) < 1e-9 and abs(s - s_star) < 1e-9
    chd = build_chart(DiskDomain(1.0), 1.0)
    r, s = invert_M(FlowRegion(chd), [0.0, 0.3])
    assert abs(r - 0.3) < 1e-12 and abs(s) < 1e-12


def test_invert_outside_signals():
    chd = build_chart(DiskDomain(1.0), 1.0)
    regd = FlowRegion(chd)
    with pytest.raises(OutsideRegionError):
        invert_M(regd, [0.0, 1.5])   # beyond the curvature center


def test_sampled_injectivity():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    reg = FlowRegion(ch)
    rng = np.random.default_rng(3)
    n = 10000
    s = rng.uniform(0.0, 2.0, (2, n))
    r = rng.uniform(0.0, 1.0, (2, n)) * 0.98 * reg.rmax(s)
    apart = (np.abs(r[0] - r[1]) > 1e-4) | (np.abs(s[0] - s[1]) > 1e-4)
    P0 = map_M(ch, r[0], s[0])
    P1 = map_M(ch, r[1], s[1])
    d = np.hypot(P0[:, 0] - P1[:, 0], P0[:, 1] - P1[:, 1])
    assert np.all(d[apart] > 1e-8)
    ri, si, conv, ok = try_invert(reg, P0)
    assert conv.all() and ok.all()
    assert np.max(np.hypot(ri - r[0], si - s[0])) < 1e-9


def test_monotone_evolute_property():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    s = np.linspace(0.0, 2.0, 200)
    g = ch.gamma(s)
    t = ch.tangent(s)
    C = g + ch.normal(s) / ch.curvature(s)[:, None]
    i, j = np.triu_indices(len(s), k=1)
    d_gamma = ((g[j] - g[i]) * t[i]).sum(axis=1)
    d_center = ((C[j] - g[i]) * t[i]).sum(axis=1)
    assert np.all(d_gamma > 0)
    assert np.all(d_center >= -1e-9)


# --- curvature centers ---------------------------------------------------------

def test_curvature_center_cases():
    chd = build_chart(DiskDomain(1.0), 1.0)
    for s in (0.0, 0.4, -0.9):
        assert np.allclose(curvature_center(chd, s), [0.0, 1.0], atol=1e-9)
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    assert np.allclose(curvature_center(ch, 0.0), [0.0, 4.0], atol=1e-7)
    flat = ArcsDomain([{"length": 0.5}, {"radius": 1.0, "span_deg": 180.0},
                      {"length": 0.5}])
    chf = build_chart(flat, 0.4)
    with pytest.raises(CenterAtInfinity):
        curvature_center(chf, 0.1)


# --- region, export, JSON -------------------------------------------------------

def test_region_cap_and_membership():
    ch = build_chart(EllipseDomain(2.0, 1.0), 2.0)
    reg = FlowRegion(ch, y0=1.0)
    # at s=0 the cap binds: (y0 - beta)/alpha' = 1 < R = 4
    assert abs(reg.rmax(np.array(0.0)) - 1.0) < 1e-12
    assert reg.contains(0.5, 0.0)
    assert not reg.contains(1.5, 0.0)
    assert not reg.contains(0.1, 2.5)
    # 1 - r K > 0 throughout the admissible set
    s = np.linspace(0.0, 2.0, 200)
    r = 0.999 * reg.rmax(s)
    assert np.all(1.0 - r * ch.curvature(s) > 0)


def test_chart_csv_export(tmp_path):
    ch = build_chart(DiskDomain(1.0), 1.0)
    path = tmp_path / "chart.csv"
    ch.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "s,alpha,beta,alphap,betap,K,Kp"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape[1] == 7


def test_load_domain_roundtrip(tmp_path):
    spec = {"type": "ellipse", "a": 2.0, "b": 1.0}
    dom = load_domain(spec)
    assert isinstance(dom, EllipseDomain)
    import json
    p = tmp_path / "dom.json"
    p.write_text(json.dumps({"type": "disk", "radius": 1.5}))
    assert isinstance(load_domain(str(p)), DiskDomain)
    with pytest.raises(ValueError):
        load_domain({"type": "hexagon"})


def test_signed_distance_symmetry_and_scale():
    for dom in (EllipseDomain(2.0, 1.0), ArcsDomain(thin_arc_entries()),
                SplineDomain([[0, 0], [0.9, 0.12], [1.6, 0.7], [1.1, 1.6], [0, 2.0]])):
        pts = np.array([[0.3, 0.4], [1.1, 0.9], [0.05, 1.2]])
        mirr = pts * np.array([-1.0, 1.0])
        sd = dom.signed_distance(pts)
        sdm = dom.signed_distance(mirr)
        assert np.array_equal(sd, sdm)
    # brute-force magnitude check on the ellipse
    dom = EllipseDomain(2.0, 1.0)
    P = np.array([0.7, 0.5])
    u = np.linspace(0, 2 * np.pi, 400001)
    bx, by = 2 * np.sin(u), 1 - np.cos(u)
    ref = np.min(np.hypot(bx - P[0], by - P[1]))
    assert abs(abs(float(dom.signed_distance([P])[0])) - ref) < 1e-9
