import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectra.curve import (
    PLACES_BRANCHED,
    PLACES_UNBRANCHED,
    build_curve,
    build_gamma,
    build_homology,
    curve_from_inner_points,
    lift_path,
    local_expansion,
    place_point,
    rho,
    sigma,
)
from spectra.errors import (
    ChartError,
    DegreeError,
    HomologyConstructionError,
    PathTooCloseError,
    RealityViolation,
    SingularCurveError,
)
from spectra.numkernel import ContourPath, Line, ToleranceProfile, circle, polyline

G1 = [0.3 + 0.2j, -0.4 + 0.1j]
G2 = [0.3 + 0.2j, -0.4 + 0.1j, 0.1 - 0.5j]


@pytest.fixture(scope="module")
def g1():
    return curve_from_inner_points(G1)


def test_genus_zero_half_two():
    # roots {1/2, 2} are closed under alpha -> 1/conj(alpha)
    a = -np.convolve([-0.5, 1.0], [-2.0, 1.0])
    c = build_curve(a)
    assert c.genus == 0
    assert np.allclose(sorted(c.branch_points, key=abs), [0.5, 2.0])
    lam = np.exp(2j * np.pi * np.arange(64) / 64)
    v = c.a(lam) / lam
    assert np.max(np.abs(v.imag)) < 1e-12
    assert np.all(v.real > 0) or np.all(v.real < 0)


@pytest.mark.parametrize("branched, genus", [(False, 1), (True, 2)])
def test_degree_genus(branched, genus):
    assert curve_from_inner_points(G1, branched=branched).genus == genus


def test_odd_degree_rejected():
    with pytest.raises(DegreeError):
        build_curve([1.0, 2.0, 3.0, 4.0])


def test_unit_circle_root():
    with pytest.raises(RealityViolation):
        build_curve([-1.0, 0.0, 1.0])


def test_asymmetric_roots():
    a = np.convolve([-0.5, 1.0], [-3.0, 1.0])
    with pytest.raises(RealityViolation):
        build_curve(a)


def test_repeated_roots():
    with pytest.raises(SingularCurveError):
        curve_from_inner_points([0.5, 0.5])


def test_zero_root_unbranched():
    with pytest.raises(DegreeError):
        curve_from_inner_points([0.0])


def test_phase_normalization_accepts_rotated_coefficients():
    base = curve_from_inner_points(G1)
    rotated = build_curve(np.exp(0.7j) * base.a.c)
    assert np.allclose(np.sort_complex(rotated.branch_points), np.sort_complex(base.branch_points))


def _random_points(curve, n, seed):
    rng = np.random.default_rng(seed)
    lam = (0.3 + 2 * rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    return [curve.point(l) for l in lam]


@pytest.mark.parametrize("branched", [False, True])
def test_involutions(branched):
    c = curve_from_inner_points(G1, branched=branched)
    for pt in _random_points(c, 40, 1):
        s = sigma(c, sigma(c, pt))
        r = rho(c, rho(c, pt))
        assert s.lam == pt.lam and s.y == pt.y
        assert abs(r.lam - pt.lam) < 1e-12 and abs(r.y - pt.y) < 1e-12 * (1 + abs(pt.y))
        q = rho(c, pt)
        assert c.on_curve_residual(q) < 1e-12


@pytest.mark.parametrize("branched", [False, True])
def test_rho_fixed_point_free_on_circle(branched):
    c = curve_from_inner_points(G2, branched=branched)
    for t in np.arange(128) / 128:
        pt = c.point(np.exp(2j * np.pi * t))
        assert abs(rho(c, pt).y - pt.y) > 1e-3 * abs(pt.y)


def test_rho_needs_chart_at_zero(g1):
    with pytest.raises(ChartError):
        rho(g1, g1.point(0.0))


def test_constant_path(g1):
    start = g1.point(0.5j)
    lp = lift_path(g1, ContourPath([Line(0.5j, 0.5j)]), start)
    assert all(abs(p.y - start.y) < 1e-14 for p in lp.samples)


def test_single_branch_point_monodromy(g1):
    bp = g1.inner[0]
    path = circle(bp, 0.05)
    lp = lift_path(g1, path, g1.point(path.start))
    assert lp.check()
    assert abs(lp.end.y + lp.start.y) < 1e-10 * abs(lp.start.y)


def test_pair_monodromy(g1):
    path = circle(-0.05 + 0.15j, 0.5)
    lp = lift_path(g1, path, g1.point(path.start))
    assert lp.check() and lp.closes_on_sheet


def test_path_too_close(g1):
    bp = g1.inner[0]
    with pytest.raises(PathTooCloseError):
        lift_path(g1, polyline([bp - 0.1, bp + 0.1]), g1.point(bp - 0.1))


def test_lift_samples_on_curve(g1):
    lp = lift_path(g1, polyline([0.9, 0.9j, -0.9]), g1.point(0.9))
    assert max(g1.on_curve_residual(p) for p in lp.samples) < 1e-12


@pytest.mark.parametrize("branched", [False, True])
def test_local_expansions(branched):
    c = curve_from_inner_points(G1, branched=branched)
    places = PLACES_BRANCHED if branched else PLACES_UNBRANCHED
    for place in places:
        ex = local_expansion(c, place, order=10)
        prod = ex.y * ex.inv_y
        assert prod.order >= 6
        for k in range(min(prod.val, 0), 6):
            assert abs(prod.coeff(k) - (1.0 if k == 0 else 0.0)) < 1e-10
        assert ex.y.coeff(ex.y.val) != 0


def test_sheet_at_p0(g1):
    ex = local_expansion(g1, "p0", order=6)
    assert abs(ex.y.coeff(0) - place_point(g1, "p0").y) < 1e-14
    assert abs(ex.y.coeff(0) ** 2 - g1.a(0.0)) < 1e-14
    exq = local_expansion(g1, "q0", order=6)
    for k in range(4):
        assert abs(exq.y.coeff(k) + ex.y.coeff(k)) < 1e-14


def test_branched_chart_mismatch():
    c = curve_from_inner_points(G1, branched=True)
    with pytest.raises(ChartError):
        local_expansion(c, "q0")


@pytest.mark.parametrize("inner, branched", [(G1, False), (G2, False), (G1, True)])
def test_homology_closes(inner, branched):
    c = curve_from_inner_points(inner, branched=branched)
    h = build_homology(c)
    assert h.genus == c.genus
    for lp in h.loops:
        assert lp.closes_on_sheet and lp.check()
    # a closed loop traversed twice returns to the start
    lp = h.loops[0]
    twice = lift_path(c, lp.base + lp.base, lp.start)
    assert twice.closes_on_sheet


def test_homology_genus_zero_is_empty():
    h = build_homology(curve_from_inner_points([0.4 - 0.3j]))
    assert h.genus == 0 and h.loops == ()
    assert h.layout is not None


def test_layout_rejects_real_axis():
    # cuts on arg 0 would collide with the gamma paths to lam = 1
    with pytest.raises(HomologyConstructionError):
        build_homology(curve_from_inner_points([0.5]))


def test_homology_cluster_rejected():
    with pytest.raises(HomologyConstructionError):
        tol = ToleranceProfile(path_tol=1e-3)
        build_homology(curve_from_inner_points([0.5j, 0.5j * np.exp(0.01j)], tol=tol))


@pytest.mark.parametrize("k", [1, -1])
def test_gamma_endpoints(g1, k):
    gam = build_gamma(g1, k)
    assert abs(gam.end.lam - k) < 1e-12
    assert abs(gam.end.y + gam.start.y) < 1e-8


def test_gamma_exact_form(g1):
    # d(y) = P'(lam) / (2 y) dlam integrates to y(q) - y(p) = -2 y(p)
    from spectra.differentials import RationalDifferential, integrate_forms

    dP = g1.P.derivative().c / 2
    form = RationalDifferential(dP, 0, "second-kind")
    gam = build_gamma(g1, 1)
    v = integrate_forms([form], gam, 1e-12)[0]
    assert abs(v - (gam.end.y - gam.start.y)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 0.7), st.floats(0.2, 0.7), st.floats(0.3, 2.8))
def test_random_genus_one_valid(r1, r2, dth):
    inner = [r1, r2 * np.exp(1j * dth)]
    c = curve_from_inner_points(inner)
    assert c.genus == 1
    assert len(c.inner) == 2
    for z in c.branch_points:
        assert np.min(np.abs(c.branch_points - 1 / np.conj(z))) < 1e-9
