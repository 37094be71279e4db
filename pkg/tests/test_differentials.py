import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectra.curve import build_gamma, build_homology, curve_from_inner_points, lift_path, local_expansion, place_point
from spectra.differentials import (
    RationalDifferential,
    a_normalize,
    build_eta,
    build_second_kind,
    check_form_reality,
    holomorphic_monomials,
    integrate_forms,
    normalize_basis,
    period,
    period_table,
    principal_parts,
    residue,
    small_circle_residue,
)
from spectra.errors import DegenerateCurveError
from spectra.numkernel import TWO_PI_I, circle

G1 = [0.3 + 0.2j, -0.4 + 0.1j]
G2 = [0.3 + 0.2j, -0.4 + 0.1j, 0.1 - 0.5j]


def _setup(inner, branched=False):
    c = curve_from_inner_points(inner, branched=branched)
    h = build_homology(c)
    return c, h, normalize_basis(c, h)


@pytest.fixture(scope="module")
def g1():
    return _setup(G1)


@pytest.fixture(scope="module")
def g2():
    return _setup(G2)


def test_holomorphic_residue_zero(g1):
    curve, _, basis = g1
    for w in basis.forms:
        assert abs(residue(curve, w, "p0")) < 1e-12


def test_second_kind_residues(g1):
    curve, _, _ = g1
    theta = build_second_kind(curve, 0.8 + 0.3j)
    for place in ("p0", "q0", "pinf", "qinf", "p1"):
        assert abs(residue(curve, theta, place)) < 1e-10
        assert abs(small_circle_residue(curve, theta, place)) < 1e-10


def test_sigma_oddness(g1):
    curve, _, _ = g1
    theta = build_second_kind(curve, 0.8 + 0.3j)
    lam = np.array([0.4 + 0.9j, -1.3 + 0.2j, 2.0 - 0.5j])
    y = np.sqrt(curve.P(lam))
    assert np.allclose(theta.coefficient_form(lam, -y), -theta.coefficient_form(lam, y))


@pytest.mark.parametrize("branched", [False, True])
def test_second_kind_reality(branched):
    curve = curve_from_inner_points(G1, branched=branched)
    theta = build_second_kind(curve, 0.8 + 0.3j)
    assert check_form_reality(curve, theta, sign=-1.0) < 1e-12


@pytest.mark.parametrize("branched", [False, True])
def test_principal_part_round_trip(branched):
    curve = curve_from_inner_points(G1, branched=branched)
    c = 0.8 + 0.3j
    pp = principal_parts(curve, build_second_kind(curve, c))
    assert abs(pp.c - c) < 1e-12
    if not branched:
        assert pp.entries["q0"] == -pp.entries["p0"]


def test_tau_from_principal_parts(g1):
    curve, _, _ = g1
    c, tau = 0.8 + 0.3j, 0.2 + 1.1j
    pt = principal_parts(curve, build_second_kind(curve, c))
    ps = principal_parts(curve, build_second_kind(curve, c * tau))
    assert abs(ps.c / pt.c - tau) < 1e-12


def test_zero_principal_part_rejected(g1):
    with pytest.raises(DegenerateCurveError):
        build_second_kind(g1[0], 0.0)


def test_genus_zero_closed_form():
    # genus 0: Theta is exact, Theta = d[y (A/lam + B)]
    curve = curve_from_inner_points([0.4 - 0.3j], scale=1.7)
    c = 0.6 - 0.9j
    theta = build_second_kind(curve, c)
    y0 = place_point(curve, "p0").y
    yinf = local_expansion(curve, "pinf", 4).y.coeff(-1)
    A, B = c / y0, -np.conj(c) / yinf
    P, dP = curve.P, curve.P.derivative()
    lam = np.array([0.7 + 0.1j, -0.3 + 1.4j, 2.2 - 0.8j, -0.5 - 0.5j])
    y = np.sqrt(P(lam))
    exact = (dP(lam) * (A / lam + B) / 2 - P(lam) * A / lam**2) / y
    assert np.max(np.abs(theta.coefficient_form(lam, y) - exact)) < 1e-12


def test_exact_form_period_zero(g1):
    curve, h, _ = g1
    # d(y lam) = (lam P'/2 + P) dlam / y
    b = np.convolve([0, 1], curve.P.derivative().c) / 2
    b[: len(curve.P.c)] += curve.P.c
    form = RationalDifferential(b, 0, "second-kind")
    for lp in h.loops:
        assert abs(period(curve, form, lp)) < 1e-10


def test_period_self_convergence(g1):
    curve, h, _ = g1
    w = holomorphic_monomials(curve)
    a = integrate_forms(w, h.loops[0], 1e-10)
    b = integrate_forms(w, h.loops[0], 1e-13)
    assert np.max(np.abs(a - b)) < 1e-10


def test_genus_one_normalization(g1):
    _, _, basis = g1
    assert basis.table.A_periods.shape == (1, 1)
    assert abs(basis.table.A_periods[0, 0] - 1) < 1e-12


@pytest.mark.parametrize("inner, branched", [(G1, False), (G2, False), (G1, True)])
def test_riemann_relations(inner, branched):
    _, _, basis = _setup(inner, branched)
    A = basis.table.A_periods
    assert np.max(np.abs(A - np.eye(len(A)))) < 1e-11
    tau = basis.tau
    assert np.max(np.abs(tau - tau.T)) < 1e-9
    assert np.min(np.linalg.eigvalsh(tau.imag)) > 0


def test_a_normalize(g2):
    curve, h, basis = g2
    theta = build_second_kind(curve, 0.8 + 0.3j)
    theta0, s = a_normalize(curve, theta, basis)
    assert np.max(np.abs(s.imag)) < 1e-9
    tab = period_table(curve, [theta0], h)
    assert np.max(np.abs(tab.A_periods)) < 1e-10
    assert np.max(np.abs(tab.B_periods.real)) < 1e-9
    _, s2 = a_normalize(curve, theta0, basis)
    assert np.max(np.abs(s2)) < 1e-10


@pytest.mark.parametrize("k", [1, -1])
def test_eta(g1, k):
    curve, h, basis = g1
    eta = build_eta(curve, k, basis)
    p, q = ("p1", "q1") if k == 1 else ("pm1", "qm1")
    assert abs(residue(curve, eta, p) - 1 / TWO_PI_I) < 1e-9
    assert abs(residue(curve, eta, q) + 1 / TWO_PI_I) < 1e-9
    assert abs(residue(curve, eta, "p0")) < 1e-12
    assert abs(residue(curve, eta, "pinf")) < 1e-12
    assert np.max(np.abs(period_table(curve, [eta], h).A_periods)) < 1e-10


def test_eta_small_circle_matches(g1):
    curve, _, basis = g1
    eta = build_eta(curve, 1, basis)
    path = circle(1.0, 0.05)
    lp = lift_path(curve, path, curve.point(path.start, place_point(curve, "p1").y))
    v = integrate_forms([eta], lp, 1e-12)[0] / TWO_PI_I
    assert abs(v - 1 / TWO_PI_I) < 1e-9


def test_eta_rejects_invalid_k(g1):
    curve, _, basis = g1
    with pytest.raises(ValueError):
        build_eta(curve, 2, basis)
    with pytest.raises(ValueError):
        build_gamma(curve, 2)


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_second_kind_principal_parts_property(re, im):
    if abs(complex(re, im)) < 1e-3:
        return
    curve = curve_from_inner_points(G1)
    c = complex(re, im)
    pp = principal_parts(curve, build_second_kind(curve, c))
    assert abs(pp.c - c) < 1e-11 * (1 + abs(c))
