import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _curves import curve_set, random_curve, random_data
from spectra.curve import curve_from_inner_points, local_expansion, place_point
from spectra.differentials import integrate_forms
from spectra.errors import PreconditionError, SpectraError
from spectra.periodicity import (
    GENUS1_SEED,
    SearchSeed,
    aj_form,
    check_P1,
    check_P1_prime,
    check_P2,
    crosscheck,
    gamma_integrals,
    log_mu_raw,
    mu_normalization,
    newton_search,
    pairing_form,
    pi_vector,
    reciprocity_residual,
    spectral_data,
)

C, TAU = 0.8 + 0.3j, 0.2 + 1.1j


@pytest.fixture(scope="module")
def sd1():
    return spectral_data(curve_from_inner_points([0.3 + 0.2j, -0.4 + 0.1j]), C, TAU, singular=True)


@pytest.fixture(scope="module")
def found():
    return newton_search(GENUS1_SEED)


def test_genus_zero_vacuous():
    curve = curve_from_inner_points([0.4 - 0.3j], scale=1.7)
    sd = spectral_data(curve, C, TAU)
    assert pi_vector(sd).omega_part.size == 0
    assert check_P1(sd)["pass"]


def test_pi_vector_imaginary(sd1):
    v = pi_vector(sd1).omega_part
    assert np.max(np.abs(v.real)) < 1e-10


def test_pi_vector_self_convergence(sd1):
    a = pi_vector(sd1, tol=1e-11).as_array()
    b = pi_vector(sd1, tol=1e-13).as_array()
    assert np.max(np.abs(a - b)) < 1e-10


def test_aj_monomial_value(sd1):
    # lam^0 dlam / y at p0 equals 1 / y(p0) in the lam chart
    from spectra.differentials import monomial, place_values

    e0, _ = place_values(sd1.curve, [monomial(0)])
    assert abs(e0[0] - 1 / place_point(sd1.curve, "p0").y) < 1e-14


def test_aj_linearity(sd1):
    a = aj_form(sd1.curve, C, sd1.basis)
    b = aj_form(sd1.curve, 2 * C, sd1.basis)
    assert b.distance(a * 2) < 1e-13


def test_pairing_zero_for_zero_principal_part(sd1):
    zero = pairing_form(sd1.curve, sd1.theta * 0.0, sd1.basis)
    assert np.max(np.abs(zero.as_array())) < 1e-14


@pytest.mark.parametrize("which", ["theta", "psi"])
def test_three_formulations_agree(sd1, which):
    factor = 1.0 if which == "theta" else TAU
    form = sd1.theta if which == "theta" else sd1.psi
    pi = pi_vector(sd1, which) * (-1 / (2j * np.pi))
    aj = aj_form(sd1.curve, C, sd1.basis, factor, sd1.etas)
    pr = pairing_form(sd1.curve, form, sd1.basis, sd1.etas)
    assert aj.distance(pr) < 1e-8
    assert aj.distance(pi) < 1e-6 * (1 + abs(C))


def test_reciprocity(sd1):
    assert np.max(np.abs(reciprocity_residual(sd1))) < 1e-9


def test_crosscheck_linearity():
    curve = curve_from_inner_points([0.3 + 0.2j, -0.4 + 0.1j])
    r1, r2 = crosscheck(curve, C, TAU), crosscheck(curve, 2 * C, TAU)
    a = r1.form_values["theta"]["aj"]
    b = r2.form_values["theta"]["aj"]
    assert b.distance(a * 2) < 1e-12


def test_crosscheck_curve_set():
    for curve, c, tau in curve_set()[::3]:
        r = crosscheck(curve, c, tau)
        assert r.cross_discrepancy < 1e-6 * (1 + abs(c))


def test_generic_curve_fails_p1(sd1):
    rep = check_P1(sd1)
    assert not rep["pass"]
    assert max(r for _, r in rep["lattice"]) > 1e-3


def test_gamma_orientation(sd1):
    fwd = gamma_integrals(sd1, sd1.theta0, corrected=False)
    gm = sd1.gammas[1]
    back = integrate_forms([sd1.theta0], gm.reversed(), 1e-12)[0]
    assert abs(back + fwd[0]) < 1e-10


def test_gamma_exact_difference(sd1):
    # d(y) over gamma_1 gives y(q_1) - y(p_1) = -2 y(p_1)
    from spectra.differentials import RationalDifferential

    curve = sd1.curve
    form = RationalDifferential(curve.P.derivative().c / 2, 0, "second-kind")
    v = integrate_forms([form], sd1.gammas[1], 1e-12)[0]
    assert abs(v + 2 * place_point(curve, "p1").y) < 1e-9


def test_singular_eta_part_matches_residue_formula(sd1):
    pi = pi_vector(sd1) * (-1 / (2j * np.pi))
    aj = aj_form(sd1.curve, C, sd1.basis, 1.0, sd1.etas)
    assert np.max(np.abs(pi.eta_part - aj.eta_part)) < 1e-6


def test_p2_needs_singular_mode():
    sd = spectral_data(curve_from_inner_points([0.3 + 0.2j, -0.4 + 0.1j]), C, TAU)
    with pytest.raises(PreconditionError):
        check_P2(sd)


def test_p1_prime_precondition(sd1):
    with pytest.raises(PreconditionError):
        check_P1_prime(sd1)


def test_p1_prime_genus_zero_closed_form():
    curve = curve_from_inner_points([0.4 - 0.3j], scale=1.7)
    c = 0.6 - 0.9j
    sd = spectral_data(curve, c, TAU, singular=True)
    rep = check_P1_prime(sd)
    assert rep["pass_P1_prime"]
    # log mu = y (A/lam + B) exactly, the sigma-odd primitive
    A = c / place_point(curve, "p0").y
    B = -np.conj(c) / local_expansion(curve, "pinf", 4).y.coeff(-1)
    nm = mu_normalization(sd, sd.theta0)
    for z in (0.3 + 0.2j, -0.25 + 0.1j, 0.1 - 0.35j):
        v, y = log_mu_raw(sd, sd.theta0, nm, z)
        assert abs(v - y * (A / z + B)) < 1e-9


def test_search_converges(found):
    assert found.residual < 1e-9
    assert found.verified_residual < 1e-9
    sd = spectral_data(found.curve, found.solution.c, found.solution.tau)
    assert check_P1(sd)["pass"]


def test_search_fixed_point(found):
    again = newton_search(found.solution)
    assert again.iterations == 0


def test_search_restart_from_perturbation(found):
    s = found.solution
    inner = (s.inner[0], s.inner[1] * (1 + 1e-3) * np.exp(1e-3j))
    again = newton_search(SearchSeed(inner, s.c, s.tau, s.branched, s.scale), found.targets)
    assert np.max(np.abs(np.array(again.solution.inner) - np.array(s.inner))) < 1e-6


def test_search_degenerate_seed():
    seed = SearchSeed((0.3 + 0.2j, 0.3 + 0.2j), C, TAU)
    with pytest.raises(SpectraError):
        newton_search(seed)


def test_search_target_length():
    with pytest.raises(ValueError):
        newton_search(GENUS1_SEED, targets=[0])


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10**6))
def test_crosscheck_random_genus_one(seed):
    rng = np.random.default_rng(seed)
    curve = random_curve(rng, 1, bool(seed % 2))
    c, tau = random_data(rng)
    r = crosscheck(curve, c, tau)
    assert r.cross_discrepancy < 1e-6 * (1 + abs(c))
    assert np.max(np.abs(r.reciprocity)) < 1e-6
