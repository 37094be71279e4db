import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from spectra.errors import AlgebraSpecError, GridError, NonFlatError
from spectra.laxflow import (
    SAMPLE_LAMBDAS,
    FormSource,
    LaxSource,
    LoopElement,
    algebra_from_dict,
    cartan_embed,
    cartan_form,
    commutativity_defect,
    evolve,
    flatness_report,
    harmonicity_residual,
    homogeneous_loop,
    integrate_frame,
    lax_rhs,
    lie_algebra,
    maurer_cartan_residual,
    phi_from_coeffs,
    phi_lambda,
    r_project,
    random_loop,
    su2,
)


@pytest.fixture(scope="module")
def spec():
    return su2()


@pytest.mark.parametrize("signs", [(1, -1), (1, 1, -1), (1, -1, 1)])
def test_algebra_audit(signs):
    audit = lie_algebra(signs).audit()
    for name, v in audit.items():
        assert v < 1e-12, name


def test_algebra_from_dict_rejects_unknown():
    with pytest.raises(AlgebraSpecError):
        algebra_from_dict({"signs": [1, -1], "colour": "red"})


def test_r_project_pieces(spec):
    t = np.diag([1.0 + 2j, -1.0 - 2j])
    nbar = np.array([[0, 0], [3.0, 0]], complex)
    n = np.array([[0, 3.0], [0, 0]], complex)
    # su(2) with sigma = Ad diag(1,-1): h is diagonal, so n and nbar are empty
    assert np.allclose(r_project(spec, t), t / 2)
    s3 = lie_algebra((1, 1, -1))
    e_n = np.zeros((3, 3), complex)
    e_n[0, 1] = 1.0
    e_nb = e_n.T.copy()
    assert np.allclose(r_project(s3, e_n), 0)
    assert np.allclose(r_project(s3, e_nb), e_nb)
    with pytest.raises(AlgebraSpecError):
        r_project(spec, n + nbar)


@pytest.mark.parametrize("d", [1, 3, 5])
def test_random_loop_admissible(spec, d):
    xi = random_loop(spec, d, 7)
    for v in xi.defects(spec).values():
        assert v < 1e-13
    assert xi.norm2(spec) == pytest.approx(1.0)


def test_loop_element_validation(spec):
    with pytest.raises(AlgebraSpecError):
        LoopElement(2, np.zeros((5, 2, 2)))
    bad = random_loop(spec, 1, 0)
    bad.coeffs[0] += 1.0
    with pytest.raises(AlgebraSpecError):
        bad.check(spec)


def test_loop_element_round_trip(spec):
    xi = random_loop(spec, 3, 1)
    back = LoopElement.from_dict(xi.to_dict())
    assert np.array_equal(back.coeffs, xi.coeffs)


def _expanded_rhs(spec, xi):
    """Coefficients of [xi(lam), lam xi_d + r(xi_{d-1})] for j = -d..d+1."""
    d = xi.d
    Z = {1: xi[d], 0: r_project(spec, xi[d - 1])}
    out = {}
    for j in range(-d, d + 2):
        acc = np.zeros((spec.n, spec.n), complex)
        for k, Zk in Z.items():
            X = xi[j - k]
            acc += X @ Zk - Zk @ X
        out[j] = acc
    return out


@pytest.mark.parametrize("d", [1, 3])
@pytest.mark.parametrize("signs", [(1, -1), (1, 1, -1)])
def test_lax_rhs_expansion_oracle(d, signs):
    spec = lie_algebra(signs)
    xi = random_loop(spec, d, 11)
    dz, dzb = lax_rhs(spec, xi)
    ref = _expanded_rhs(spec, xi)
    assert np.abs(ref[d + 1]).max() < 1e-12
    for j in range(-d, d + 1):
        assert np.abs(dz[j + d] - ref[j]).max() < 1e-12


@pytest.mark.parametrize("d", [1, 3])
def test_lax_rhs_reality(spec, d):
    xi = random_loop(spec, d, 5)
    dz, dzb = lax_rhs(spec, xi)
    for j in range(-d, d + 1):
        assert np.abs(spec.conj(dz[j + d]) - dzb[-j + d]).max() < 1e-12


def test_stationary_loop(spec):
    xi = homogeneous_loop(spec, 0.7, 0.3)
    dz, dzb = lax_rhs(spec, xi)
    assert np.abs(dz).max() < 1e-14 and np.abs(dzb).max() < 1e-14
    g = np.linspace(0, 1, 3)
    field = evolve(spec, xi, g, g)
    assert np.abs(field.coeffs - xi.coeffs).max() < 1e-14


@pytest.mark.parametrize("d", [1, 3])
def test_conservation_and_commutativity(spec, d):
    xi = random_loop(spec, d, 3)
    g = np.linspace(0, 1, 5)
    field = evolve(spec, xi, g, g, tol=1e-10)
    assert field.drift < 1e-8
    assert field.invariant_defect < 1e-10
    assert commutativity_defect(spec, xi, g, g, 1e-10) < 1e-6


def test_evolve_su3(spec):
    s3 = lie_algebra((1, 1, -1))
    xi = random_loop(s3, 3, 2)
    g = np.linspace(0, 0.5, 3)
    assert evolve(s3, xi, g, g).drift < 1e-8


def test_evolve_jobs_independent(spec):
    xi = random_loop(spec, 3, 4)
    g = np.linspace(0, 0.5, 3)
    a = evolve(spec, xi, g, g, jobs=1)
    b = evolve(spec, xi, g, g, jobs=3)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_phi_at_one_and_conjugation(spec):
    xi = random_loop(spec, 3, 9)
    g = np.linspace(0, 0.2, 3)
    field = evolve(spec, xi, g, g)
    phi1 = phi_lambda(field, 1.0)
    d = xi.d
    C = field.coeffs
    assert np.allclose(phi1[..., 0, :, :], C[..., 2 * d, :, :] + r_project(spec, C[..., 2 * d - 1, :, :]))
    lam = 0.4 + 0.9j
    a = phi_lambda(field, 1 / np.conj(lam))
    b = phi_lambda(field, lam)
    assert np.abs(a[..., 0, :, :] - spec.conj(b[..., 1, :, :])).max() < 1e-13


def test_maurer_cartan_vacuum():
    A = np.diag([0.3 + 0.1j, -0.3 - 0.1j])
    xs = ys = np.linspace(0, 0.01, 5)
    phi = np.broadcast_to(np.stack([A, -A.conj().T]), (5, 5, 2, 2, 2))
    assert maurer_cartan_residual(phi, xs, ys) < 1e-15
    assert harmonicity_residual(phi, xs, ys) < 1e-15


def test_coarse_grid_rejected():
    phi = np.zeros((3, 3, 2, 2, 2))
    with pytest.raises(GridError):
        maurer_cartan_residual(phi, np.arange(3.0), np.arange(3.0))
    with pytest.raises(GridError):
        harmonicity_residual(phi, np.arange(3.0), np.arange(3.0))


@pytest.mark.parametrize("d", [1, 3])
def test_flatness_second_order(spec, d):
    rep = flatness_report(spec, random_loop(spec, d, 21))
    assert len(rep["maurer_cartan"][0]) == len(SAMPLE_LAMBDAS)
    assert rep["max_maurer_cartan"] < 1e-6
    assert rep["harmonicity"][0] < 1e-6
    assert 3.5 < rep["mc_ratio"] and 3.5 < rep["harmonicity_ratio"] < 4.5


def test_negative_controls(spec):
    xi = random_loop(spec, 3, 21)
    h, nodes = 1e-3, 7
    xs = 0.3 + h * (np.arange(nodes) - 3)
    ys = 0.2 + h * (np.arange(nodes) - 3)
    fr = integrate_frame(LaxSource(spec, xi), xs, ys, 1.0, 1e-13)
    rng = np.random.default_rng(0)
    phi = phi_from_coeffs(spec, fr.states, 3, 1.0)
    noisy = phi + 1e-2 * (rng.normal(size=phi.shape) + 1j * rng.normal(size=phi.shape))
    assert maurer_cartan_residual(noisy, xs, ys) > 1.0
    form = cartan_form(spec, fr)
    noisy = form + 1e-2 * rng.normal(size=form.shape)
    assert harmonicity_residual(noisy, xs, ys) > 1.0


def test_zero_form_identity_frame():
    src = FormSource(lambda z, lam: (np.zeros((2, 2)), np.zeros((2, 2))))
    g = np.linspace(0, 1, 4)
    fr = integrate_frame(src, g, g)
    assert np.abs(fr.F - np.eye(2)).max() < 1e-15


def test_constant_diagonal_frame_closed_form():
    A = np.diag([0.4 + 0.7j, -0.4 - 0.7j])
    Q = -A.conj().T
    src = FormSource(lambda z, lam: (A, Q))
    g = np.linspace(0, 1, 4)
    fr = integrate_frame(src, g, g, tol=1e-12)
    Mx, My = A + Q, 1j * (A - Q)
    for i, x in enumerate(g):
        for j, y in enumerate(g):
            assert np.abs(fr.F[i, j] - expm(x * Mx + y * My)).max() < 1e-9
    assert fr.unitarity_defect < 1e-8


def test_non_flat_detected():
    # phi = conj(z) E dz is abelian with curvature E dzbar^dz
    E = np.array([[0, 1.0], [0, 0]], complex)
    src = FormSource(lambda z, lam: (np.conj(z) * E, np.zeros((2, 2))))
    g = np.linspace(0, 1, 4)
    with pytest.raises(NonFlatError):
        integrate_frame(src, g, g)


def test_cartan_embed_fixed_subgroup(spec):
    g = np.linspace(0, 1, 4)
    fr = integrate_frame(FormSource(lambda z, lam: (np.zeros((2, 2)), np.zeros((2, 2)))), g, g)
    assert np.abs(cartan_embed(spec, fr) - np.eye(2)).max() < 1e-15
    # diagonal frames lie in the fixed subgroup of Ad diag(1, -1)
    A = np.diag([0.4 + 0.7j, -0.4 - 0.7j])
    fr = integrate_frame(FormSource(lambda z, lam: (A, -A.conj().T)), g, g)
    assert np.abs(cartan_embed(spec, fr) - np.eye(2)).max() < 1e-12


def test_homogeneous_cartan_image(spec):
    xi = homogeneous_loop(spec, 0.8, 0.5)
    x1 = xi[1]
    Mx, My = x1 + xi[-1], 1j * (x1 - xi[-1])
    g = np.linspace(0, 1.5, 6)
    fr = integrate_frame(LaxSource(spec, xi), g, g, 1.0, 1e-12)
    img = cartan_embed(spec, fr)
    for i, x in enumerate(g):
        for j, y in enumerate(g):
            assert np.abs(img[i, j] - expm(-2 * (x * Mx + y * My))).max() < 1e-7
    # the image is harmonic
    xs = ys = np.linspace(0, 6e-3, 7)
    fr2 = integrate_frame(LaxSource(spec, xi), xs, ys, 1.0, 1e-13)
    assert harmonicity_residual(cartan_embed(spec, fr2), xs, ys, kind="map") < 1e-6


def test_cartan_form_needs_lambda_one(spec):
    g = np.linspace(0, 1, 4)
    fr = integrate_frame(LaxSource(spec, random_loop(spec, 1, 0)), g, g, lam=1j)
    with pytest.raises(ValueError):
        cartan_form(spec, fr)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1, 3]))
def test_drift_property(seed, d):
    spec = su2()
    xi = random_loop(spec, d, seed)
    g = np.linspace(0, 1, 3)
    assert evolve(spec, xi, g, g).drift < 1e-8
