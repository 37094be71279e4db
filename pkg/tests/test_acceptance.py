"""Acceptance criteria, one test each, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (the verdict lines bypass output
capture) or directly with
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _curves import curve_set  # noqa: E402
from spectra.differentials import residue  # noqa: E402
from spectra.holonomy import (  # noqa: E402
    default_grid,
    discriminant_scan,
    empirical_periodicity,
    fit_empirical_curve,
    homogeneous_family,
    lax_group_family,
    symmetry_audit,
    vacuum_family,
)
from spectra.laxflow import commutativity_defect, evolve, flatness_report, random_loop, su2  # noqa: E402
from spectra.periodicity import (  # noqa: E402
    GENUS1_SEED,
    SearchSeed,
    aj_form,
    crosscheck,
    newton_search,
    pi_vector,
    spectral_data,
)

pytestmark = pytest.mark.slow

TWO_PI_I = 2j * np.pi
AUDIT_KEYS = ("symmetry", "unitarity", "det", "commutativity")


_CACHE = {}


@pytest.fixture(autouse=True)
def _capture(capsys):
    _CACHE["capsys"] = capsys
    yield
    _CACHE.pop("capsys", None)


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    with _CACHE["capsys"].disabled():
        print("\n" + line, flush=True)
    assert ok, line


def _fixture_reports():
    if "reports" not in _CACHE:
        t0 = time.perf_counter()
        fixtures = curve_set()
        reports = [crosscheck(curve, c, tau) for curve, c, tau in fixtures]
        _CACHE["reports"] = (fixtures, reports, time.perf_counter() - t0)
    return _CACHE["reports"]


def test_1_four_form_equivalence():
    fixtures, reports, elapsed = _fixture_reports()
    worst = max(r.cross_discrepancy / (1 + abs(c)) for (_, c, _), r in zip(fixtures, reports))
    modes = {f.branched for f, _, _ in fixtures}
    ok = worst < 1e-6 and elapsed < 60 and modes == {True, False}
    verdict(1, ok, f"max discrepancy/(1+|c|) = {worst:.3g} over {len(reports)} curves in {elapsed:.1f} s")


def test_2_reciprocity():
    _, reports, _ = _fixture_reports()
    worst = max(float(np.max(np.abs(r.reciprocity))) for r in reports)
    verdict(2, worst < 1e-6, f"max reciprocity residual = {worst:.3g}")


def test_3_singular_extension():
    gap, res_err = 0.0, 0.0
    fixtures = [f for f in curve_set() if f[0].genus == 1]
    for curve, c, tau in fixtures:
        sd = spectral_data(curve, c, tau, singular=True)
        pi = pi_vector(sd) * (-1 / TWO_PI_I)
        aj = aj_form(curve, c, sd.basis, 1.0, sd.etas)
        gap = max(gap, float(np.max(np.abs(pi.eta_part - aj.eta_part))))
        for k, (p, q) in {1: ("p1", "q1"), -1: ("pm1", "qm1")}.items():
            eta = sd.etas[k]
            res_err = max(
                res_err,
                abs(residue(curve, eta, p) - 1 / TWO_PI_I),
                abs(residue(curve, eta, q) + 1 / TWO_PI_I),
            )
    ok = gap < 1e-6 and res_err < 1e-9
    verdict(3, ok, f"eta_part gap = {gap:.3g}, eta residue error = {res_err:.3g} on {len(fixtures)} curves")


def test_4_riemann_relations():
    sym, min_eig = 0.0, np.inf
    for curve, c, tau in curve_set():
        T = spectral_data(curve, c, tau).basis.tau
        sym = max(sym, float(np.max(np.abs(T - T.T))))
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(T.imag))))
    verdict(4, sym < 1e-7 and min_eig > 0, f"symmetry defect = {sym:.3g}, min eig Im tau = {min_eig:.3g}")


def test_5_lax_conservation():
    t0 = time.perf_counter()
    spec = su2()
    drift, comm = 0.0, 0.0
    g = np.linspace(0.0, 1.0, 5)
    for d in (1, 3):
        xi = random_loop(spec, d, 2024 + d)
        drift = max(drift, evolve(spec, xi, g, g, tol=1e-10).drift)
        comm = max(comm, commutativity_defect(spec, xi, g, g, 1e-10))
    elapsed = time.perf_counter() - t0
    ok = drift < 1e-8 and comm < 1e-6 and elapsed < 30
    verdict(5, ok, f"drift = {drift:.3g}, order-swap = {comm:.3g} on 5x5, {elapsed:.1f} s")


def test_6_flatness_harmonicity():
    spec = su2()
    mc, harm, ratios = 0.0, 0.0, []
    for d in (1, 3):
        rep = flatness_report(spec, random_loop(spec, d, 2024 + d), h=1e-3)
        mc = max(mc, rep["max_maurer_cartan"])
        harm = max(harm, rep["harmonicity"][0])
        ratios += [rep["mc_ratio"], rep["harmonicity_ratio"]]
    second_order = all(3.0 < r < 5.0 for r in ratios)
    ok = mc < 1e-6 and harm < 1e-6 and second_order
    verdict(6, ok, f"MC = {mc:.3g}, d*phi = {harm:.3g}, halving ratios {np.round(ratios, 2).tolist()}")


def test_7_holonomy_audits():
    spec = su2()
    mesh, circle = default_grid(8, 8, 32)
    lax_worst = 0.0
    for d in (1, 3):
        fam = lax_group_family(spec, random_loop(spec, d, 2024 + d), 0.3 + 1.1j)
        a = symmetry_audit(fam, mesh.ravel(), circle)
        lax_worst = max(lax_worst, max(a[k] for k in AUDIT_KEYS))
    a = symmetry_audit(vacuum_family(0.3 + 1.1j, 1, 0))
    vac_worst = max(a[k] for k in AUDIT_KEYS)
    ok = lax_worst < 1e-6 and vac_worst < 1e-9
    verdict(7, ok, f"evolve-generated worst = {lax_worst:.3g}, vacuum worst = {vac_worst:.3g}")


def test_8_round_trip():
    tau = 0.3 + 1.1j
    a0 = np.array([[0.05 + 0.1j, 0.2], [0.07j, -0.05 - 0.1j]])
    fam = homogeneous_family(a0, np.exp(0.4j), tau)
    scan = discriminant_scan(fam)
    fit = fit_empirical_curve(scan.branch_points, scan.branched_at_zero)
    rep = empirical_periodicity(fam, fit)
    lat, terr = rep["max_lattice_residual"], rep["tau_error"]
    ok = lat < 1e-7 and terr < 1e-6
    verdict(8, ok, f"fitted genus {fit.curve.genus}, lattice residual = {lat:.3g}, tau error = {terr:.3g}")


def test_9_search():
    found = newton_search(GENUS1_SEED)
    s = found.solution
    inner = (s.inner[0], s.inner[1] * (1 + 1e-3) * np.exp(1e-3j))
    again = newton_search(SearchSeed(inner, s.c, s.tau, s.branched, s.scale), found.targets)
    moved = float(np.max(np.abs(np.array(again.solution.inner) - np.array(s.inner))))
    ok = found.residual < 1e-9 and found.verified_residual < 1e-9 and moved < 1e-6
    verdict(
        9,
        ok,
        f"residual = {found.residual:.3g}, tightened = {found.verified_residual:.3g}, restart shift = {moved:.3g}",
    )


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
