"""Meromorphic differentials ``b(lam) / (lam^m (lam - k)^e) dlam / y`` on a spectral curve."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .curve import (
    Cycle,
    CurvePoint,
    PLACES_BRANCHED,
    PLACES_UNBRANCHED,
    HomologyBasis,
    LiftedPath,
    SpectralCurve,
    local_expansion,
    lift_path,
)
from .errors import DegenerateCurveError, IllConditionedPeriods, NumericalInconsistency
from .numkernel import TWO_PI_I, Arc, ContourPath, adaptive_gauss
from .series import Laurent

KINDS = ("holomorphic", "second-kind", "third-kind")


@dataclass(frozen=True)
class RationalDifferential:
    """The form ``b(lam) / (lam^m (lam - pole)) dlam / y``.

    ``pole`` is ``None`` unless the form has simple poles over ``lam = pole``.
    """

    b: np.ndarray
    m: int = 0
    kind: str = "holomorphic"
    pole: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=complex))
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")

    def coefficient_form(self, lam, y):
        """``omega / dlam`` at points ``(lam, y)``."""
        lam = np.asarray(lam, dtype=complex)
        num = np.polynomial.polynomial.polyval(lam, self.b)
        den = lam**self.m * y
        if self.pole is not None:
            den = den * (lam - self.pole)
        return num / den

    def recast(self, m, pole=None):
        """Same form over the denominator ``lam^m (lam - pole)``."""
        if m < self.m or (self.pole is not None and pole != self.pole):
            raise ValueError("can only enlarge the denominator")
        b = np.concatenate([np.zeros(m - self.m, dtype=complex), self.b])
        if pole is not None and self.pole is None:
            b = np.convolve(b, [-pole, 1.0])
        return RationalDifferential(b, m, self.kind, pole)

    def _aligned(self, other):
        m = max(self.m, other.m)
        pole = self.pole if self.pole is not None else other.pole
        return self.recast(m, pole), other.recast(m, pole)

    def __add__(self, other):
        x, y = self._aligned(other)
        n = max(len(x.b), len(y.b))
        b = np.zeros(n, dtype=complex)
        b[: len(x.b)] += x.b
        b[: len(y.b)] += y.b
        kinds = {self.kind, other.kind} - {"holomorphic"}
        return RationalDifferential(b, x.m, kinds.pop() if kinds else "holomorphic", x.pole)

    def __mul__(self, s):
        return RationalDifferential(self.b * complex(s), self.m, self.kind, self.pole)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def series(self, curve: SpectralCurve, place, order=12):
        """Laurent series of ``omega / dz`` in the local coordinate at ``place``."""
        ex = local_expansion(curve, place, order)
        s = ex.form(self.b, self.m)
        if self.pole is not None:
            d = ex.lam + Laurent(0, np.r_[-self.pole, np.zeros(len(ex.lam.c) - 1)])
            s = s * d.inverse()
        return s

    def to_dict(self):
        return {
            "numerator": [[c.real, c.imag] for c in self.b],
            "lam_power": self.m,
            "pole": self.pole,
            "kind": self.kind,
        }


def monomial(j, kind="holomorphic"):
    b = np.zeros(j + 1, dtype=complex)
    b[j] = 1.0
    return RationalDifferential(b, 0, kind)


def holomorphic_monomials(curve: SpectralCurve):
    """The forms ``lam^j dlam / y`` for ``j = 0..g-1``."""
    return [monomial(j) for j in range(curve.genus)]


# ---------------------------------------------------------------------------
# integration


def integrate_forms(forms, path: LiftedPath, tol):
    """Integrals of several forms along a lifted path or cycle, one quadrature pass per segment."""
    if isinstance(path, Cycle):
        return sum(k * integrate_forms(forms, lp, tol) for k, lp in path.terms)
    total = np.zeros(len(forms), dtype=complex)
    for i, seg in enumerate(path.base.segments):

        def g(t, i=i, seg=seg):
            lam = seg.point(t)
            y = path.y_at(i, t)
            dl = seg.deriv(t)
            return np.array([f.coefficient_form(lam, y) * dl for f in forms])

        val, _ = adaptive_gauss(g, 0.0, 1.0, tol=tol, tag=i)
        total += val
    return total


def period(curve: SpectralCurve, form: RationalDifferential, cycle: LiftedPath, tol=None):
    """Integral of ``form`` along ``cycle``."""
    if form.pole is not None:
        paths = [lp for _, lp in cycle.terms] if isinstance(cycle, Cycle) else [cycle]
        lam = np.concatenate(
            [s.point(np.linspace(0, 1, 65)) for lp in paths for s in lp.base.segments]
        )
        if np.min(np.abs(lam - form.pole)) < 1e-9:
            raise DegenerateCurveError("pole of the form lies on the path")
    return complex(integrate_forms([form], cycle, tol or curve.tol.quad_tol)[0])


@dataclass(frozen=True)
class PeriodTable:
    """Periods with rows indexed by differentials and columns by cycles."""

    A_periods: np.ndarray
    B_periods: np.ndarray

    @property
    def tau(self):
        """Normalised B-periods ``tau[i, j] = int_{B_i} omega^j``."""
        return np.linalg.solve(self.A_periods, self.B_periods).T

    def riemann_defects(self):
        t = self.tau
        sym = float(np.max(np.abs(t - t.T))) if t.size else 0.0
        mineig = float(np.min(np.linalg.eigvalsh(0.5 * (t.imag + t.imag.T)))) if t.size else np.inf
        return sym, mineig


def period_table(curve, forms, homology: HomologyBasis, tol=None):
    """A- and B-periods of ``forms`` (each primitive loop is integrated once)."""
    tol = tol or curve.tol.quad_tol
    loop_vals = np.array([integrate_forms(forms, lp, tol) for lp in homology.loops])
    loop_vals = loop_vals.reshape(len(homology.loops), len(forms))
    A, B = homology.combine(loop_vals)
    return PeriodTable(A.T, B.T)


@dataclass(frozen=True)
class NormalizedBasis:
    """A-normalised holomorphic forms with their period data."""

    forms: tuple
    coefficients: np.ndarray  # column j holds omega^j in the monomial basis
    table: PeriodTable  # periods of the normalised forms
    monomial_table: PeriodTable
    homology: HomologyBasis = field(repr=False)

    @property
    def tau(self):
        """``tau[i, j] = int_{B_i} omega^j`` (symmetric)."""
        return self.table.B_periods.T


def normalize_basis(curve: SpectralCurve, homology: HomologyBasis, tol=None) -> NormalizedBasis:
    """Holomorphic forms with ``int_{A_i} omega^j = delta_ij``.

    Raises
    ------
    IllConditionedPeriods
        if the monomial A-period matrix has condition number above 1e10.
    """
    mono = holomorphic_monomials(curve)
    mt = period_table(curve, mono, homology, tol)
    M = mt.A_periods  # M[k, i] = int_{A_i} lam^k dlam/y
    if M.size and np.linalg.cond(M) > 1e10:
        raise IllConditionedPeriods(f"A-period matrix condition number {np.linalg.cond(M):.2e}")
    C = np.linalg.inv(M.T)  # sum_k M[k, i] C[k, j] = delta_ij
    forms = tuple(
        RationalDifferential(C[:, j], 0, "holomorphic") for j in range(curve.genus)
    )
    table = PeriodTable(C.T @ mt.A_periods, C.T @ mt.B_periods)
    return NormalizedBasis(forms, C, table, mt, homology)


def check_form_reality(curve: SpectralCurve, form: RationalDifferential, sign=-1.0, samples=16, seed=0):
    """Max defect of ``conj(rho^* omega) = sign * omega`` at random generic points."""
    rng = np.random.default_rng(seed)
    lam = 0.3 + 1.2 * rng.random(samples)
    lam = lam * np.exp(2j * np.pi * rng.random(samples))
    y = np.sqrt(curve.P(lam))
    val = form.coefficient_form(lam, y)
    # rho^* omega at (lam, y) = omega(rho(lam, y)) * d(1/conj(lam)), then conjugate
    lr = 1 / np.conj(lam)
    yr = curve.rho_sign * np.conj(y) / np.conj(lam) ** curve.h
    pulled = np.conj(form.coefficient_form(lr, yr) * (-1 / np.conj(lam) ** 2))
    return float(np.max(np.abs(pulled - sign * val) / (1 + np.abs(val))))


# ---------------------------------------------------------------------------
# residues


_CHART_POWER = {"lam": 1, "t": -1, "zeta": 2, "u": -2}


def _chart_kind(curve, place):
    key = "p" + place[1:]
    if key in ("p1", "pm1"):
        return "lam"
    if key == "p0":
        return "zeta" if curve.branched else "lam"
    return "u" if curve.branched else "t"


def _pole_scale(curve, place):
    """Distance in the local coordinate to the nearest other special point."""
    ex = local_expansion(curve, place, 2)
    pts = [z for z in curve.finite_branch_points()] + [0j, 1.0, -1.0]
    if np.isfinite(ex.center):
        d = min(abs(p - ex.center) for p in pts if abs(p - ex.center) > 1e-12)
    else:
        d = 1.0 / max(abs(p) for p in pts)
    kind = _chart_kind(curve, place)
    return np.sqrt(d) if kind in ("zeta", "u") else d


def small_circle_residue(curve, form: RationalDifferential, place, tol=None):
    """Residue by contour quadrature on a small circle in the local coordinate."""
    tol = tol or curve.tol.quad_tol
    r = 0.25 * _pole_scale(curve, place)
    ex = local_expansion(curve, place, 8)
    kind = _chart_kind(curve, place)
    p = _CHART_POWER[kind]
    # lam as a function of the chart circle z = r e^{i phi}
    if kind == "lam":
        seg = Arc(complex(ex.center), r, 0.0, 2 * np.pi)
    else:
        R = r**p
        seg = Arc(0j, R, 0.0, 2 * np.pi * p)
    path = ContourPath([seg], closed=True, path_tol=curve.tol.path_tol)
    start = CurvePoint(seg.start, complex(ex.y(r)))
    # at this radius the truncated series may be slightly off: snap to the true root
    w = np.sqrt(curve.P(seg.start))
    start = CurvePoint(seg.start, complex(w if abs(w - start.y) < abs(w + start.y) else -w))
    lifted = lift_path(curve, path, start)
    return complex(integrate_forms([form], lifted, tol)[0] / TWO_PI_I)


def residue(curve: SpectralCurve, form: RationalDifferential, place, order=12, cross_check=True):
    """Residue of ``form`` at ``place`` from its local series.

    With ``cross_check`` the value is compared against small-circle quadrature.

    Raises
    ------
    NumericalInconsistency
        if series and quadrature disagree by more than ``10 * quad_tol`` (relative).
    """
    val = form.series(curve, place, order).coeff(-1)
    if cross_check:
        q = small_circle_residue(curve, form, place)
        scale = 1 + max(abs(c) for c in form.b)
        if abs(q - val) > 10 * curve.tol.quad_tol * scale * 100:
            raise NumericalInconsistency(
                f"residue at {place}: series {val:.12g} vs quadrature {q:.12g}"
            )
    return val


def all_places(curve):
    return PLACES_BRANCHED if curve.branched else PLACES_UNBRANCHED


# ---------------------------------------------------------------------------
# second and third kind


@dataclass(frozen=True)
class PrincipalPartVector:
    """Principal parts of a primitive of a second-kind form at the places over 0 and infinity.

    ``entries`` maps each place to the coefficient ``kappa`` of ``kappa / z``
    in its local coordinate: ``c, -c`` at ``p0, q0`` and ``-conj(c), conj(c)``
    at ``pinf, qinf`` (only ``p0`` and ``pinf`` exist in the branched case).
    """

    c: complex
    branched: bool = False

    @property
    def entries(self):
        c = complex(self.c)
        if self.branched:
            return {"p0": c, "pinf": -np.conj(c)}
        return {"p0": c, "q0": -c, "pinf": -np.conj(c), "qinf": np.conj(c)}


def build_second_kind(curve: SpectralCurve, c) -> RationalDifferential:
    """Second-kind form with ``int Theta ~ c/z`` at ``p0`` and ``-conj(c)/z`` at ``pinf``.

    ``z`` is ``lam`` (or ``zeta = sqrt(lam)`` when branched) at ``p0`` and
    ``1/lam`` (or the rho-image ``u``) at ``pinf``.  Residues vanish and
    ``conj(rho^* Theta) = -Theta``; the holomorphic part is fixed by zeroing
    the middle numerator coefficients.
    """
    c = complex(c)
    if c == 0:
        raise DegenerateCurveError("principal part coefficient must be nonzero")
    s = curve.rho_sign
    g = curve.genus
    if curve.branched:
        w0 = local_expansion(curve, "p0", 2).y.coeff(1)
        b = np.zeros(g + 2, dtype=complex)
        b[0] = -c * w0 / 2
        b[g + 1] += s * np.conj(b[0])
        return RationalDifferential(b, 1, "second-kind")
    inv_y = local_expansion(curve, "p0", 4).inv_y
    v0, v1 = inv_y.coeff(0), inv_y.coeff(1)
    b = np.zeros(g + 4, dtype=complex)
    b[0] = -c / v0
    b[1] = -b[0] * v1 / v0
    b[g + 3] = s * np.conj(b[0])
    b[g + 2] = s * np.conj(b[1])
    return RationalDifferential(b, 2, "second-kind")


def principal_parts(curve: SpectralCurve, form: RationalDifferential, order=12, tol=1e-9):
    """Read off ``c`` at ``p0`` and check the remaining entries follow the symmetry pattern."""
    c = -form.series(curve, "p0", order).coeff(-2)
    pp = PrincipalPartVector(c, curve.branched)
    for place, kappa in pp.entries.items():
        s = form.series(curve, place, order)
        # d(kappa/z) = -kappa z^-2 dz; primitive has no other polar terms
        got = -s.coeff(-2)
        extra = [s.coeff(k) for k in range(s.val, -2)]
        if abs(got - kappa) > tol * (1 + abs(c)) or any(abs(e) > tol * (1 + abs(c)) for e in extra):
            raise NumericalInconsistency(f"principal part at {place}: {got:.6g} expected {kappa:.6g}")
    return pp


def principal_part_series(curve, form, place, order=12):
    """Polar part of a local primitive of ``form``, as a Laurent series."""
    s = form.series(curve, place, order)
    c = np.zeros(-s.val, dtype=complex) if s.val < -1 else np.zeros(0, dtype=complex)
    for k in range(s.val, -1):
        c[k - s.val] = s.coeff(k) / (k + 1)
    return Laurent(s.val + 1, np.concatenate([c, np.zeros(order, dtype=complex)]))


def a_normalize(curve, form: RationalDifferential, basis: NormalizedBasis, tol=None, strict_reality=True):
    """Subtract the holomorphic combination that kills all A-periods.

    Returns ``(form0, s)`` with ``s[i] = int_{A_i} form``.  For second-kind
    forms built with the real structure the ``s[i]`` are real; a non-real
    value only triggers a warning.
    """
    tol = tol or curve.tol.quad_tol
    s = period_table(curve, [form], basis.homology, tol).A_periods[0]
    if strict_reality and form.kind == "second-kind":
        im = float(np.max(np.abs(s.imag))) if len(s) else 0.0
        if im > 1e3 * tol * (1 + float(np.max(np.abs(s), initial=0))):
            warnings.warn(f"A-periods of a real second-kind form have imaginary part {im:.2e}")
    out = form
    for si, w in zip(s, basis.forms):
        out = out - si * w
    out = RationalDifferential(out.b, out.m, form.kind, out.pole)
    return out, s


def build_eta(curve: SpectralCurve, k, basis: NormalizedBasis, tol=None) -> RationalDifferential:
    """Third-kind form with residues ``+-1/(2 pi i)`` at ``p_k, q_k`` and zero A-periods."""
    if k not in (1, -1):
        raise ValueError("k must be +1 or -1")
    if np.min(np.abs(curve.finite_branch_points() - k)) < 1e-8:
        raise DegenerateCurveError(f"lam = {k:+d} is a branch point")
    yk = local_expansion(curve, "p1" if k == 1 else "pm1", 2).y.coeff(0)
    raw = RationalDifferential([yk / TWO_PI_I], 0, "third-kind", float(k))
    eta, _ = a_normalize(curve, raw, basis, tol, strict_reality=False)
    return eta


def place_values(curve: SpectralCurve, forms, order=6):
    """``omega / dz`` at ``p0`` and ``pinf`` for each form (``e0``, ``f0``)."""
    e0 = np.array([f.series(curve, "p0", order).coeff(0) for f in forms])
    f0 = np.array([f.series(curve, "pinf", order).coeff(0) for f in forms])
    return e0, f0
