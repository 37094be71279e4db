"""Hyperelliptic spectral curves with a fixed-point-free real structure.

A curve is ``y^2 = P(lam)`` where ``P = a`` (unbranched over 0 and infinity)
or ``P = lam * a`` (branched, the conformal case).  The branch points of
``a`` come in pairs ``alpha, 1/conj(alpha)``; the real structure is

    rho(lam, y) = (1/conj(lam), s * conj(y) / conj(lam)^(g+1))

with the sign ``s`` fixed so that rho has no fixed points over the unit
circle.  Sheets are tracked by analytic continuation, never by branch cuts
of the square root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    ChartError,
    DegenerateCurveError,
    DegreeError,
    HomologyConstructionError,
    PathTooCloseError,
    RealityViolation,
    SingularCurveError,
)
from . import intlattice
from .numkernel import Arc, ComplexPoly, ContourPath, Line, ToleranceProfile, adaptive_gauss, polyroots
from .series import Laurent, poly_taylor_shift, sqrt_series

MAX_GENUS = 8
UNIT_CIRCLE_EPS = 1e-6
CIRCLE_SAMPLES = 64


def canonical_sqrt(w):
    """Square root with argument in [0, pi)."""
    r = np.sqrt(complex(w))
    if np.angle(r) < 0 or np.angle(r) >= np.pi - 1e-15:
        r = -r
    if r.imag == 0 and r.real < 0:
        r = -r
    return complex(r)


class Chart(Enum):
    GENERIC = "generic"
    OVER_ZERO = "over-zero"
    OVER_INFINITY = "over-infinity"
    BRANCH = "branch"


@dataclass(frozen=True)
class CurvePoint:
    lam: complex
    y: complex
    chart: Chart = Chart.GENERIC


@dataclass(frozen=True)
class SpectralCurve:
    a: ComplexPoly
    branched: bool
    genus: int
    branch_points: np.ndarray
    tol: ToleranceProfile
    rho_sign: int
    inner: np.ndarray = field(repr=False)  # inner branch points sorted by argument

    @property
    def P(self) -> ComplexPoly:
        """Right-hand side of ``y^2 = P(lam)``."""
        if self.branched:
            return ComplexPoly(np.concatenate([[0j], self.a.c]))
        return self.a

    @property
    def h(self):
        return self.genus + 1

    def y_squared(self, lam):
        return self.P(lam)

    def finite_branch_points(self):
        if self.branched:
            return np.concatenate([[0j], self.branch_points])
        return self.branch_points

    def on_curve_residual(self, pt: CurvePoint):
        v = self.P(pt.lam)
        return abs(pt.y**2 - v) / (1 + abs(v))

    def point(self, lam, y=None):
        """Point over ``lam`` on the canonical sheet (``arg y`` in [0, pi)) unless ``y`` given."""
        lam = complex(lam)
        if y is None:
            y = canonical_sqrt(self.P(lam))
        return CurvePoint(lam, complex(y))

    def to_spec(self):
        return {
            "a": [[c.real, c.imag] for c in self.a.coeffs],
            "branched": self.branched,
            "tol": self.tol.to_dict(),
        }


# ---------------------------------------------------------------------------
# construction


def _phase_normalize(c, root_tol):
    """Multiply ``c`` by a unimodular constant making it self-reciprocal.

    Self-reciprocal means ``c[n-k] == conj(c[k])``.  Returns the normalised
    coefficients and the symmetry defect before symmetrisation.
    """
    n = len(c) - 1
    k = int(np.argmax(np.abs(c)))
    ratio = np.conj(c[k]) / c[n - k]
    phase = np.exp(0.5j * np.angle(ratio))
    cn = c * phase
    defect = float(np.max(np.abs(cn[::-1] - np.conj(cn)))) / (1 + float(np.max(np.abs(cn))))
    cn = 0.5 * (cn + np.conj(cn[::-1]))
    return cn, defect


def build_curve(a_coeffs, branched=False, tol: ToleranceProfile | None = None) -> SpectralCurve:
    """Validate ``a`` and build the spectral curve.

    Parameters
    ----------
    a_coeffs : sequence of complex
        Coefficients of ``a(lam)``, lowest degree first.
    branched : bool
        ``True`` for ``y^2 = lam a(lam)``.

    Raises
    ------
    DegreeError, SingularCurveError, RealityViolation
    """
    tol = tol or ToleranceProfile()
    if len(a_coeffs) == 0:
        raise ValueError("coefficient list is empty")
    a = ComplexPoly(a_coeffs)
    n = a.degree
    if n % 2:
        raise DegreeError(
            f"deg a = {n} is odd; reality pairs branch points so deg a must be even"
        )
    genus = n // 2 if branched else n // 2 - 1
    if genus < 0:
        raise DegreeError("unbranched curves need deg a >= 2")
    if genus > MAX_GENUS:
        raise DegreeError(f"genus {genus} exceeds the supported maximum {MAX_GENUS}")

    if n == 0:
        roots = np.zeros(0, dtype=complex)
    else:
        rs = polyroots(a, root_tol=tol.root_tol)
        if np.any(rs.multiplicities > 1):
            raise SingularCurveError("a(lam) has repeated roots")
        roots = rs.roots
        sep = min((abs(x - y) for i, x in enumerate(roots) for y in roots[i + 1 :]), default=np.inf)
        if sep <= tol.root_tol:
            raise SingularCurveError(f"branch points separated by only {sep:.2e}")
    if np.any(np.abs(roots) <= tol.root_tol):
        if branched:
            raise SingularCurveError("a(0) = 0 makes lam a(lam) singular at 0")
        raise DegreeError("branch point at lam = 0 in the unbranched case")
    bad = np.abs(np.abs(roots) - 1.0) <= UNIT_CIRCLE_EPS
    if np.any(bad):
        raise RealityViolation(f"branch point on or near the unit circle: {roots[bad][0]:.6g}")
    for r in roots:
        partner = 1.0 / np.conj(r)
        if np.min(np.abs(roots - partner)) > 1e3 * tol.root_tol * (1 + abs(partner)):
            raise RealityViolation(f"branch point {r:.6g} has no partner 1/conj at {partner:.6g}")

    cn, defect = _phase_normalize(a.c, tol.root_tol)
    if defect > 1e3 * tol.root_tol:
        raise RealityViolation(f"coefficients not self-reciprocal up to phase (defect {defect:.2e})")
    a = ComplexPoly(cn)

    # circle certificate: lam^-(g+1) P(lam) real and of one sign on |lam| = 1
    lam = np.exp(2j * np.pi * np.arange(CIRCLE_SAMPLES) / CIRCLE_SAMPLES)
    P = a(lam) * (lam if branched else 1.0)
    v = P * lam ** (-(genus + 1))
    if np.max(np.abs(v.imag) / np.abs(v)) > 1e-8:
        raise RealityViolation("lam^-(g+1) P(lam) is not real on the unit circle")
    if not (np.all(v.real > 0) or np.all(v.real < 0)):
        raise RealityViolation("lam^-(g+1) P(lam) changes sign on the unit circle")
    # with w = y lam^-(g+1)/2 real (v > 0), s = +1 would fix every circle point
    rho_sign = -1 if v.real[0] > 0 else 1

    inner = roots[np.abs(roots) < 1]
    inner = np.array(sorted(inner, key=lambda z: (np.angle(z), abs(z))))
    return SpectralCurve(a, bool(branched), genus, roots, tol, rho_sign, inner)


def curve_from_inner_points(inner, branched=False, scale=1.0, tol=None) -> SpectralCurve:
    """Curve whose ``a`` has roots ``alpha`` and ``1/conj(alpha)`` for each given ``alpha``.

    Uses the self-reciprocal factors ``(lam - alpha)(1 - conj(alpha) lam)``, so
    the reality condition holds exactly in the coefficients.
    """
    c = np.array([complex(scale)])
    for al in inner:
        al = complex(al)
        c = np.convolve(c, np.convolve([-al, 1.0], [1.0, -np.conj(al)]))
    return build_curve(c, branched=branched, tol=tol)


# ---------------------------------------------------------------------------
# involutions


def sigma(curve: SpectralCurve, pt: CurvePoint) -> CurvePoint:
    return CurvePoint(pt.lam, -pt.y, pt.chart)


def rho(curve: SpectralCurve, pt: CurvePoint) -> CurvePoint:
    if pt.lam == 0 or not np.isfinite(pt.lam):
        raise ChartError("rho at lam in {0, inf} needs a local chart; use local_expansion")
    lb = np.conj(pt.lam)
    return CurvePoint(1.0 / lb, curve.rho_sign * np.conj(pt.y) / lb**curve.h, pt.chart)


# ---------------------------------------------------------------------------
# analytic continuation


@dataclass(frozen=True)
class LiftedPath:
    base: ContourPath
    start: CurvePoint
    t_samples: tuple  # per segment parameter samples
    y_samples: tuple  # per segment y samples
    curve: SpectralCurve = field(repr=False)

    @property
    def samples(self):
        out = []
        for seg, ts, ys in zip(self.base.segments, self.t_samples, self.y_samples):
            out.extend(CurvePoint(complex(l), complex(y)) for l, y in zip(seg.point(ts), ys))
        return out

    @property
    def end(self) -> CurvePoint:
        return CurvePoint(self.base.end, complex(self.y_samples[-1][-1]))

    @property
    def closes_on_sheet(self):
        return abs(self.end.y - self.start.y) < abs(self.end.y + self.start.y)

    def y_at(self, i, t):
        """Continued ``y`` on segment ``i`` at parameters ``t``."""
        seg = self.base.segments[i]
        t = np.asarray(t, dtype=float)
        lam = seg.point(t)
        w = np.sqrt(self.curve.P(lam))
        ts, ys = self.t_samples[i], self.y_samples[i]
        j = np.clip(np.searchsorted(ts, t), 1, len(ts) - 1)
        near = np.where(np.abs(t - ts[j - 1]) <= np.abs(ts[j] - t), j - 1, j)
        ref = ys[near]
        return np.where(np.abs(w - ref) <= np.abs(w + ref), w, -w)

    def check(self):
        """Verify the no-sheet-swap and on-curve sample invariants."""
        for seg, ts, ys in zip(self.base.segments, self.t_samples, self.y_samples):
            if np.any(np.abs(np.diff(ys)) >= np.abs(ys[1:] + ys[:-1])):
                return False
            v = self.curve.P(seg.point(ts))
            if np.max(np.abs(ys**2 - v) / (1 + np.abs(v))) > 1e-8:
                return False
        return True

    def reversed(self):
        return lift_path(self.curve, self.base.reversed(), self.end)


def _distance_to_branch(curve, lam):
    bp = curve.finite_branch_points()
    if len(bp) == 0:
        return np.full(np.shape(lam), np.inf)
    return np.min(np.abs(np.asarray(lam)[..., None] - bp), axis=-1)


def _segment_grid(seg, curve, probe=257, step=0.08):
    t = np.linspace(0.0, 1.0, probe)
    lam = seg.point(t)
    d = _distance_to_branch(curve, lam)
    if np.min(d) < 10 * curve.tol.path_tol:
        return t, float(np.min(d))  # caller rejects the path
    speed = np.abs(seg.deriv(t))
    density = speed / np.maximum(d, 1e-300)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(t))])
    n = min(max(8, int(np.ceil(cum[-1] / step)) + 1), 1 << 18)
    # probe-spacing cap keeps the grid at least as fine as the probes
    ts = np.interp(np.linspace(0, cum[-1], n), cum, t)
    ts = np.unique(np.concatenate([ts, np.linspace(0, 1, 33)]))
    return ts, float(np.min(d))


def lift_path(curve: SpectralCurve, path: ContourPath, start: CurvePoint) -> LiftedPath:
    """Continue ``y`` analytically along ``path`` from ``start``.

    Raises
    ------
    PathTooCloseError
        if the path comes within ``10 * path_tol`` of a branch point.
    """
    if abs(start.lam - path.start) > path.path_tol * (1 + abs(path.start)) + 1e-12:
        raise ValueError("start point does not lie over the path's initial lam")
    margin = 10 * curve.tol.path_tol
    y = complex(start.y)
    t_all, y_all = [], []
    for seg in path.segments:
        ts, dmin = _segment_grid(seg, curve)
        if dmin < margin:
            raise PathTooCloseError(f"path passes within {dmin:.2e} of a branch point")
        for _ in range(30):
            w = np.sqrt(curve.P(seg.point(ts)))
            flip = np.abs(w[1:] - w[:-1]) > np.abs(w[1:] + w[:-1])
            sign = np.concatenate([[1.0], np.cumprod(np.where(flip, -1.0, 1.0))])
            ys = w * sign
            if abs(ys[0] - y) > abs(ys[0] + y):
                ys = -ys
            if np.all(np.abs(np.diff(ys)) < 0.25 * np.abs(ys[1:] + ys[:-1])):
                break
            ts = np.sort(np.concatenate([ts, 0.5 * (ts[1:] + ts[:-1])]))
        else:
            raise PathTooCloseError("sheet tracking failed to resolve the path")
        t_all.append(ts)
        y_all.append(ys)
        y = complex(ys[-1])
    return LiftedPath(path, start, tuple(t_all), tuple(y_all), curve)


# ---------------------------------------------------------------------------
# local expansions


PLACES_UNBRANCHED = ("p0", "q0", "pinf", "qinf", "p1", "q1", "pm1", "qm1")
PLACES_BRANCHED = ("p0", "pinf", "p1", "q1", "pm1", "qm1")


@dataclass(frozen=True)
class LocalExpansion:
    """``lam`` and ``y`` as Laurent series in the local coordinate ``z``.

    Coordinates: ``lam`` over 0 (unbranched), ``1/lam`` over infinity,
    ``zeta`` with ``zeta^2 = lam`` at the branched point over 0 and its
    rho-image ``u`` (``u^2 = 1/lam``) over infinity, ``lam - k`` over ``k = +-1``.
    """

    place: str
    lam: Laurent
    y: Laurent
    center: complex  # lam at the place (np.inf for places over infinity)

    @property
    def inv_y(self):
        return self.y.inverse()

    def form(self, b_coeffs, m=0, order=None):
        """Series of ``(b(lam)/lam^m) dlam/y`` divided by ``dz``."""
        lam = self.lam
        n = order or len(self.y.c)
        bl = _compose_poly(b_coeffs, lam, n)
        dlam = lam.derivative()
        out = bl * dlam * self.inv_y
        if m:
            out = out * _power(lam, -m, n)
        return out


def _power(s: Laurent, k: int, n: int):
    if k == 0:
        return Laurent(0, np.r_[1.0, np.zeros(n - 1)])
    base = s if k > 0 else s.inverse()
    out = base
    for _ in range(abs(k) - 1):
        out = out * base
    return out


def _compose_poly(b, lam: Laurent, n):
    b = np.asarray(b, dtype=complex)
    # special-case monomial coordinates to keep full precision
    if len(lam.c) and np.count_nonzero(lam.c) == 1 and lam.c[0] == 1:
        v = lam.val
        if v > 0:
            c = np.zeros(v * (len(b) - 1) + 1 + n, dtype=complex)
            c[:: v][: len(b)] = b
            return Laurent(0, c[: max(n, 1) + v * (len(b) - 1)])
        if v < 0:
            deg = len(b) - 1
            c = np.zeros(-v * deg + n, dtype=complex)
            c[: -v * deg + 1 : -v] = b[::-1]
            return Laurent(v * deg, c)
    out = Laurent(0, np.r_[b[-1], np.zeros(n - 1)])
    for coef in b[-2::-1]:
        out = out * lam + Laurent(0, np.r_[coef, np.zeros(n - 1)])
    return out


def local_expansion(curve: SpectralCurve, place: str, order=12) -> LocalExpansion:
    """Local series of ``lam`` and ``y`` at a distinguished place.

    Sheet conventions: ``y(p0)`` (or the ``zeta``-chart unit ``w0 = sqrt(a(0))``)
    and ``y(p_k)`` have argument in [0, pi); ``p_inf = rho(p0)``; every
    ``q`` place is the sigma-image of its ``p`` place.
    """
    valid = PLACES_BRANCHED if curve.branched else PLACES_UNBRANCHED
    if place not in valid:
        raise ChartError(f"place {place!r} is not defined on a {'branched' if curve.branched else 'unbranched'} curve")
    n = order + 2 * curve.h + 4
    a = curve.a.c
    s = curve.rho_sign
    h = curve.h
    neg = place.startswith("q")
    key = "p" + place[1:]

    if key in ("p1", "pm1"):
        k = 1.0 if key == "p1" else -1.0
        Pk = poly_taylor_shift(curve.P.c, k)
        y0 = canonical_sqrt(Pk[0])
        if abs(y0) < 1e-12:
            raise DegenerateCurveError(f"lam = {k:+g} is a branch point")
        ys = sqrt_series(Pk, n, y0)
        lam = Laurent(0, np.r_[k, 1.0, np.zeros(n - 2)])
        ex = LocalExpansion(place, lam, Laurent(0, -ys if neg else ys), complex(k))
        return ex

    if not curve.branched:
        if key == "p0":
            y0 = canonical_sqrt(a[0])
            ys = sqrt_series(a, n, y0)
            lam = Laurent(1, np.r_[1.0, np.zeros(n - 1)])
            return LocalExpansion(place, lam, Laurent(0, -ys if neg else ys), 0j)
        # over infinity, t = 1/lam: y = t^-h Y(t), Y^2 = reversed a, Y(0) = s conj(y(p0))
        y0 = canonical_sqrt(a[0])
        Y = sqrt_series(a[::-1], n, s * np.conj(y0))
        lam = Laurent(-1, np.r_[1.0, np.zeros(n - 1)])
        return LocalExpansion(place, lam, Laurent(-h, -Y if neg else Y), complex(np.inf))

    # branched: y = zeta W(zeta^2), W^2 = a
    w0 = canonical_sqrt(a[0])
    m = n // 2 + 1
    W = sqrt_series(a, m, w0)
    if key == "p0":
        c = np.zeros(2 * m, dtype=complex)
        c[::2] = W
        lam = Laurent(2, np.r_[1.0, np.zeros(n - 1)])
        return LocalExpansion(place, lam, Laurent(1, c[:n]), 0j)
    # rho-image chart u = conj(zeta o rho): y = s u^(1-2h) conj-W(u^2)
    c = np.zeros(2 * m, dtype=complex)
    c[::2] = s * np.conj(W)
    lam = Laurent(-2, np.r_[1.0, np.zeros(n - 1)])
    return LocalExpansion(place, lam, Laurent(1 - 2 * h, c[:n]), complex(np.inf))


def expansion_residual(curve: SpectralCurve, ex: LocalExpansion, radius):
    """Max mismatch between ``y`` series and ``P(lam)`` on a small circle in ``z``."""
    z = radius * np.exp(2j * np.pi * np.arange(16) / 16)
    lam = ex.lam(z)
    y = ex.y(z)
    return float(np.max(np.abs(y**2 - curve.P(lam)) / (1 + np.abs(curve.P(lam)))))


def place_point(curve: SpectralCurve, place: str) -> CurvePoint:
    """The point itself for places over finite non-branch ``lam``."""
    ex = local_expansion(curve, place, order=2)
    if not np.isfinite(ex.center) or (curve.branched and place == "p0"):
        raise ChartError(f"{place} has no generic-chart coordinates")
    return CurvePoint(ex.center, ex.y.coeff(0), Chart.GENERIC)




# ---------------------------------------------------------------------------
# homology


@dataclass(frozen=True)
class CutLayout:
    """Radial cut geometry derived from the inner branch points."""

    theta: np.ndarray  # cut angles, unwrapped ascending from the reference cut
    r: np.ndarray  # inner radii
    eps: np.ndarray  # half widths of the sectors around each cut
    rho_gamma: float
    theta_ray: float  # branched only: direction of the 0 -> infinity cut


def _angle_gap(a, b):
    d = (a - b) % (2 * np.pi)
    return min(d, 2 * np.pi - d)


def cut_layout(curve: SpectralCurve) -> CutLayout:
    inner = curve.inner
    if len(inner) == 0:
        raise HomologyConstructionError("no finite branch-point pairs")
    th = np.angle(inner)
    r = np.abs(inner)
    k = len(inner)
    eps = np.empty(k)
    for i in range(k):
        gaps = [_angle_gap(th[i], th[j]) for j in range(k) if j != i]
        gaps += [2 * _angle_gap(th[i], 0.0), 2 * _angle_gap(th[i], np.pi)]
        eps[i] = min(0.3, min(gaps) / 3.0)
    if curve.branched:
        ths = np.sort(th)
        gaps = np.diff(np.r_[ths, ths[0] + 2 * np.pi])
        j = int(np.argmax(gaps))
        theta_ray = float(ths[j] + 0.5 * gaps[j])
        base = theta_ray
    else:
        theta_ray = float("nan")
        base = th[0]
    theta = base + (th - base) % (2 * np.pi)
    rmin = float(np.min(r))
    if np.min(eps) * rmin < 20 * curve.tol.path_tol or rmin < 1e-6:
        raise HomologyConstructionError("branch points cluster too tightly for the cut layout")
    return CutLayout(theta, r, eps, 0.68 * rmin, theta_ray)


def _arc(radius, t0, t1):
    return Arc(0j, float(radius), float(t0), float(t1))


def _radial(r0, r1, theta):
    e = np.exp(1j * theta)
    return Line(complex(r0 * e), complex(r1 * e))


def _pair_loop(lay: CutLayout, i):
    """Counter-clockwise boundary of an annular sector around cut ``i``."""
    th, e = lay.theta[i], lay.eps[i]
    r_in, r_out = 0.75 * lay.r[i], 1.0 / (0.75 * lay.r[i])
    return [
        _radial(r_in, r_out, th - e),
        _arc(r_out, th - e, th + e),
        _radial(r_out, r_in, th + e),
        _arc(r_in, th + e, th - e),
    ]


def _cross_loop(lay: CutLayout, i, g):
    """Loop around the inner endpoint of cut ``i`` and of the reference cut."""
    rmin = float(np.min(lay.r))
    frac = (i + 1) / (g + 2)
    lo, hi = rmin * (0.25 + 0.1 * frac), rmin * (0.45 + 0.1 * frac)
    ti, ei = lay.theta[i], 0.5 * lay.eps[i]
    Ri = np.sqrt(lay.r[i])
    if np.isnan(lay.theta_ray):
        t0 = lay.theta[0]
        e0 = lay.eps[0] * (0.3 + 0.4 * frac)
        R0 = lay.r[0] ** (0.5 - 0.2 * frac)
        return [
            _radial(lo, R0, t0 - e0),
            _arc(R0, t0 - e0, t0 + e0),
            _radial(R0, hi, t0 + e0),
            _arc(hi, t0 + e0, ti - ei),
            _radial(hi, Ri, ti - ei),
            _arc(Ri, ti - ei, ti + ei),
            _radial(Ri, lo, ti + ei),
            _arc(lo, ti + ei, t0 - e0),
        ]
    # branched: the reference endpoint is the branch point over 0
    return [
        _arc(hi, ti + ei, ti - ei + 2 * np.pi),
        _radial(hi, Ri, ti - ei),
        _arc(Ri, ti - ei, ti + ei),
        _radial(Ri, hi, ti + ei),
    ]


# intersections between radial lines and origin-centred arcs


def _is_radial(seg):
    return isinstance(seg, Line) and abs(np.imag(np.conj(seg.z0) * seg.z1)) <= 1e-12 * (
        abs(seg.z0) * abs(seg.z1) + 1e-300
    ) and np.real(np.conj(seg.z0) * seg.z1) > 0


def _line_arc_hits(line, arc, tol=1e-9):
    """Parameters ``(t_line, t_arc, theta)`` where a radial line meets an arc."""
    if arc.center != 0:
        raise HomologyConstructionError("intersection test needs origin-centred arcs")
    ra, rb = abs(line.z0), abs(line.z1)
    R = arc.radius
    if min(abs(R - ra), abs(R - rb)) < tol:
        raise HomologyConstructionError("non-transverse cycle intersection (endpoint on arc)")
    if not (min(ra, rb) < R < max(ra, rb)):
        return []
    phi = float(np.angle(line.z0))
    t_line = (R - ra) / (rb - ra)
    lo, hi = sorted((arc.theta0, arc.theta1))
    out = []
    k0 = int(np.floor((lo - phi) / (2 * np.pi)))
    for k in range(k0, k0 + int((hi - lo) / (2 * np.pi)) + 3):
        th = phi + 2 * np.pi * k
        if min(abs(th - lo), abs(th - hi)) < tol:
            raise HomologyConstructionError("non-transverse cycle intersection (arc endpoint on line)")
        if lo < th < hi:
            out.append((t_line, (th - arc.theta0) / (arc.theta1 - arc.theta0), th))
    return out


def intersection_number(p: LiftedPath, q: LiftedPath) -> int:
    """Algebraic intersection number ``p . q`` on the curve.

    Paths must consist of radial lines and origin-centred arcs meeting
    transversally.  A crossing counts only where both lifts pass through the
    same point of the curve; the sign is ``+1`` when ``q`` crosses ``p`` from
    right to left.
    """
    total = 0
    for i, sp in enumerate(p.base.segments):
        for j, sq in enumerate(q.base.segments):
            if isinstance(sp, Line) and isinstance(sq, Arc):
                hits = [(tl, ta, th, False) for tl, ta, th in _line_arc_hits(sp, sq)]
            elif isinstance(sp, Arc) and isinstance(sq, Line):
                hits = [(ta, tl, th, True) for tl, ta, th in _line_arc_hits(sq, sp)]
            elif isinstance(sp, Arc) and isinstance(sq, Arc):
                if abs(sp.radius - sq.radius) < 1e-9:
                    raise HomologyConstructionError("overlapping concentric arcs")
                continue
            else:
                if not (_is_radial(sp) and _is_radial(sq)):
                    raise HomologyConstructionError("intersection test needs radial lines")
                if abs(np.angle(sp.z0 / sq.z0)) < 1e-9:
                    raise HomologyConstructionError("overlapping radial segments")
                continue
            for tp, tq, th, p_is_arc in hits:
                yp = p.y_at(i, [tp])[0]
                yq = q.y_at(j, [tq])[0]
                if abs(yp - yq) > abs(yp + yq):
                    continue
                dp = sp.deriv(tp)
                dq = sq.deriv(tq)
                total += int(np.sign(np.imag(np.conj(dp) * dq)))
    return total


@dataclass(frozen=True)
class Cycle:
    """Integer combination of lifted closed loops."""

    terms: tuple  # ((coefficient, LiftedPath), ...)

    def describe(self):
        return [{"coefficient": int(k), "path": p.base.describe()} for k, p in self.terms]


def _monomial_loop_periods(curve, loop: LiftedPath, tol):
    g = curve.genus
    total = np.zeros(g, dtype=complex)
    powers = np.arange(g)[:, None]
    for i, seg in enumerate(loop.base.segments):

        def f(t, i=i, seg=seg):
            lam = seg.point(t)
            return lam[None, :] ** powers * (seg.deriv(t) / loop.y_at(i, t))[None, :]

        total += adaptive_gauss(f, 0.0, 1.0, tol=tol, tag=i)[0]
    return total


@dataclass(frozen=True)
class HomologyBasis:
    """Symplectic basis ``A_i . B_j = delta_ij`` with ``rho_* A_i = -A_i``.

    Cycles are integer combinations (rows of ``A_coeffs``, ``B_coeffs``) of
    primitive loops: ``g`` loops around reality-symmetric pairs of branch
    points followed by ``g`` loops around one inner branch point and the
    reference endpoint.
    """

    loops: tuple
    A_coeffs: np.ndarray
    B_coeffs: np.ndarray
    intersection: np.ndarray
    rho_action: np.ndarray  # column a: rho_*(loop a) in loop coordinates
    basepoint: CurvePoint
    layout: CutLayout = field(repr=False)

    @property
    def genus(self):
        return len(self.A_coeffs)

    def _cycles(self, coeffs):
        return tuple(
            Cycle(tuple((int(k), lp) for k, lp in zip(row, self.loops) if k)) for row in coeffs
        )

    @property
    def A(self):
        return self._cycles(self.A_coeffs)

    @property
    def B(self):
        return self._cycles(self.B_coeffs)

    def combine(self, loop_values):
        """Values on ``A`` and ``B`` from values on the primitive loops (first axis)."""
        v = np.asarray(loop_values)
        return np.tensordot(self.A_coeffs, v, axes=1), np.tensordot(self.B_coeffs, v, axes=1)

    def describe(self):
        return {
            "loops": [lp.base.describe() for lp in self.loops],
            "A": self.A_coeffs.tolist(),
            "B": self.B_coeffs.tolist(),
            "intersection": self.intersection.tolist(),
            "rho_action": self.rho_action.tolist(),
        }


def rho_action_matrix(curve, loop_periods):
    """Integer matrix of ``rho_*`` on the loops, recovered from holomorphic periods.

    Uses ``int_{rho C} lam^n dlam/y = -s conj(int_C lam^(g-1-n) dlam/y)``.
    """
    P = np.asarray(loop_periods)  # loops x forms
    M = np.vstack([P.T.real, P.T.imag])
    target = -curve.rho_sign * np.conj(P[:, ::-1])
    T = np.vstack([target.T.real, target.T.imag])
    X = np.linalg.solve(M, T)
    R = np.rint(X)
    if np.max(np.abs(X - R)) > 1e-5:
        raise HomologyConstructionError(f"rho action is not integral (defect {np.max(np.abs(X - R)):.2e})")
    return R.astype(np.int64)


def build_homology(curve: SpectralCurve) -> HomologyBasis:
    """Symplectic homology basis adapted to the real structure.

    Primitive loops are lifted annular-sector boundaries around each
    reality-symmetric pair of branch points and loops around two inner branch
    points.  The A-cycles span the ``-1`` eigenlattice of ``rho_*`` and the
    B-cycles complete them symplectically, so ``rho_* A_i = -A_i`` and
    ``rho_* B_i = B_i`` modulo the A-cycles.  Intersections are computed
    geometrically; the period matrix is checked against the Riemann relations.
    """
    g = curve.genus
    if g < 1:
        # no cycles; keep the layout (when there is one) for the gamma paths
        lay = cut_layout(curve) if len(curve.inner) else None
        empty = np.zeros((0, 0), dtype=np.int64)
        return HomologyBasis((), empty, empty, empty, empty, curve.point(0.5), lay)
    lay = cut_layout(curve)
    tol = curve.tol.path_tol
    pair_idx = list(range(g)) if curve.branched else list(range(1, g + 1))
    loops = []
    for i in pair_idx:
        segs = _pair_loop(lay, i)
        loops.append(ContourPath(segs, closed=True, path_tol=tol))
    for i in pair_idx:
        loops.append(ContourPath(_cross_loop(lay, i, g), closed=True, path_tol=tol))
    lifted = []
    for p in loops:
        lp = lift_path(curve, p, curve.point(p.start))
        if not lp.closes_on_sheet:
            raise HomologyConstructionError("loop does not close on its sheet")
        lifted.append(lp)

    n = 2 * g
    inter = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(a + 1, n):
            inter[a, b] = intersection_number(lifted[a], lifted[b])
            inter[b, a] = -inter[a, b]
    if abs(round(np.linalg.det(inter))) != 1:
        raise HomologyConstructionError("primitive loops do not form a homology basis")

    periods = np.array([_monomial_loop_periods(curve, lp, curve.tol.quad_tol) for lp in lifted])
    R = rho_action_matrix(curve, periods)
    if not np.array_equal(R @ R, np.eye(n, dtype=np.int64)):
        raise HomologyConstructionError("computed rho action is not an involution")
    L = intlattice.integer_kernel(R + np.eye(n, dtype=np.int64))
    if L.shape[1] != g:
        raise HomologyConstructionError("rho anti-invariant lattice has the wrong rank")
    Y = intlattice.complete_lagrangian(L, inter)
    A_coeffs, B_coeffs = L.T.copy(), Y.T.copy()

    # Riemann relations as an independent check of the intersection signs
    PA, PB = A_coeffs @ periods, B_coeffs @ periods
    tau = PB @ np.linalg.inv(PA)
    if np.min(np.linalg.eigvalsh(0.5 * (tau.imag + tau.imag.T))) <= 0:
        raise HomologyConstructionError("Im tau is not positive definite: inconsistent intersection signs")
    start = lifted[g].start if g else curve.point(0.5)
    return HomologyBasis(tuple(lifted), A_coeffs, B_coeffs, inter, R, start, lay)


def build_gamma(curve: SpectralCurve, k: int, layout: CutLayout | None = None) -> LiftedPath:
    """Open path from ``p_k`` to ``q_k = sigma(p_k)`` over ``lam = k``.

    The path runs radially in from ``lam = k``, detours once around the inner
    endpoint of the reference cut (the branch point over 0 when branched) and
    returns, ending on the opposite sheet.
    """
    if k not in (1, -1):
        raise ValueError("k must be +1 or -1")
    if np.min(np.abs(curve.finite_branch_points() - k)) < 1e-8:
        raise DegenerateCurveError(f"lam = {k:+d} is a branch point")
    lay = layout or cut_layout(curve)
    tk = 0.0 if k == 1 else np.pi
    rg = lay.rho_gamma
    if curve.branched:
        segs = [_radial(1.0, rg, tk), _arc(rg, tk, tk + 2 * np.pi), _radial(rg, 1.0, tk)]
    else:
        t0, e = lay.theta[0], 0.85 * lay.eps[0]
        d = (t0 - tk + np.pi) % (2 * np.pi) - np.pi
        ta = tk + d
        R0 = lay.r[0] ** 0.25
        segs = [
            _radial(1.0, rg, tk),
            _arc(rg, tk, ta - e),
            _radial(rg, R0, ta - e),
            _arc(R0, ta - e, ta + e),
            _radial(R0, rg, ta + e),
            _arc(rg, ta + e, tk),
            _radial(rg, 1.0, tk),
        ]
    path = ContourPath(segs, closed=False, path_tol=curve.tol.path_tol)
    start = place_point(curve, "p1" if k == 1 else "pm1")
    lifted = lift_path(curve, path, start)
    if abs(lifted.end.y + start.y) > 1e-8 * (1 + abs(start.y)):
        raise HomologyConstructionError("gamma path does not end on the opposite sheet")
    return lifted


def gamma_crossings(gamma: LiftedPath, homology: HomologyBasis):
    """Intersection numbers ``gamma . A_i``."""
    prim = np.array([intersection_number(gamma, lp) for lp in homology.loops])
    return homology.A_coeffs @ prim
