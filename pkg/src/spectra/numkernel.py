"""Numerical kernel: polynomials, contour quadrature, ODEs and lattice arithmetic.

Everything here is a pure function of its inputs.  The adaptive algorithms
subdivide in a fixed, input-independent order so repeated runs are bitwise
reproducible.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IllConditionedPolynomial, NonConvergence, StiffnessError

TWO_PI_I = 2j * np.pi

TOL_ENV_VAR = "SPECTRA_TOL_PROFILE"


@dataclass(frozen=True)
class ToleranceProfile:
    """Bundle of numerical tolerances threaded through the pipeline."""

    quad_tol: float = 1e-11
    ode_tol: float = 1e-10
    root_tol: float = 1e-9
    lattice_tol: float = 1e-6
    path_tol: float = 1e-10

    def __post_init__(self):
        for name in ("quad_tol", "ode_tol", "root_tol", "lattice_tol", "path_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.lattice_tol > self.quad_tol:
            raise ValueError("lattice_tol must exceed quad_tol")

    def tightened(self, factor=10.0):
        """Quadrature and ODE tolerances divided by ``factor``."""
        return replace(self, quad_tol=self.quad_tol / factor, ode_tol=self.ode_tol / factor)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("quad_tol", "ode_tol", "root_tol", "lattice_tol", "path_tol")}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls().to_dict())
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    @classmethod
    def from_env(cls):
        """Default profile, overridden by ``$SPECTRA_TOL_PROFILE``.

        The variable holds either inline JSON or a path to a JSON file.
        """
        raw = os.environ.get(TOL_ENV_VAR)
        if not raw:
            return cls()
        raw = raw.strip()
        if not raw.startswith("{"):
            with open(raw) as fh:
                raw = fh.read()
        return cls.from_dict(json.loads(raw))


# ---------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class ComplexPoly:
    """Polynomial with complex coefficients, lowest degree first."""

    coeffs: tuple

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        nz = np.nonzero(c)[0]
        if len(nz) == 0:
            raise ValueError("zero polynomial has no degree")
        object.__setattr__(self, "coeffs", tuple(complex(x) for x in c[: nz[-1] + 1]))

    @property
    def c(self):
        return np.array(self.coeffs, dtype=complex)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def leading(self):
        return self.coeffs[-1]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for a in reversed(self.coeffs):
            out = out * z + a
        return out

    def derivative(self):
        c = self.c
        if len(c) == 1:
            return _ZeroSafe()
        return ComplexPoly(c[1:] * np.arange(1, len(c)))

    def __mul__(self, other):
        if isinstance(other, ComplexPoly):
            return ComplexPoly(np.convolve(self.c, other.c))
        return ComplexPoly(self.c * complex(other))

    __rmul__ = __mul__

    def reversed_coeffs(self):
        """Coefficients of ``z^deg p(1/z)``, lowest degree first."""
        return self.c[::-1].copy()

    @classmethod
    def from_roots(cls, roots, scale=1.0):
        c = np.array([complex(scale)])
        for r in roots:
            c = np.convolve(c, [-complex(r), 1.0])
        return cls(c)


class _ZeroSafe:
    """Derivative of a constant; evaluates to zero."""

    degree = -1

    def __call__(self, z):
        return np.zeros_like(np.asarray(z, dtype=complex))


@dataclass(frozen=True)
class RootSet:
    roots: np.ndarray
    multiplicities: np.ndarray
    residual: float

    def __iter__(self):
        return iter(zip(self.roots, self.multiplicities))

    def __len__(self):
        return len(self.roots)

    def expanded(self):
        return np.repeat(self.roots, self.multiplicities)


def _sort_key(z):
    # rounded so that roots sharing an argument up to noise order by modulus
    return (round(float(np.angle(z)), 12), round(float(abs(z)), 12))


def polyroots(p: ComplexPoly, root_tol=1e-9, cluster_tol=1e-7, max_newton=50) -> RootSet:
    """Roots of ``p`` with multiplicities, Newton-polished.

    Companion-matrix eigenvalues seed the roots; members of a cluster closer
    than ``cluster_tol * (1 + |root|)`` are merged and reported with their
    multiplicity.  Simple roots are polished by Newton iteration.  The
    returned residual is ``max |p(r)| / (1 + max |coeff|)``.

    Raises
    ------
    IllConditionedPolynomial
        if any residual stays above ``root_tol`` after polishing.
    """
    if p.degree < 1:
        raise ValueError("polyroots needs degree >= 1")
    c = p.c
    raw = np.roots(c[::-1])
    dp = p.derivative()

    raw = sorted(raw, key=_sort_key)
    clusters: list[list[complex]] = []
    for r in raw:
        for cl in clusters:
            if abs(cl[0] - r) < cluster_tol * (1 + abs(r)) * 10 ** (len(cl) - 1):
                cl.append(r)
                break
        else:
            clusters.append([r])

    roots, mults = [], []
    for cl in clusters:
        m = len(cl)
        r = complex(np.mean(cl))
        if m == 1:
            for _ in range(max_newton):
                d = dp(r)
                if d == 0:
                    break
                step = p(r) / d
                r = r - step
                if abs(step) <= 1e-16 * (1 + abs(r)):
                    break
        roots.append(complex(r))
        mults.append(m)

    roots = np.array(roots)
    scale = 1.0 + float(np.max(np.abs(c)))
    residual = float(np.max(np.abs(p(roots)))) / scale if len(roots) else 0.0
    if residual > root_tol:
        raise IllConditionedPolynomial(
            f"root polishing stalled at relative residual {residual:.3e} > {root_tol:.1e}"
        )
    order = sorted(range(len(roots)), key=lambda i: _sort_key(roots[i]))
    return RootSet(roots[order], np.array(mults, dtype=int)[order], residual)


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Line:
    z0: complex
    z1: complex

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.z0 + (self.z1 - self.z0) * t

    def deriv(self, t):
        return np.full(np.shape(t), self.z1 - self.z0, dtype=complex)

    @property
    def start(self):
        return complex(self.z0)

    @property
    def end(self):
        return complex(self.z1)

    @property
    def length(self):
        return abs(self.z1 - self.z0)

    def reversed(self):
        return Line(self.z1, self.z0)

    def describe(self):
        return {"kind": "line", "z0": [self.z0.real, self.z0.imag], "z1": [self.z1.real, self.z1.imag]}


@dataclass(frozen=True)
class Arc:
    """Circular arc ``center + radius * exp(i theta)``, theta from theta0 to theta1."""

    center: complex
    radius: float
    theta0: float
    theta1: float

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.center + self.radius * np.exp(1j * (self.theta0 + (self.theta1 - self.theta0) * t))

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        dth = self.theta1 - self.theta0
        return 1j * dth * self.radius * np.exp(1j * (self.theta0 + dth * t))

    @property
    def start(self):
        return complex(self.point(0.0))

    @property
    def end(self):
        return complex(self.point(1.0))

    @property
    def length(self):
        return abs(self.theta1 - self.theta0) * self.radius

    def reversed(self):
        return Arc(self.center, self.radius, self.theta1, self.theta0)

    def describe(self):
        return {
            "kind": "arc",
            "center": [self.center.real, self.center.imag],
            "radius": self.radius,
            "theta0": self.theta0,
            "theta1": self.theta1,
        }


@dataclass(frozen=True)
class ContourPath:
    segments: tuple
    closed: bool = False
    path_tol: float = 1e-10

    def __init__(self, segments: Sequence, closed=False, path_tol=1e-10):
        segs = tuple(s for s in segments if s.length > 0)
        if not segs:
            segs = tuple(segments[:1])
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "closed", bool(closed))
        object.__setattr__(self, "path_tol", float(path_tol))
        for a, b in zip(segs, segs[1:]):
            gap = abs(a.end - b.start)
            if gap > path_tol * (1 + abs(a.end)):
                raise ValueError(f"path segments do not join: gap {gap:.3e}")
        if closed and abs(segs[-1].end - segs[0].start) > path_tol * (1 + abs(segs[0].start)):
            raise ValueError("closed path does not return to its start")

    @property
    def start(self):
        return self.segments[0].start

    @property
    def end(self):
        return self.segments[-1].end

    @property
    def length(self):
        return sum(s.length for s in self.segments)

    def reversed(self):
        return ContourPath([s.reversed() for s in reversed(self.segments)], self.closed, self.path_tol)

    def __add__(self, other):
        return ContourPath(self.segments + other.segments, False, self.path_tol)

    def closed_up(self):
        return ContourPath(self.segments, True, self.path_tol)

    def sample(self, n_per_segment=64):
        pts = [s.point(np.linspace(0, 1, n_per_segment)) for s in self.segments]
        return np.concatenate(pts)

    def describe(self):
        return {"closed": self.closed, "segments": [s.describe() for s in self.segments]}


def polyline(points, closed=False, path_tol=1e-10):
    pts = [complex(p) for p in points]
    segs = [Line(a, b) for a, b in zip(pts, pts[1:])]
    return ContourPath(segs, closed=closed, path_tol=path_tol)


def circle(center, radius, path_tol=1e-10):
    return ContourPath([Arc(complex(center), float(radius), 0.0, 2 * np.pi)], closed=True, path_tol=path_tol)


# ---------------------------------------------------------------------------
# quadrature

_GAUSS_N = 16
_GX, _GW = np.polynomial.legendre.leggauss(_GAUSS_N)


def adaptive_gauss(g: Callable, a=0.0, b=1.0, tol=1e-10, max_intervals=20000, tag=0):
    """Adaptive Gauss-Legendre quadrature of a (vector-valued) function.

    ``g`` maps an array of parameters ``t`` to an array shaped ``(..., len(t))``.
    Every interval is compared against the sum over its two halves; intervals
    whose discrepancy exceeds their length-share of the absolute tolerance are
    bisected.  Intervals are processed breadth first in left-to-right order.

    Returns ``(value, error_estimate)``.
    """
    half = 0.5 * (b - a)
    probe = g(a + half * (_GX + 1.0))
    base = np.tensordot(probe, _GW, axes=([-1], [0])) * half
    abs_tol = tol * (1.0 + float(np.max(np.abs(base))))
    total_len = abs(b - a)

    active = [(a, b)]
    result = np.zeros_like(base)
    err_total = 0.0
    n_done = 0
    worst = None
    while active:
        lefts = np.array([iv[0] for iv in active])
        rights = np.array([iv[1] for iv in active])
        mids = 0.5 * (lefts + rights)
        # nodes for the whole interval, the left half and the right half
        h_whole = 0.5 * (rights - lefts)
        h_half = 0.5 * h_whole
        nodes = np.concatenate(
            [
                (mids[:, None] + h_whole[:, None] * _GX).ravel(),
                (0.5 * (lefts + mids)[:, None] + h_half[:, None] * _GX).ravel(),
                (0.5 * (mids + rights)[:, None] + h_half[:, None] * _GX).ravel(),
            ]
        )
        vals = g(nodes)
        k = len(active)
        vals = vals.reshape(vals.shape[:-1] + (3, k, _GAUSS_N))
        q = np.tensordot(vals, _GW, axes=([-1], [0]))  # (..., 3, k)
        q_whole = q[..., 0, :] * h_whole
        q_split = q[..., 1, :] * h_half + q[..., 2, :] * h_half
        err = np.abs(q_whole - q_split)
        err = err.reshape(-1, k).max(axis=0) if err.ndim > 1 else err
        nxt = []
        for i in range(k):
            share = abs_tol * abs(rights[i] - lefts[i]) / total_len
            if err[i] <= share or abs(rights[i] - lefts[i]) < 1e-13 * total_len:
                result = result + q_split[..., i]
                err_total += err[i]
                n_done += 1
            else:
                nxt.append((lefts[i], mids[i]))
                nxt.append((mids[i], rights[i]))
                if worst is None or err[i] > worst[3]:
                    worst = (tag, lefts[i], rights[i], float(err[i]))
        if len(nxt) + n_done > max_intervals:
            raise NonConvergence(
                f"quadrature subdivision limit {max_intervals} reached", worst=worst
            )
        active = nxt
    return result, err_total


def integrate_contour(f: Callable, path: ContourPath, tol=1e-10):
    """Integral of ``f(z) dz`` along ``path``.

    ``f`` must be vectorised over an array of points and finite on the path.
    Vector-valued integrands (shape ``(..., n)`` for ``n`` points) are allowed.
    """
    total = 0.0
    for i, seg in enumerate(path.segments):
        val, _ = adaptive_gauss(lambda t, s=seg: f(s.point(t)) * s.deriv(t), 0.0, 1.0, tol, tag=i)
        total = total + val
    return total


# ---------------------------------------------------------------------------
# ODEs


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # shape (len(t),) + state shape
    dense: Callable = field(repr=False)
    nfev: int = 0
    shape: tuple = ()

    @property
    def final(self):
        return self.y[-1]

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = self.dense(np.atleast_1d(s))
        out = np.moveaxis(out, -1, 0).reshape((np.size(s),) + self.shape)
        return out[0] if s.ndim == 0 else out


def ode_solve(rhs: Callable, y0, span, tol=1e-10, t_eval=None, max_step=np.inf) -> Trajectory:
    """Adaptive Dormand-Prince 8(5,3) integration of ``y' = rhs(t, y)``.

    ``y0`` may have any shape; ``rhs`` receives and returns arrays of that
    shape.  Complex states are supported.

    Raises
    ------
    StiffnessError
        when the step size underflows.
    """
    y0 = np.asarray(y0)
    shape = y0.shape
    cplx = np.iscomplexobj(y0)
    flat0 = y0.astype(complex if cplx else float).ravel()

    def f(t, y):
        return np.asarray(rhs(t, y.reshape(shape))).ravel()

    t0, t1 = float(span[0]), float(span[1])
    if t0 == t1:
        return Trajectory(
            np.array([t0]), y0[None].copy(), lambda s: np.repeat(flat0[:, None], np.size(s), axis=1), 0, shape
        )
    sol = solve_ivp(
        f, (t0, t1), flat0, method="DOP853", rtol=tol, atol=tol,
        dense_output=True, t_eval=t_eval, max_step=max_step,
    )
    if sol.status != 0:
        raise StiffnessError(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}")
    ys = sol.y.T.reshape((-1,) + shape)
    return Trajectory(sol.t, ys, sol.sol, sol.nfev, shape)


# ---------------------------------------------------------------------------
# lattices and concurrency


def lattice_residual(v, base=TWO_PI_I):
    """Nearest lattice multiple of ``base`` and distance to it.

    Ties are broken toward the even integer.
    """
    q = complex(v) / complex(base)
    n = int(np.round(q.real))
    return n, float(abs(complex(v) - n * complex(base)))


def parallel_map(func, items, jobs=1):
    """Order-preserving map, threaded when ``jobs > 1``."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, items))
