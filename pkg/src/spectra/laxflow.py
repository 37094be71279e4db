"""Polynomial Killing fields, their commuting Lax flows, and the harmonic maps
they integrate to.

Matrices are used as the concrete representation throughout: the compact
real form is ``su(n)``, its complexification is ``sl(n, C)``, conjugation is
``X -> -X^H`` and the invariant inner product is ``<X, Y> = -tr(XY)``.  The
involution ``sigma`` is conjugation by a diagonal matrix of signs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import AlgebraSpecError, GridError, NonFlatError
from .numkernel import ode_solve, parallel_map

# ---------------------------------------------------------------------------
# algebra


def _bracket(X, Y):
    return X @ Y - Y @ X


def _su_basis(n):
    out = []
    for k in range(n - 1):
        D = np.zeros((n, n), complex)
        D[k, k], D[k + 1, k + 1] = 1j, -1j
        out.append(D)
    for k, l in itertools.combinations(range(n), 2):
        E = np.zeros((n, n), complex)
        E[k, l], E[l, k] = 1, -1
        out.append(E)
        E = np.zeros((n, n), complex)
        E[k, l] = E[l, k] = 1j
        out.append(E)
    return np.array(out)


@dataclass(frozen=True)
class LieAlgebraSpec:
    """``su(n)`` with the symmetric-space involution ``Ad diag(signs)``.

    Attributes
    ----------
    signs : tuple of +-1
        Diagonal of the matrix ``S`` with ``sigma(X) = S X S``.
    basis : ndarray, shape (dim, n, n)
        Real basis of the compact form; it is also a complex basis of its
        complexification.
    structure : ndarray, shape (dim, dim, dim)
        ``[e_a, e_b] = sum_c structure[a, b, c] e_c``.
    gram : ndarray, shape (dim, dim)
        ``<e_a, e_b>``.
    """

    signs: tuple
    basis: np.ndarray = field(repr=False)
    structure: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)

    @property
    def n(self):
        return len(self.signs)

    @property
    def dimension(self):
        return len(self.basis)

    @property
    def S(self):
        return np.diag(np.asarray(self.signs, dtype=complex))

    def coords(self, X):
        """Complex coordinates of matrices ``X`` (any leading shape)."""
        X = np.asarray(X, dtype=complex)
        B = self.basis.reshape(self.dimension, -1).T
        flat = X.reshape(-1, self.n * self.n).T
        c, *_ = np.linalg.lstsq(B, flat, rcond=None)
        return c.T.reshape(X.shape[:-2] + (self.dimension,))

    def matrix(self, c):
        return np.tensordot(np.asarray(c, dtype=complex), self.basis, axes=(-1, 0))

    def conj(self, X):
        return -np.conj(np.swapaxes(X, -1, -2))

    def sigma(self, X):
        s = np.asarray(self.signs, dtype=float)
        return X * s[:, None] * s[None, :]

    def h_part(self, X):
        return 0.5 * (X + self.sigma(X))

    def m_part(self, X):
        return 0.5 * (X - self.sigma(X))

    def n_part(self, X):
        return np.triu(self.h_part(X), 1)

    def nbar_part(self, X):
        return np.tril(self.h_part(X), -1)

    def t_part(self, X):
        H = self.h_part(X)
        return H * np.eye(self.n)

    def inner(self, X, Y):
        return -np.einsum("...ij,...ji->...", X, Y)

    def projectors(self):
        """Coordinate matrices of the grading and Iwasawa projectors."""
        out = {}
        for name in ("h_part", "m_part", "n_part", "t_part", "nbar_part"):
            f = getattr(self, name)
            out[name[:-5]] = self.coords(f(self.basis)).T
        return out

    def audit(self):
        """Defects of the structural identities (all should vanish)."""
        f = self.structure
        jac = (
            np.einsum("bcd,ade->abce", f, f)
            + np.einsum("cad,bde->abce", f, f)
            + np.einsum("abd,cde->abce", f, f)
        )
        P = self.projectors()
        eye = np.eye(self.dimension)
        idem = max(np.abs(p @ p - p).max() for p in P.values())
        comp = max(
            np.abs(P["h"] + P["m"] - eye).max(),
            np.abs(P["n"] + P["t"] + P["nbar"] - P["h"]).max(),
        )
        # <[x,y],z> + <y,[x,z]>
        G = self.gram
        adinv = np.einsum("abd,dc->abc", f, G) + np.einsum("acd,bd->abc", f, G)
        return {
            "jacobi": float(np.abs(jac).max()),
            "idempotent": float(idem),
            "complementary": float(comp),
            "ad_invariance": float(np.abs(adinv).max()),
        }

    def to_dict(self):
        return {"algebra": f"su({self.n})", "signs": list(self.signs)}


def lie_algebra(signs=(1, -1), tol=1e-12) -> LieAlgebraSpec:
    """Build and audit ``su(n)`` with involution ``Ad diag(signs)``."""
    signs = tuple(int(s) for s in signs)
    if len(signs) < 2 or any(s not in (1, -1) for s in signs) or len(set(signs)) < 2:
        raise AlgebraSpecError(f"signs {signs} do not define a nontrivial involution")
    n = len(signs)
    basis = _su_basis(n)
    dim = len(basis)
    Bm = basis.reshape(dim, -1).T
    br = np.array([[_bracket(a, b) for b in basis] for a in basis]).reshape(dim * dim, -1).T
    f, *_ = np.linalg.lstsq(Bm, br, rcond=None)
    if np.abs(f.imag).max() > tol:
        raise AlgebraSpecError("structure constants are not real")
    structure = f.real.T.reshape(dim, dim, dim)
    gram = np.real(-np.einsum("aij,bji->ab", basis, basis))
    spec = LieAlgebraSpec(signs, basis, structure, gram)
    bad = {k: v for k, v in spec.audit().items() if v > tol}
    if bad:
        raise AlgebraSpecError(f"algebra audit failed: {bad}")
    return spec


def algebra_from_dict(d) -> LieAlgebraSpec:
    known = {"algebra", "signs"}
    extra = set(d) - known
    if extra:
        raise AlgebraSpecError(f"unknown algebra keys {sorted(extra)}")
    signs = tuple(d.get("signs", (1, -1)))
    name = d.get("algebra", f"su({len(signs)})")
    if name != f"su({len(signs)})":
        raise AlgebraSpecError(f"algebra {name!r} does not match signs of length {len(signs)}")
    return lie_algebra(signs)


SU2 = None


def su2() -> LieAlgebraSpec:
    global SU2
    if SU2 is None:
        SU2 = lie_algebra((1, -1))
    return SU2


def r_project(spec: LieAlgebraSpec, eta, tol=1e-10):
    """``eta_nbar + eta_t / 2`` for ``eta`` in the complexified fixed algebra."""
    eta = np.asarray(eta, dtype=complex)
    off = np.abs(spec.m_part(eta)).max(initial=0.0)
    if off > tol * max(1.0, np.abs(eta).max(initial=0.0)):
        raise AlgebraSpecError(f"r-matrix input has m-component of size {off:.3g}")
    return spec.nbar_part(eta) + 0.5 * spec.t_part(eta)


# ---------------------------------------------------------------------------
# loop elements


@dataclass
class LoopElement:
    """``xi = sum_{|j| <= d} xi_j lambda^j`` stored as ``coeffs[j + d]``."""

    d: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.d < 1 or self.d % 2 == 0:
            raise AlgebraSpecError(f"degree d={self.d} must be odd and positive")
        if self.coeffs.shape[0] != 2 * self.d + 1:
            raise AlgebraSpecError("coefficient count does not match 2d+1")

    def __getitem__(self, j):
        if abs(j) > self.d:
            return np.zeros(self.coeffs.shape[1:], complex)
        return self.coeffs[j + self.d]

    def __call__(self, lam):
        lam = complex(lam)
        j = np.arange(-self.d, self.d + 1)
        return np.tensordot(lam ** j.astype(float), self.coeffs, axes=(0, 0))

    def defects(self, spec: LieAlgebraSpec):
        """Reality, twisting and trace defects."""
        d = self.d
        real = max(
            np.abs(self[-j] - spec.conj(self[j])).max() for j in range(0, d + 1)
        )
        tw = 0.0
        for j in range(-d, d + 1):
            wrong = spec.m_part(self[j]) if j % 2 == 0 else spec.h_part(self[j])
            tw = max(tw, np.abs(wrong).max())
        tr = np.abs(np.trace(self.coeffs, axis1=-2, axis2=-1)).max()
        return {"reality": float(real), "twisting": float(tw), "trace": float(tr)}

    def check(self, spec: LieAlgebraSpec, tol=1e-10):
        bad = {k: v for k, v in self.defects(spec).items() if v > tol}
        if bad:
            raise AlgebraSpecError(f"loop element is not admissible: {bad}")
        return self

    def norm2(self, spec: LieAlgebraSpec):
        """``<xi, xi>``: the constant coefficient of ``-tr xi(lambda)^2``."""
        return float(
            np.real(sum(spec.inner(self[j], self[-j]) for j in range(-self.d, self.d + 1)))
        )

    def to_dict(self):
        return {
            "d": self.d,
            "coeffs": [[[[z.real, z.imag] for z in row] for row in c] for c in self.coeffs],
        }

    @classmethod
    def from_dict(cls, data):
        extra = set(data) - {"d", "coeffs"}
        if extra:
            raise AlgebraSpecError(f"unknown loop-element keys {sorted(extra)}")
        c = np.asarray(data["coeffs"], dtype=float)
        return cls(int(data["d"]), c[..., 0] + 1j * c[..., 1])


def random_loop(spec: LieAlgebraSpec, d: int, rng=None, norm=1.0) -> LoopElement:
    """Seeded admissible loop element scaled to ``<xi, xi> = norm``.

    Finite-difference residuals scale with powers of the amplitude, so a
    fixed normalization keeps them comparable across seeds.
    """
    rng = np.random.default_rng(rng)
    n = spec.n
    coeffs = np.zeros((2 * d + 1, n, n), complex)
    for j in range(0, d + 1):
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        X -= np.trace(X) / n * np.eye(n)
        if j == 0:
            X = 0.5 * (X + spec.conj(X))
        X = spec.h_part(X) if j % 2 == 0 else spec.m_part(X)
        coeffs[d + j] = X
        coeffs[d - j] = spec.conj(X)
    xi = LoopElement(d, coeffs)
    if norm is not None:
        xi.coeffs *= np.sqrt(norm / xi.norm2(spec))
    return xi


def homogeneous_loop(spec: LieAlgebraSpec, a=1.0, phase=0.0) -> LoopElement:
    """Stationary ``d = 1`` element with commuting off-diagonal ``xi_{+-1}``.

    Only defined for ``su(2)``.  The resulting ``phi`` is constant, so the
    frame is a one-parameter subgroup and the harmonic map is explicit.
    """
    if spec.n != 2:
        raise AlgebraSpecError("homogeneous_loop is implemented for su(2)")
    x1 = np.array([[0, a], [a * np.exp(1j * phase), 0]], complex)
    coeffs = np.array([spec.conj(x1), np.zeros((2, 2)), x1])
    return LoopElement(1, coeffs)


# ---------------------------------------------------------------------------
# Lax flows


def _zfield(spec, xi: LoopElement):
    return xi[xi.d], r_project(spec, xi[xi.d - 1])


def lax_rhs(spec: LieAlgebraSpec, xi: LoopElement, top_tol=1e-10):
    """``(d xi/dz, d xi/dzbar)`` as coefficient arrays of shape ``(2d+1, n, n)``.

    ``d xi/dz = [xi, lambda xi_d + r(xi_{d-1})]`` and
    ``d xi/dzbar = [xi, lambda^-1 xi_{-d} + conj r(xi_{d-1})]``.

    Raises
    ------
    AlgebraSpecError
        if the coefficient of ``lambda^(d+1)`` fails to cancel.
    """
    d = xi.d
    C = xi.coeffs
    P1, P0 = _zfield(spec, xi)
    Q1, Q0 = xi[-d], spec.conj(P0)
    top = _bracket(C[-1], P1)
    bottom = _bracket(C[0], Q1)
    scale = max(1.0, np.abs(C).max()) ** 2
    if max(np.abs(top).max(), np.abs(bottom).max()) > top_tol * scale:
        raise AlgebraSpecError("top coefficient of the Lax bracket does not cancel")
    dz = _bracket(C, P0)
    dz[1:] += _bracket(C[:-1], P1)
    dzb = _bracket(C, Q0)
    dzb[:-1] += _bracket(C[1:], Q1)
    return dz, dzb


def _direction_rhs(spec, d, w):
    """Right-hand side of the real flow along direction ``w`` in the z-plane."""

    def rhs(_t, c):
        dz, dzb = lax_rhs(spec, LoopElement(d, c))
        return w * dz + np.conj(w) * dzb

    return rhs


def _flow_to(rhs, state0, targets, tol):
    """States at each target time, integrating outward from 0 in both directions."""
    targets = np.asarray(targets, dtype=float)
    out = np.empty((len(targets),) + np.shape(state0), dtype=complex)
    for idx in (np.nonzero(targets > 0)[0], np.nonzero(targets <= 0)[0]):
        if len(idx) == 0:
            continue
        end = targets[idx[np.argmax(np.abs(targets[idx]))]]
        if end == 0:
            out[idx] = state0
            continue
        traj = ode_solve(rhs, state0, (0.0, end), tol=tol)
        out[idx] = traj(targets[idx])
    return out


@dataclass
class LaxField:
    """Loop-element coefficients over a rectangular ``(x, y)`` grid."""

    spec: LieAlgebraSpec
    d: int
    xs: np.ndarray
    ys: np.ndarray
    coeffs: np.ndarray  # (nx, ny, 2d+1, n, n)
    drift: float
    invariant_defect: float

    def at(self, i, j) -> LoopElement:
        return LoopElement(self.d, self.coeffs[i, j])

    def to_csv(self):
        lines = ["i,j,x,y,k,row,col,re,im"]
        nx, ny, K, n, _ = self.coeffs.shape
        for i, j, k, r, c in itertools.product(range(nx), range(ny), range(K), range(n), range(n)):
            z = self.coeffs[i, j, k, r, c]
            lines.append(
                f"{i},{j},{self.xs[i]:.17g},{self.ys[j]:.17g},{k - self.d},{r},{c},{z.real:.17g},{z.imag:.17g}"
            )
        return "\n".join(lines) + "\n"


def evolve(spec, xi0: LoopElement, xs, ys, tol=1e-10, order="xy", jobs=1) -> LaxField:
    """Evolve ``xi0`` to every node of the grid ``xs x ys``.

    With ``order="xy"`` the value at ``(x, y)`` is the x-flow for time ``x``
    applied after the y-flow for time ``y``; ``order="yx"`` swaps them.
    """
    xi0.check(spec)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    d = xi0.d
    fx = _direction_rhs(spec, d, 1.0)
    fy = _direction_rhs(spec, d, 1j)
    if order == "xy":
        first, second, t1, t2 = fy, fx, ys, xs
    elif order == "yx":
        first, second, t1, t2 = fx, fy, xs, ys
    else:
        raise ValueError(f"unknown flow order {order!r}")
    axis = _flow_to(first, xi0.coeffs, t1, tol)
    rows = parallel_map(lambda s: _flow_to(second, s, t2, tol), list(axis), jobs)
    C = np.array(rows)  # (len(t1), len(t2), ...)
    if order == "xy":
        C = np.swapaxes(C, 0, 1)
    n0 = xi0.norm2(spec)
    flat = C.reshape((-1,) + C.shape[2:])
    norms = np.array([LoopElement(d, c).norm2(spec) for c in flat])
    drift = float(np.abs(norms - n0).max())
    inv = max(max(LoopElement(d, c).defects(spec).values()) for c in flat)
    return LaxField(spec, d, xs, ys, C, drift, float(inv))


def commutativity_defect(spec, xi0: LoopElement, xs, ys, tol=1e-10, jobs=1):
    """Max node discrepancy between the two flow orders."""
    a = evolve(spec, xi0, xs, ys, tol, "xy", jobs)
    b = evolve(spec, xi0, xs, ys, tol, "yx", jobs)
    return float(np.abs(a.coeffs - b.coeffs).max())


# ---------------------------------------------------------------------------
# connection forms and finite-difference residuals


def phi_from_coeffs(spec, coeffs, d, lam):
    """``(phi_z, phi_zbar)`` of the loop family at ``lam``; leading axes kept.

    ``phi_z = lam xi_d + r(xi_{d-1})`` and
    ``phi_zbar = lam^-1 xi_{-d} + conj r(xi_{d-1})``.
    """
    lam = complex(lam)
    C = np.asarray(coeffs, dtype=complex)
    R = r_project(spec, C[..., 2 * d - 1, :, :])
    P = lam * C[..., 2 * d, :, :] + R
    Q = C[..., 0, :, :] / lam + spec.conj(R)
    return np.stack([P, Q], axis=-3)


def phi_lambda(field: LaxField, lam):
    """Per-node ``(phi_z, phi_zbar)`` with shape ``(nx, ny, 2, n, n)``."""
    return phi_from_coeffs(field.spec, field.coeffs, field.d, lam)


def group_family(Phi, lam):
    """Loop of flat connections through a harmonic map into a group.

    ``Phi = (Phi_z, Phi_zbar)`` is ``f^-1 df``; the family is
    ``(1 - lam^-1)/2 Phi_z dz + (1 - lam)/2 Phi_zbar dzbar``.  It vanishes at
    ``lam = 1`` and equals ``Phi`` at ``lam = -1``.
    """
    lam = complex(lam)
    Phi = np.asarray(Phi, dtype=complex)
    return np.stack(
        [0.5 * (1 - 1 / lam) * Phi[..., 0, :, :], 0.5 * (1 - lam) * Phi[..., 1, :, :]], axis=-3
    )


def _spacing(v, name):
    v = np.asarray(v, dtype=float)
    if len(v) < 4:
        raise GridError(f"{name}-grid has {len(v)} nodes; at least 4 are needed")
    h = np.diff(v)
    if np.abs(h - h[0]).max() > 1e-9 * abs(h[0]):
        raise GridError(f"{name}-grid is not uniform")
    return h[0]


def _partials(S, xs, ys):
    """Central differences on interior nodes of samples ``S[i, j, ...]``."""
    hx, hy = _spacing(xs, "x"), _spacing(ys, "y")
    dx = (S[2:, 1:-1] - S[:-2, 1:-1]) / (2 * hx)
    dy = (S[1:-1, 2:] - S[1:-1, :-2]) / (2 * hy)
    return dx, dy


def _dz(dx, dy):
    return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)


def maurer_cartan_residual(phi, xs, ys):
    """Max interior-node norm of ``d_z phi_zbar - d_zbar phi_z + [phi_z, phi_zbar]``.

    Central differences make this second order in the grid spacing.
    """
    phi = np.asarray(phi)
    dx, dy = _partials(phi, xs, ys)
    dz, dzb = _dz(dx, dy)
    P, Q = phi[1:-1, 1:-1, 0], phi[1:-1, 1:-1, 1]
    res = dz[..., 1, :, :] - dzb[..., 0, :, :] + _bracket(P, Q)
    return float(np.abs(res).max())


def _form_from_map(f, xs, ys):
    """``f^-1 df`` at interior nodes, as ``(Phi_z, Phi_zbar)`` samples."""
    dx, dy = _partials(f, xs, ys)
    finv = np.linalg.inv(f[1:-1, 1:-1])
    Fx, Fy = finv @ dx, finv @ dy
    return np.stack([0.5 * (Fx - 1j * Fy), 0.5 * (Fx + 1j * Fy)], axis=-3)


def harmonicity_residual(samples, xs, ys, kind="form"):
    """Max norm of ``d * Phi`` for ``Phi = f^-1 df``.

    With ``*dx = dy`` this is ``d_x Phi_x + d_y Phi_y = 2 (d_z Phi_zbar +
    d_zbar Phi_z)``, which vanishes identically for constant ``Phi``.
    ``kind="map"`` accepts group-valued samples ``f`` instead of the form;
    the grid is then trimmed by one node on each side.
    """
    S = np.asarray(samples, dtype=complex)
    if kind == "map":
        S = _form_from_map(S, xs, ys)
        xs, ys = np.asarray(xs)[1:-1], np.asarray(ys)[1:-1]
    elif kind != "form":
        raise ValueError(f"unknown sample kind {kind!r}")
    dx, dy = _partials(S, xs, ys)
    dz, dzb = _dz(dx, dy)
    res = 2 * (dz[..., 1, :, :] + dzb[..., 0, :, :])
    return float(np.abs(res).max())


# ---------------------------------------------------------------------------
# frames


class LaxSource:
    """Connection driven by a polynomial Killing field evolving with the flows."""

    def __init__(self, spec: LieAlgebraSpec, xi0: LoopElement):
        self.spec = spec
        self.d = xi0.check(spec).d
        self.state0 = xi0.coeffs

    def drift(self, state, w):
        dz, dzb = lax_rhs(self.spec, LoopElement(self.d, state))
        return w * dz + np.conj(w) * dzb

    def phi(self, state, lam):
        return phi_from_coeffs(self.spec, state, self.d, lam)


class FormSource:
    """Connection given by an explicit callable ``z -> (phi_z, phi_zbar)``."""

    def __init__(self, func, n=2):
        self.func = func
        self.state0 = np.zeros(1, complex)
        self.n = n

    def drift(self, state, w):
        return np.full(1, w, dtype=complex)

    def phi(self, state, lam):
        P, Q = self.func(complex(state[0]), lam)
        return np.stack([np.asarray(P, complex), np.asarray(Q, complex)])


def _along(P, Q, w):
    return w * P + np.conj(w) * Q


def _frame_rhs(source, w, lam, shape, n):
    k = int(np.prod(shape))

    def rhs(_t, y):
        state = y[:k].reshape(shape)
        F = y[k:].reshape(n, n)
        P, Q = source.phi(state, lam)
        return np.concatenate([np.ravel(source.drift(state, w)), np.ravel(F @ _along(P, Q, w))])

    return rhs


@dataclass
class FrameGrid:
    """Frames ``F`` with ``dF = F phi`` and the form samples they integrate."""

    xs: np.ndarray
    ys: np.ndarray
    lam: complex
    F: np.ndarray  # (nx, ny, n, n)
    phi: np.ndarray  # (nx, ny, 2, n, n)
    states: np.ndarray = field(repr=False)
    plaquette_defect: float = 0.0

    @property
    def unitarity_defect(self):
        n = self.F.shape[-1]
        FF = self.F @ np.conj(np.swapaxes(self.F, -1, -2))
        return float(np.abs(FF - np.eye(n)).max())

    @property
    def det_defect(self):
        return float(np.abs(np.linalg.det(self.F) - 1).max())

    def to_csv(self):
        lines = ["i,j,x,y,row,col,re,im"]
        nx, ny, n, _ = self.F.shape
        for i, j, r, c in itertools.product(range(nx), range(ny), range(n), range(n)):
            z = self.F[i, j, r, c]
            lines.append(f"{i},{j},{self.xs[i]:.17g},{self.ys[j]:.17g},{r},{c},{z.real:.17g},{z.imag:.17g}")
        return "\n".join(lines) + "\n"


def _sweep(source, xs, ys, lam, tol, n, first_axis, jobs):
    shape = np.shape(source.state0)
    k = int(np.prod(shape))
    y0 = np.concatenate([np.ravel(source.state0).astype(complex), np.eye(n, dtype=complex).ravel()])
    if first_axis == "y":
        t1, t2, w1, w2 = ys, xs, 1j, 1.0
    else:
        t1, t2, w1, w2 = xs, ys, 1.0, 1j
    axis = _flow_to(_frame_rhs(source, w1, lam, shape, n), y0, t1, tol)
    rhs2 = _frame_rhs(source, w2, lam, shape, n)
    rows = np.array(parallel_map(lambda s: _flow_to(rhs2, s, t2, tol), list(axis), jobs))
    if first_axis == "y":
        rows = np.swapaxes(rows, 0, 1)
    states = rows[..., :k].reshape(rows.shape[:2] + shape)
    F = rows[..., k:].reshape(rows.shape[:2] + (n, n))
    return states, F


def integrate_frame(source, xs, ys, lam=1.0, tol=1e-10, jobs=1, audit=True) -> FrameGrid:
    """Solve ``dF = F phi_lam`` with ``F(0) = I`` on the grid ``xs x ys``.

    Rows are integrated along x after a sweep up the y-axis.  The audit
    repeats the computation with the roles of the axes exchanged; for a flat
    connection both edge-paths of every cell agree.

    Raises
    ------
    NonFlatError
        when the two sweeps disagree by more than ``100 tol`` per unit length.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = source.spec.n if hasattr(source, "spec") else source.n
    states, F = _sweep(source, xs, ys, lam, tol, n, "y", jobs)
    defect = 0.0
    if audit:
        _, F2 = _sweep(source, xs, ys, lam, tol, n, "x", jobs)
        defect = float(np.abs(F - F2).max())
        extent = 1.0 + np.abs(xs).max() + np.abs(ys).max()
        if defect > 100 * tol * extent * max(1.0, np.abs(F).max()):
            raise NonFlatError(f"frame depends on the integration path (defect {defect:.3g})")
    phi = np.array([[source.phi(s, lam) for s in row] for row in states])
    return FrameGrid(xs, ys, complex(lam), F, phi, states, defect)


def cartan_embed(spec: LieAlgebraSpec, frame: FrameGrid):
    """``sigma(F) F^-1`` at every node."""
    F = frame.F
    return spec.sigma(F) @ np.linalg.inv(F)


def cartan_form(spec: LieAlgebraSpec, frame: FrameGrid):
    """``f^-1 df`` of the Cartan embedding, ``F (sigma(phi) - phi) F^-1``.

    Requires a frame computed at ``lam = 1``.
    """
    if abs(frame.lam - 1) > 1e-14:
        raise ValueError("the Cartan form needs the frame at lambda = 1")
    F = frame.F[:, :, None]
    Finv = np.linalg.inv(F)
    return F @ (spec.sigma(frame.phi) - frame.phi) @ Finv


def adapted_defect(spec: LieAlgebraSpec, field: LaxField, phi_z):
    """Max node norm of ``xi_d + r(xi_{d-1}) - phi_z``.

    ``phi_z`` is the dz-component of the connection at ``lam = 1``.  Fields
    produced by :func:`evolve` are adapted by construction, so this is a
    diagnostic for externally supplied forms.
    """
    own = phi_lambda(field, 1.0)[..., 0, :, :]
    return float(np.abs(own - np.asarray(phi_z)).max())


SAMPLE_LAMBDAS = (1.0, -1.0, 1j, np.exp(0.7j), 0.5, 2.0 + 1.0j, 0.3j, -3.0)


def flatness_report(spec, xi0: LoopElement, base=(0.3, 0.2), h=1e-3, nodes=7, lams=SAMPLE_LAMBDAS, tol=1e-13):
    """Maurer-Cartan and harmonicity residuals near ``base`` at spacings ``h`` and ``h/2``.

    The frame is integrated at ``tol`` well below the finite-difference
    error so that the observed ratios reflect the truncation order.
    """
    out = {"h": [h, h / 2], "lambdas": [[complex(l).real, complex(l).imag] for l in lams]}
    mc, harm = [], []
    src = LaxSource(spec, xi0)
    for hh in (h, h / 2):
        k = np.arange(nodes) - nodes // 2
        xs, ys = base[0] + hh * k, base[1] + hh * k
        fr = integrate_frame(src, xs, ys, 1.0, tol)
        mc.append([maurer_cartan_residual(phi_from_coeffs(spec, fr.states, xi0.d, l), xs, ys) for l in lams])
        harm.append(harmonicity_residual(cartan_form(spec, fr), xs, ys))
    mc = np.array(mc)
    out["maurer_cartan"] = mc.tolist()
    out["harmonicity"] = harm
    # exactly flat fields give 0/0; report those ratios as nan
    with np.errstate(divide="ignore", invalid="ignore"):
        out["mc_ratio"] = float(np.min(mc[0] / mc[1]))
        out["harmonicity_ratio"] = float(np.float64(harm[0]) / harm[1])
    out["max_maurer_cartan"] = float(mc[0].max())
    return out
