"""Holonomy of a loop of flat connections on a torus, its eigenvalue
functions, and recovery of the spectral curve from them.

Transport solves ``Psi' = -phi_lam(gamma') Psi`` along straight segments, so
the holonomy along a path is ``H = Psi(1)``.  A family is described by a
lambda-independent *state* that is carried along the path (the position, or a
polynomial Killing field together with its frame) and by a map from that
state to the connection at a batch of spectral parameters; every lambda in a
batch is then transported in a single ODE solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import build_homology, curve_from_inner_points
from .errors import FitError, GridError, PreconditionError, SpectraError
from .laxflow import LaxSource, LieAlgebraSpec, LoopElement, phi_from_coeffs
from .numkernel import TWO_PI_I, lattice_residual, ode_solve, parallel_map

LAMBDA_FLOOR = 1e-6

# ---------------------------------------------------------------------------
# families


class ConnectionFamily:
    """Loop of flat ``sl(n)`` connections ``phi_lam = P dz + Q dzbar``.

    Parameters
    ----------
    state0 : ndarray
        State at ``z = 0``.
    drift : callable ``(state, w) -> dstate``
        Derivative of the state along the direction ``w``.
    forms : callable ``(state, lams) -> (P, Q)``
        Connection components, arrays of shape ``(len(lams), n, n)``.
    tau : complex
        Second lattice generator; the first is 1.
    """

    def __init__(self, state0, drift, forms, tau, n=2, name="family", exact=None):
        self.state0 = np.asarray(state0, dtype=complex)
        self.drift = drift
        self.forms = forms
        self.tau = complex(tau)
        self.n = n
        self.name = name
        #: optional closed-form holonomy ``(lams, w) -> H`` for constant families
        self.exact = exact

    def connection(self, z, lams):
        """``(P, Q)`` at position ``z``."""
        return self.forms(self.state_at(z), _lams(lams))

    def state_at(self, z, tol=1e-12):
        z = complex(z)
        if z == 0:
            return self.state0
        traj = ode_solve(lambda _t, s: self.drift(s, z), self.state0, (0.0, 1.0), tol=tol)
        return traj.final

    def generator(self, which):
        if which in (1, "1"):
            return 1.0 + 0j
        if which == "tau":
            return self.tau
        return complex(which)


def _lams(lams):
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    if np.any(np.abs(lams) < LAMBDA_FLOOR):
        raise PreconditionError(f"spectral parameter within {LAMBDA_FLOOR} of the pole at 0")
    return lams


def _constant_family(P, Q, tau, name):
    """Family with z-independent components ``P(lams), Q(lams)``."""
    from scipy.linalg import expm

    def forms(_state, lams):
        return P(lams), Q(lams)

    def exact(lams, w):
        lams = _lams(lams)
        X = -(w * P(lams) + np.conj(w) * Q(lams))
        return np.array([expm(x) for x in X])

    return ConnectionFamily(np.zeros(1), lambda s, w: np.zeros(1), forms, tau, 2, name, exact)


def vacuum_family(tau, n1=1, n2=0, phase=0.0):
    """Group-level family of the doubly periodic map ``exp(z M - zbar M^H)``.

    ``M = diag(m, -m)`` with ``Im m = pi n1`` and ``Im(m tau) = pi n2``, so
    the map is periodic on the lattice spanned by 1 and ``tau``.  Holonomy is
    diagonal with ``log mu_w = -(1 - 1/lam) m w / 2 + (1 - lam) mbar wbar / 2``.
    """
    tau = complex(tau)
    if tau.imag <= 0:
        raise PreconditionError("tau must lie in the upper half plane")
    u = np.pi * (n2 - n1 * tau.real) / tau.imag
    m = u + 1j * np.pi * n1
    R = np.array([[np.cos(phase), -np.sin(phase)], [np.sin(phase), np.cos(phase)]], complex)
    M = R @ np.diag([m, -m]) @ R.T
    Phi_z, Phi_zb = M, -M.conj().T

    def P(lams):
        return 0.5 * (1 - 1 / lams)[:, None, None] * Phi_z

    def Q(lams):
        return 0.5 * (1 - lams)[:, None, None] * Phi_zb

    fam = _constant_family(P, Q, tau, "vacuum")
    fam.m = m

    def log_mu(lams, w=1.0):
        lams = _lams(lams)
        return -(0.5 * (1 - 1 / lams) * m * w - 0.5 * (1 - lams) * np.conj(m) * np.conj(w))

    fam.log_mu = log_mu
    return fam


def homogeneous_family(a0, k=1.0, tau=1j):
    """Constant family ``phi_lam = A dz + conj(k) lam A dzbar``.

    ``A(lam) = a0 + k lam^-1 abar0`` with ``abar0 = -a0^H`` and ``|k| = 1``.
    Both components are multiples of one matrix, so the family is flat; on
    the unit circle it is ``su(2)``-valued.  Its eigenvalue curve is
    ``nu^2 = -det A(lam)``, of genus 0 with branch points at the roots of
    ``det(lam a0 + k abar0)``.
    """
    a0 = np.asarray(a0, dtype=complex)
    if abs(np.trace(a0)) > 1e-12:
        raise PreconditionError("a0 must be trace free")
    k = complex(k)
    if abs(abs(k) - 1) > 1e-12:
        raise PreconditionError("|k| must be 1")
    ab0 = -a0.conj().T

    def A(lams):
        return a0[None] + (k / lams)[:, None, None] * ab0[None]

    def P(lams):
        return A(lams)

    def Q(lams):
        return (np.conj(k) * lams)[:, None, None] * A(lams)

    fam = _constant_family(P, Q, tau, "homogeneous")
    fam.a0, fam.k = a0, k
    # det(lam a0 + k abar0) = d2 lam^2 + d1 lam + d0
    d2 = np.linalg.det(a0)
    d0 = k * k * np.linalg.det(ab0)
    d1 = np.linalg.det(a0 + k * ab0) - d2 - d0
    fam.branch_points = np.roots([d2, d1, d0])
    return fam


def _group_components(Phi, lams):
    """Vectorized :func:`group_family` over a batch of spectral parameters."""
    P = 0.5 * (1 - 1 / lams)[:, None, None] * Phi[0]
    Q = 0.5 * (1 - lams)[:, None, None] * Phi[1]
    return P, Q


def lax_group_family(spec: LieAlgebraSpec, xi0: LoopElement, tau):
    """Group-level family of the Cartan embedding of a finite-type map.

    The state is ``(xi, F)`` evolving with ``dF = F phi``; the harmonic map
    ``f = sigma(F) F^-1`` has ``f^-1 df = F (sigma(phi) - phi) F^-1``, and the
    family is :func:`group_family` of that form.
    """
    src = LaxSource(spec, xi0)
    n = spec.n
    shape = xi0.coeffs.shape
    k = int(np.prod(shape))

    def unpack(state):
        return state[:k].reshape(shape), state[k:].reshape(n, n)

    def drift(state, w):
        xi, F = unpack(state)
        P, Q = src.phi(xi, 1.0)
        return np.concatenate([np.ravel(src.drift(xi, w)), np.ravel(F @ (w * P + np.conj(w) * Q))])

    def forms(state, lams):
        xi, F = unpack(state)
        phi = phi_from_coeffs(spec, xi, xi0.d, 1.0)
        Finv = np.linalg.inv(F)
        Phi = F @ (spec.sigma(phi) - phi) @ Finv
        return _group_components(Phi, lams)

    state0 = np.concatenate([xi0.coeffs.ravel(), np.eye(n, dtype=complex).ravel()])
    return ConnectionFamily(state0, drift, forms, tau, n, "lax")


def perturbed_family(base: ConnectionFamily, eps=1e-2, seed=0):
    """Non-flat negative control: adds ``eps * z``-dependent noise to ``P``."""
    rng = np.random.default_rng(seed)
    N = rng.normal(size=(base.n, base.n)) + 1j * rng.normal(size=(base.n, base.n))
    N = N - N.conj().T
    N -= np.trace(N) / base.n * np.eye(base.n)
    k = base.state0.size

    def drift(state, w):
        return np.concatenate([base.drift(state[:k], w), [w]])

    def forms(state, lams):
        P, Q = base.forms(state[:k], lams)
        z = state[k]
        return P + eps * z.real * N, Q + eps * z.real * N

    return ConnectionFamily(
        np.concatenate([base.state0, [0j]]), drift, forms, base.tau, base.n, base.name + "+noise"
    )


# ---------------------------------------------------------------------------
# transport


def _transport_rhs(family, lams, w, k):
    n = family.n
    L = len(lams)

    def rhs(_t, y):
        state = y[:k]
        Psi = y[k:].reshape(L, n, n)
        P, Q = family.forms(state, lams)
        X = w * P + np.conj(w) * Q
        return np.concatenate([np.ravel(family.drift(state, w)), np.ravel(-X @ Psi)])

    return rhs


def transport_path(family: ConnectionFamily, lams, vertices, tol=1e-12):
    """Path-ordered transport along the polygon through ``vertices``.

    Returns ``(H, state)`` with ``H`` of shape ``(len(lams), n, n)``.
    """
    lams = _lams(lams)
    n = family.n
    L = len(lams)
    vertices = [complex(v) for v in vertices]
    state = family.state_at(vertices[0])
    k = state.size
    Psi = np.broadcast_to(np.eye(n, dtype=complex), (L, n, n)).copy()
    for z0, z1 in zip(vertices[:-1], vertices[1:]):
        w = z1 - z0
        y0 = np.concatenate([state, Psi.ravel()])
        traj = ode_solve(_transport_rhs(family, lams, w, k), y0, (0.0, 1.0), tol=tol)
        state = traj.final[:k]
        Psi = traj.final[k:].reshape(L, n, n)
    return Psi, state


def _sqrt_det_normalize(H):
    det = np.linalg.det(H)
    return H / np.sqrt(det)[:, None, None], np.abs(det - 1)


def _select_mu(tr):
    """Eigenvalue of ``t^2 - tr t + 1`` with ``|mu| >= 1``; ties take ``Im >= 0``."""
    s = np.sqrt(tr * tr - 4 + 0j)
    m1, m2 = 0.5 * (tr + s), 0.5 * (tr - s)
    a1, a2 = np.abs(m1), np.abs(m2)
    tie = np.isclose(a1, a2, rtol=1e-12, atol=0)
    pick1 = np.where(tie, m1.imag >= m2.imag, a1 > a2)
    return np.where(pick1, m1, m2)


@dataclass
class HolonomySample:
    lam: complex
    H: np.ndarray
    mu: complex
    discriminant: complex
    det_defect: float


@dataclass
class HolonomyBatch:
    """Holonomies at a batch of spectral parameters for one generator."""

    lams: np.ndarray
    H: np.ndarray
    det_defect: np.ndarray
    generator: complex
    basepoint: complex

    @property
    def trace(self):
        return np.trace(self.H, axis1=-2, axis2=-1)

    @property
    def discriminant(self):
        t = self.trace
        return t * t - 4

    @property
    def mu(self):
        return _select_mu(self.trace)

    def __getitem__(self, i):
        return HolonomySample(
            complex(self.lams[i]), self.H[i], complex(self.mu[i]),
            complex(self.discriminant[i]), float(self.det_defect[i]),
        )

    def to_csv(self):
        rows = ["lam_re,lam_im,tr_re,tr_im,disc_re,disc_im"]
        for lam, t, d in zip(self.lams, self.trace, self.discriminant):
            rows.append(
                f"{lam.real:.17g},{lam.imag:.17g},{t.real:.17g},{t.imag:.17g},{d.real:.17g},{d.imag:.17g}"
            )
        return "\n".join(rows) + "\n"


def transport(family: ConnectionFamily, generator, lams, basepoint=0.0, tol=1e-12, chunk=512, jobs=1):
    """Holonomy around a lattice generator at every ``lam`` in ``lams``.

    The result is renormalized by the principal square root of ``det H``;
    the raw defect ``|det H - 1|`` is kept for auditing.
    """
    lams = _lams(lams)
    w = family.generator(generator)
    z0 = complex(basepoint)
    parts = [lams[i : i + chunk] for i in range(0, len(lams), chunk)]
    Hs = parallel_map(lambda ls: transport_path(family, ls, [z0, z0 + w], tol)[0], parts, jobs)
    H, dd = _sqrt_det_normalize(np.concatenate(Hs))
    return HolonomyBatch(lams, H, dd, w, z0)


# ---------------------------------------------------------------------------
# audits


def default_grid(n_r=64, n_theta=64, n_circle=256, r_min=0.05, r_max=20.0):
    """Polar grid symmetric under ``lam -> 1/conj(lam)`` plus the unit circle."""
    radii = np.geomspace(r_min, r_max, n_r)
    theta = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    mesh = radii[:, None] * np.exp(1j * theta)[None, :]
    circle = np.exp(2j * np.pi * (np.arange(n_circle) + 0.5) / n_circle)
    return mesh, circle


def symmetry_audit(family: ConnectionFamily, lams=None, circle=None, basepoint=0.0, tol=1e-12, jobs=1):
    """Max defects of the holonomy identities over a spectral grid.

    Reports ``|conj(H_{1/conj lam})^T H_lam - I|``, unitarity on the unit
    circle, ``|det H - 1|`` before renormalization, and the discrepancy of
    the two edge-paths ``1`` then ``tau`` versus ``tau`` then ``1`` relative
    to ``max(1, |H|)``.
    """
    if lams is None or circle is None:
        mesh, circ = default_grid()
        lams = mesh.ravel() if lams is None else lams
        circle = circ if circle is None else circle
    lams = _lams(np.ravel(lams))
    circle = _lams(np.ravel(circle))
    z0 = complex(basepoint)
    w1, w2 = 1.0, family.tau
    allp = np.concatenate([lams, 1 / np.conj(lams), circle])
    L = len(lams)

    def run(verts):
        parts = [allp[i : i + 512] for i in range(0, len(allp), 512)]
        return np.concatenate(parallel_map(lambda ls: transport_path(family, ls, verts, tol)[0], parts, jobs))

    H1 = run([z0, z0 + w1])
    det_defect = float(np.abs(np.linalg.det(H1) - 1).max())
    A = run([z0, z0 + w1, z0 + w1 + w2])
    B = run([z0, z0 + w2, z0 + w2 + w1])
    eye = np.eye(family.n)
    Hl, Hr, Hc = H1[:L], H1[L : 2 * L], H1[2 * L :]
    sym = np.abs(np.conj(np.swapaxes(Hr, -1, -2)) @ Hl - eye).max()
    uni = np.abs(Hc @ np.conj(np.swapaxes(Hc, -1, -2)) - eye).max()
    # relative to the size of the holonomy, which grows like exp|log mu|
    scale = np.maximum(1.0, np.abs(A).max(axis=(-2, -1)))
    comm = (np.abs(A - B).max(axis=(-2, -1)) / scale).max()
    return {
        "symmetry": float(sym),
        "unitarity": float(uni),
        "det": det_defect,
        "commutativity": float(comm),
        "n_lambda": int(len(allp)),
    }


def basepoint_defect(family: ConnectionFamily, lams, z1, z2, generator=1, tol=1e-12):
    """Max discrepancy of the discriminant between two basepoints."""
    a = transport(family, generator, lams, z1, tol).discriminant
    b = transport(family, generator, lams, z2, tol).discriminant
    return float(np.abs(a - b).max())


# ---------------------------------------------------------------------------
# discriminant scan


def _disc(family, generator, lams, basepoint, tol):
    return transport(family, generator, lams, basepoint, tol).discriminant


def _edge_increments(family, generator, s0, s1, D0, D1, basepoint, tol, max_depth=6):
    """Change of ``arg D`` along straight edges in ``log lam`` coordinates.

    Edges whose increment exceeds ``pi/3`` are bisected until resolved.
    Returns the increments and a mask of edges that never resolved.
    """
    s0, s1 = np.asarray(s0), np.asarray(s1)
    inc = np.angle(D1 / D0)
    bad = np.zeros(len(inc), bool)
    todo = np.nonzero(np.abs(inc) > np.pi / 3)[0]
    if len(todo) == 0 or max_depth == 0:
        bad[todo] = True
        return inc, bad
    sm = 0.5 * (s0[todo] + s1[todo])
    Dm = _disc(family, generator, np.exp(sm), basepoint, tol)
    a, ba = _edge_increments(family, generator, s0[todo], sm, D0[todo], Dm, basepoint, tol, max_depth - 1)
    b, bb = _edge_increments(family, generator, sm, s1[todo], Dm, D1[todo], basepoint, tol, max_depth - 1)
    inc[todo] = a + b
    bad[todo] = ba | bb
    return inc, bad


def _cell_winding(family, generator, s_grid, D, basepoint, tol):
    """Winding numbers of ``D`` around the cells of a log-polar grid.

    ``s_grid[i, j] = log r_i + i theta_j`` with the angle periodic in ``j``.
    """
    nr, nt = s_grid.shape
    sr0, sr1 = s_grid[:-1, :].ravel(), s_grid[1:, :].ravel()
    R, Rbad = _edge_increments(family, generator, sr0, sr1, D[:-1, :].ravel(), D[1:, :].ravel(), basepoint, tol)
    st1 = np.roll(s_grid, -1, axis=1)
    st1[:, -1] += 2j * np.pi
    T, Tbad = _edge_increments(
        family, generator, s_grid.ravel(), st1.ravel(), D.ravel(), np.roll(D, -1, axis=1).ravel(), basepoint, tol
    )
    R, Rbad = R.reshape(nr - 1, nt), Rbad.reshape(nr - 1, nt)
    T, Tbad = T.reshape(nr, nt), Tbad.reshape(nr, nt)
    total = R + T[1:] - np.roll(R, -1, axis=1) - T[:-1]
    bad = Rbad | Tbad[1:] | np.roll(Rbad, -1, axis=1) | Tbad[:-1]
    return np.rint(total / (2 * np.pi)).astype(int), bad


def _secant(f, lam0, m, radius, max_iter=40):
    """Secant iteration with multiplicity ``m`` confined to a disc.

    Returns ``None`` when the iterate leaves the disc of ``radius`` about
    ``lam0`` or fails to settle, so nothing outside the cell is reported.
    """
    lam0 = complex(lam0)
    x0, x1 = lam0, lam0 + 1e-3 * radius
    f0, f1 = f(x0), f(x1)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            if f1 == f0 or not np.isfinite(f1):
                return None
            x2 = x1 - m * f1 * (x1 - x0) / (f1 - f0)
            if not np.isfinite(x2) or abs(x2 - lam0) > radius:
                return None
            x0, f0 = x1, f1
            x1, f1 = x2, f(x2)
            if abs(x1 - x0) < 1e-13 * max(1.0, abs(x1)):
                return x1
    return None


def _polish(family, generator, lam0, m, radius, basepoint, tol):
    """Zero of the discriminant near ``lam0``.

    Simple zeros are polished on the discriminant itself.  At a double point
    the holonomy is scalar, so an entry of its trace-free part has a simple
    zero there; that entry is used when the discriminant iteration fails or
    the cell holds a double zero.
    """

    def disc(x):
        return _disc(family, generator, [x], basepoint, tol)[0]

    if m == 1:
        # superlinear on a simple zero; a double zero stalls and falls through
        lam = _secant(disc, lam0, 1, radius, max_iter=12)
        if lam is not None:
            return lam
    H = transport(family, generator, [lam0], basepoint, tol).H[0]
    H0 = H - 0.5 * np.trace(H) * np.eye(2)
    idx = np.unravel_index(np.argmax(np.abs(H0)), H0.shape)

    def entry(x):
        Hx = transport(family, generator, [x], basepoint, tol).H[0]
        return (Hx - 0.5 * np.trace(Hx) * np.eye(2))[idx]

    return _secant(entry, lam0, 1, radius)


@dataclass
class Scan:
    """Discriminant samples and the zeros located from them."""

    samples: HolonomyBatch
    branch_points: list
    double_points: list
    unresolved: list
    branched_at_zero: bool
    mesh_shape: tuple

    def to_dict(self):
        def cl(z):
            return [float(np.real(z)), float(np.imag(z))]

        return {
            "branch_points": [cl(z) for z in self.branch_points],
            "double_points": [cl(z) for z in self.double_points],
            "unresolved": [cl(z) for z in self.unresolved],
            "branched_at_zero": bool(self.branched_at_zero),
            "mesh": list(self.mesh_shape),
        }


def _classify(family, generator, lam, basepoint, tol):
    H = transport(family, generator, [lam], basepoint, tol).H[0]
    t = np.trace(H) / 2
    scale = max(1.0, np.abs(H).max())
    return np.abs(H - t * np.eye(2)).max() / scale < 1e-5


_SPLIT = 0.4619397662556434


def discriminant_scan(
    family: ConnectionFamily,
    n_r=64,
    n_theta=64,
    n_circle=256,
    r_min=0.05,
    r_max=20.0,
    generator=1,
    basepoint=0.0,
    tol=1e-12,
    jobs=1,
    max_split=3,
) -> Scan:
    """Locate zeros of ``tr(H)^2 - 4`` over an annulus of the spectral plane.

    Cells of a log-polar mesh carry the winding number of the discriminant.
    Cells with one zero are polished by secant iteration.  Cells with more
    are split into quarters up to ``max_split`` times; what remains is a
    cluster, polished with the multiplicity correction and labelled a double
    point when the holonomy there is scalar, otherwise reported unresolved.
    """
    if family.n != 2:
        raise GridError("the discriminant scan needs 2x2 holonomy")
    radii = np.geomspace(r_min, r_max, n_r)
    theta = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    s_grid = np.log(radii)[:, None] + 1j * theta[None, :]
    mesh = np.exp(s_grid)
    circle = np.exp(2j * np.pi * (np.arange(n_circle) + 0.5) / n_circle)
    batch = transport(family, generator, np.concatenate([mesh.ravel(), circle]), basepoint, tol, jobs=jobs)
    D = batch.discriminant[: mesh.size].reshape(mesh.shape)
    wind, bad = _cell_winding(family, generator, s_grid, D, basepoint, tol)

    branch, double, unresolved, found = [], [], [], []
    cells = [(s_grid[i, j], s_grid[i + 1, j] - s_grid[i, j], theta[1] - theta[0], int(wind[i, j]), 0)
             for i, j in zip(*np.nonzero((wind != 0) | bad))]
    for i, j in zip(*np.nonzero(bad)):
        unresolved.append(complex(mesh[i, j]))
    while cells:
        s0, ds, dt, m, depth = cells.pop()
        if m < 0:
            unresolved.append(complex(np.exp(s0 + 0.5 * (ds + 1j * dt))))
            continue
        if m == 0:
            continue
        if m >= 2 and depth < max_split:
            # off-centre split: symmetric grids put lam = +-1 exactly at the midpoint
            f = np.array([0.0, _SPLIT, 1.0])
            sub = s0 + f[:, None] * ds + 1j * f[None, :] * dt
            Ds = _disc(family, generator, np.exp(sub.ravel()), basepoint, tol).reshape(3, 3)
            w, _ = _cell_winding_open(family, generator, sub, Ds, basepoint, tol)
            for a in range(2):
                for b in range(2):
                    cells.append((sub[a, b], ds * (f[a + 1] - f[a]), dt * (f[b + 1] - f[b]), int(w[a, b]), depth + 1))
            continue
        centre = np.exp(s0 + 0.5 * (ds + 1j * dt))
        size = abs(centre) * abs(ds + 1j * dt)
        lam = _polish(family, generator, centre, min(m, 2), size, basepoint, tol)
        if lam is None:
            unresolved.append(complex(centre))
        else:
            found.append([lam, m])

    # a zero on a shared edge is seen by both neighbours with half its winding each
    merged = []
    for lam, m in found:
        for entry in merged:
            if abs(entry[0] - lam) < 1e-6 * max(1.0, abs(lam)):
                entry[1] += m
                break
        else:
            merged.append([lam, m])
    for lam, m in merged:
        scalar = _classify(family, generator, lam, basepoint, tol)
        if m == 1 and not scalar:
            branch.append(lam)
        elif scalar and m in (1, 2):
            double.append(lam)
        else:
            unresolved.append(lam)

    branch = sorted(branch, key=lambda z: (abs(z), np.angle(z)))
    inside = sum(1 for z in branch if abs(z) < r_min)
    swapped = _ring_swaps(family, generator, r_min, basepoint, tol)
    return Scan(batch, branch, sorted(double, key=abs), unresolved, bool(swapped ^ (inside % 2)), mesh.shape)


def _cell_winding_open(family, generator, s_grid, D, basepoint, tol):
    """Winding numbers on a small non-periodic log-polar patch."""
    R, Rb = _edge_increments(
        family, generator, s_grid[:-1, :].ravel(), s_grid[1:, :].ravel(),
        D[:-1, :].ravel(), D[1:, :].ravel(), basepoint, tol,
    )
    T, Tb = _edge_increments(
        family, generator, s_grid[:, :-1].ravel(), s_grid[:, 1:].ravel(),
        D[:, :-1].ravel(), D[:, 1:].ravel(), basepoint, tol,
    )
    nr, nt = s_grid.shape
    R, Rb = R.reshape(nr - 1, nt), Rb.reshape(nr - 1, nt)
    T, Tb = T.reshape(nr, nt - 1), Tb.reshape(nr, nt - 1)
    total = R[:, :-1] + T[1:] - R[:, 1:] - T[:-1]
    bad = Rb[:, :-1] | Tb[1:] | Rb[:, 1:] | Tb[:-1]
    w = np.rint(total / (2 * np.pi)).astype(int)
    w[bad] = -1
    return w, bad


# ---------------------------------------------------------------------------
# eigenvalue continuation


def _eigvec(H, mu):
    """Eigenvector of 2x2 matrices ``H`` for eigenvalues ``mu``."""
    a, b, c, d = H[:, 0, 0], H[:, 0, 1], H[:, 1, 0], H[:, 1, 1]
    v1 = np.stack([b, mu - a], axis=-1)
    v2 = np.stack([mu - d, c], axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    v = np.where((n1 >= n2)[:, None], v1, v2)
    return v / np.linalg.norm(v, axis=-1)[:, None]


@dataclass
class Continuation:
    """``log mu`` and ``log nu`` continued along a closed spectral path."""

    t: np.ndarray
    lams: np.ndarray
    log_mu: np.ndarray
    log_nu: np.ndarray
    turns: int

    @property
    def period_mu(self):
        return complex(self.log_mu[-1] - self.log_mu[0])

    @property
    def period_nu(self):
        return complex(self.log_nu[-1] - self.log_nu[0])


class _Holo:
    """Cache of holonomies for both generators at parameter values ``t``."""

    def __init__(self, family, path, basepoint, tol):
        self.family, self.path, self.z0, self.tol = family, path, basepoint, tol

    def eval(self, t):
        lams = self.path(np.asarray(t))
        H1 = transport(self.family, 1, lams, self.z0, self.tol).H
        Ht = transport(self.family, "tau", lams, self.z0, self.tol).H
        return lams, H1, Ht


def continue_eigenvalue(family, path, n0=64, basepoint=0.0, tol=1e-12, max_rounds=10, max_turns=2):
    """Continue the eigenvalue of ``H_1`` and the matching one of ``H_tau``.

    ``path(t)`` for ``t`` in ``[0, 1]`` must be closed in the spectral plane;
    it is traversed again when the eigenvalue comes back swapped.  Intervals
    where the two eigenvalue branches are not clearly separated, or where
    ``log mu`` jumps by more than 0.3, are bisected.
    """
    holo = _Holo(family, path, basepoint, tol)
    for turns in range(1, max_turns + 1):
        t = np.linspace(0.0, float(turns), n0 * turns + 1)
        lams, H1, Ht = holo.eval(t % 1.0)
        for _ in range(max_rounds):
            big = _select_mu(np.trace(H1, axis1=-2, axis2=-1))
            # det H = 1; the small root from the quadratic formula cancels badly
            pair = np.stack([big, 1 / big], axis=-1)
            logs = np.empty(len(t), complex)
            mus = np.empty(len(t), complex)
            mus[0] = big[0]
            logs[0] = np.log(mus[0])
            flagged = []
            prev = 0j
            for k in range(1, len(t)):
                d = np.log(pair[k] / mus[k - 1])
                err = np.abs(d - prev)
                order = np.argsort(err)
                if err[order[0]] > 0.3 or err[order[1]] < 3 * err[order[0]] + 1e-3:
                    flagged.append(k)
                pick = order[0]
                mus[k] = pair[k, pick]
                logs[k] = logs[k - 1] + d[pick]
                prev = d[pick] * (t[k + 1] - t[k]) / (t[k] - t[k - 1]) if k + 1 < len(t) else d[pick]
            if not flagged:
                break
            mids = np.array([0.5 * (t[k - 1] + t[k]) for k in flagged])
            lm, H1m, Htm = holo.eval(mids % 1.0)
            t = np.concatenate([t, mids])
            o = np.argsort(t, kind="stable")
            t = t[o]
            lams = np.concatenate([lams, lm])[o]
            H1 = np.concatenate([H1, H1m])[o]
            Ht = np.concatenate([Ht, Htm])[o]
        else:
            raise SpectraError("eigenvalue continuation did not separate the branches")
        if abs(mus[-1] - mus[0]) < 1e-6 * max(1.0, abs(mus[0])):
            v = _eigvec(H1, mus)
            nu = np.einsum("ki,kij,kj->k", np.conj(v), Ht, v)
            lnu = np.log(nu[0]) + np.concatenate([[0], np.cumsum(np.log(nu[1:] / nu[:-1]))])
            return Continuation(t, lams, logs, lnu, turns)
    raise SpectraError("eigenvalue did not return after the allowed number of turns")


def _ring_swaps(family, generator, r, basepoint, tol):
    """Whether the eigenvalue of ``H`` swaps once around ``|lam| = r``."""
    c = continue_eigenvalue(family, lambda t: r * np.exp(2j * np.pi * t), 64, basepoint, tol)
    return c.turns % 2 == 0


# ---------------------------------------------------------------------------
# the empirical curve


@dataclass
class EmpiricalSpectralCurve:
    branch_points: list
    branched: bool
    curve: object
    residual: float

    def to_spec(self):
        spec = self.curve.to_spec()
        spec["fit_residual"] = self.residual
        return spec


def fit_empirical_curve(points, branched=False, tol=1e-6, curve_tol=None) -> EmpiricalSpectralCurve:
    """Hyperelliptic curve with the given finite nonzero branch points.

    Points are paired as ``alpha, 1/conj(alpha)``; the pairing defect is the
    fit residual.  Whether 0 and infinity branch is decided by the caller
    (see :attr:`Scan.branched_at_zero`), not by the parity of the count.
    """
    pts = [complex(p) for p in points]
    if not pts:
        raise FitError("no branch points detected: trivial holonomy direction, no curve to fit")
    if len(pts) % 2:
        raise FitError(f"odd number ({len(pts)}) of branch points cannot be paired")
    inner = [p for p in pts if abs(p) < 1]
    outer = [p for p in pts if abs(p) >= 1]
    if len(inner) != len(outer):
        raise FitError("branch points are not symmetric under lam -> 1/conj(lam)")
    residual = 0.0
    left = list(outer)
    for a in inner:
        target = 1 / np.conj(a)
        k = int(np.argmin([abs(b - target) for b in left]))
        residual = max(residual, abs(left.pop(k) - target) / max(1.0, abs(target)))
    if residual > tol:
        raise FitError(f"branch points fail the reality pairing by {residual:.3g}")
    curve = curve_from_inner_points(inner, branched=branched, tol=curve_tol)
    return EmpiricalSpectralCurve(pts, bool(branched), curve, float(residual))


def _circle(center, r):
    return lambda t: center + r * np.exp(2j * np.pi * np.asarray(t))


def _contour(path):
    segs = path.segments
    S = len(segs)

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.minimum((t * S).astype(int), S - 1)
        u = t * S - k
        out = np.empty(len(t), complex)
        for i in range(S):
            sel = k == i
            if np.any(sel):
                out[sel] = segs[i].point(u[sel])
        return out

    return f


def _laurent_minus_one(values, zeta):
    """Coefficient of ``zeta^-1`` from equispaced samples on a circle."""
    return complex(np.mean(values * zeta))


def empirical_periodicity(family, fitted: EmpiricalSpectralCurve, basepoint=0.0, tol=1e-12, n0=64, jobs=1):
    """Periods of ``d log mu`` and ``d log nu`` and the lattice they imply.

    Loops: the primitive homology loops of the fitted curve, a small circle
    around each branch point, circles around the origin separating the
    moduli of the branch points, and small circles around 0 and infinity
    (whose periods are the residues there, times ``2 pi i``).  ``tau`` is
    recovered as the ratio of the leading principal-part coefficients of
    ``log nu`` and ``log mu`` at ``lam = 0``.
    """
    bps = [complex(b) for b in fitted.branch_points]
    mods = sorted({abs(b) for b in bps})
    rmin = min(mods) if mods else 1.0
    rho0 = 0.5 * rmin
    loops = {}
    if fitted.curve.genus >= 1:
        hom = build_homology(fitted.curve)
        for i, lp in enumerate(hom.loops):
            loops[f"loop{i}"] = _contour(lp)
    for i, b in enumerate(bps):
        sep = min([abs(b - c) for c in bps if c != b] + [abs(b), rmin])
        loops[f"branch{i}"] = _circle(b, 0.25 * sep)
    for i, (r0, r1) in enumerate(zip(mods[:-1], mods[1:])):
        loops[f"ring{i}"] = _circle(0.0, np.sqrt(r0 * r1))
    loops["zero"] = _circle(0.0, rho0)
    loops["infinity"] = _circle(0.0, 1.0 / rho0)

    conts = dict(zip(loops, parallel_map(
        lambda f: continue_eigenvalue(family, f, n0, basepoint, tol), list(loops.values()), jobs
    )))
    periods = {}
    worst = 0.0
    for name, c in conts.items():
        nm, rm = lattice_residual(c.period_mu, TWO_PI_I)
        nn, rn = lattice_residual(c.period_nu, TWO_PI_I)
        periods[name] = {"mu": [nm, rm], "nu": [nn, rn], "turns": c.turns}
        worst = max(worst, rm, rn)
    residues = {k: abs(conts[k].period_mu) / (2 * np.pi) for k in ("zero", "infinity")}

    # principal parts at 0 on a fine circle (in sqrt(lam) when 0 branches)
    N = 256
    c = continue_eigenvalue(family, _circle(0.0, rho0), N, basepoint, tol)
    # bisection only inserts points, so the uniform samples are still there
    keep = np.isclose(c.t * N, np.rint(c.t * N), rtol=0, atol=1e-9)[:-1]
    zeta = np.exp(2j * np.pi * c.t[:-1][keep] / c.turns) * rho0 ** (1.0 / c.turns)
    pm = _laurent_minus_one(c.log_mu[:-1][keep], zeta)
    pn = _laurent_minus_one(c.log_nu[:-1][keep], zeta)
    tau = pn / pm
    return {
        "periods": periods,
        "max_lattice_residual": float(worst),
        "residues": residues,
        "tau": [tau.real, tau.imag],
        "tau_error": float(abs(tau - family.tau)),
    }
