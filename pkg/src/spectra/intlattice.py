"""Small exact integer-matrix routines for homology bookkeeping."""

from __future__ import annotations

import numpy as np


def _as_int(M):
    M = np.asarray(M)
    R = np.rint(M).astype(np.int64)
    if np.any(np.abs(M - R) > 1e-6):
        raise ValueError("matrix is not integral")
    return R


def column_reduce(M):
    """Unimodular ``U`` with ``M @ U`` in column echelon form.

    Returns ``(H, U, rank)`` where the first ``rank`` columns of ``H = M @ U``
    are independent and the remaining ones vanish.
    """
    H = _as_int(M).copy()
    rows, cols = H.shape
    U = np.eye(cols, dtype=np.int64)
    piv = 0
    for r in range(rows):
        if piv >= cols:
            break
        while True:
            nz = [c for c in range(piv, cols) if H[r, c] != 0]
            if not nz:
                break
            k = min(nz, key=lambda c: abs(H[r, c]))
            H[:, [piv, k]] = H[:, [k, piv]]
            U[:, [piv, k]] = U[:, [k, piv]]
            done = True
            for c in range(piv + 1, cols):
                q = H[r, c] // H[r, piv]
                if q:
                    H[:, c] -= q * H[:, piv]
                    U[:, c] -= q * U[:, piv]
                if H[r, c] != 0:
                    done = False
            if done:
                piv += 1
                break
    return H, U, piv


def integer_kernel(M):
    """Basis (as columns) of the saturated integer kernel of ``M``."""
    _, U, rank = column_reduce(M)
    return U[:, rank:]


def int_inverse(M):
    M = _as_int(M)
    inv = np.linalg.inv(M)
    out = _as_int(inv)
    if not np.array_equal(M @ out, np.eye(len(M), dtype=np.int64)):
        raise ValueError("matrix is not unimodular")
    return out


def complete_lagrangian(L, omega):
    """Extend a primitive Lagrangian basis ``L`` (columns) to a symplectic basis.

    ``omega`` is the integral symplectic form.  Returns ``Y`` (columns) with
    ``L.T @ omega @ Y = I`` and ``Y.T @ omega @ Y = 0``.
    """
    L = _as_int(L)
    omega = _as_int(omega)
    g = L.shape[1]
    _, U, rank = column_reduce(L.T)
    if rank != g:
        raise ValueError("Lagrangian basis is rank deficient")
    Z = int_inverse(U.T)
    Y = Z[:, g:]
    Mx = L.T @ omega @ Y
    Y = Y @ int_inverse(Mx)
    W = Y.T @ omega @ Y
    S = np.triu(W, 1)
    Y = Y + L @ S
    if not np.array_equal(L.T @ omega @ Y, np.eye(g, dtype=np.int64)):
        raise ValueError("completion failed: L is not primitive")
    if np.any(Y.T @ omega @ Y):
        raise ValueError("completion failed to be isotropic")
    return Y
