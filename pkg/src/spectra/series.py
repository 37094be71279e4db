"""Truncated Laurent series ``sum_k c[k] z^(val + k)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Laurent:
    val: int
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=complex))

    @property
    def order(self):
        """Exponent of the first dropped term."""
        return self.val + len(self.c)

    def coeff(self, k):
        i = k - self.val
        if 0 <= i < len(self.c):
            return complex(self.c[i])
        if i >= len(self.c):
            raise IndexError(f"coefficient z^{k} beyond truncation order {self.order}")
        return 0j

    def truncate(self, order):
        n = max(0, order - self.val)
        c = self.c[:n]
        if len(c) < n:
            c = np.concatenate([c, np.zeros(n - len(c), dtype=complex)])
        return Laurent(self.val, c)

    def __neg__(self):
        return Laurent(self.val, -self.c)

    def __mul__(self, other):
        if not isinstance(other, Laurent):
            return Laurent(self.val, self.c * complex(other))
        n = min(len(self.c), len(other.c))
        c = np.convolve(self.c[:n], other.c[:n])[:n]
        return Laurent(self.val + other.val, c)

    __rmul__ = __mul__

    def __add__(self, other):
        lo = min(self.val, other.val)
        hi = min(self.order, other.order)
        c = np.zeros(hi - lo, dtype=complex)
        for s in (self, other):
            seg = s.c[: hi - s.val]
            c[s.val - lo : s.val - lo + len(seg)] += seg
        return Laurent(lo, c)

    def shift(self, k):
        return Laurent(self.val + k, self.c)

    def inverse(self):
        nz = np.nonzero(np.abs(self.c) > 0)[0]
        if len(nz) == 0:
            raise ZeroDivisionError("series is zero to truncation order")
        lead = nz[0]
        a = self.c[lead:]
        n = len(a)
        b = np.zeros(n, dtype=complex)
        b[0] = 1.0 / a[0]
        for k in range(1, n):
            b[k] = -np.dot(a[1 : k + 1], b[k - 1 :: -1][:k]) / a[0]
        return Laurent(-(self.val + lead), b)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for k in range(len(self.c) - 1, -1, -1):
            out = out * z + self.c[k]
        return out * z**self.val

    def derivative(self):
        k = np.arange(self.val, self.order)
        return Laurent(self.val - 1, self.c * k)


def sqrt_series(a, n, root0):
    """First ``n`` Taylor coefficients of ``s`` with ``s^2 = a``, ``s[0] = root0``."""
    a = np.asarray(a, dtype=complex)
    a = np.concatenate([a, np.zeros(max(0, n - len(a)), dtype=complex)])[:n]
    s = np.zeros(n, dtype=complex)
    s[0] = root0
    for k in range(1, n):
        s[k] = (a[k] - np.dot(s[1:k], s[k - 1 : 0 : -1])) / (2 * root0)
    return s


def poly_taylor_shift(coeffs, x0):
    """Coefficients of ``p(x0 + z)`` in ``z`` for ``p`` given lowest degree first."""
    c = np.asarray(coeffs, dtype=complex)
    n = len(c)
    out = np.zeros(n, dtype=complex)
    # repeated synthetic division
    work = c.copy()
    for k in range(n):
        acc = 0j
        tmp = np.zeros(n - k, dtype=complex)
        for j in range(n - k - 1, -1, -1):
            acc = acc * x0 + work[j]
            tmp[j] = acc
        out[k] = tmp[0]
        work = tmp[1:]
    return out
