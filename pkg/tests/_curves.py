"""Seeded random validated curves shared by the test modules."""

import numpy as np

from spectra.curve import curve_from_inner_points


def random_inner(rng, genus, branched=False, min_gap=0.45):
    """Inner branch points with separated arguments, away from 0 and pi."""
    n = genus if branched else genus + 1
    while True:
        th = rng.uniform(-np.pi, np.pi, n)
        ths = np.sort(np.r_[th, 0.0, np.pi, -np.pi])
        if np.min(np.diff(ths)) < min_gap:
            continue
        r = rng.uniform(0.25, 0.7, n)
        return list(r * np.exp(1j * th))


def random_curve(rng, genus, branched=False):
    return curve_from_inner_points(random_inner(rng, genus, branched), branched=branched)


def random_data(rng):
    c = rng.uniform(0.3, 1.5) * np.exp(1j * rng.uniform(-np.pi, np.pi))
    tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.6, 1.6))
    return c, tau


def curve_set(seed=2024):
    """Ten genus-1 and five genus-2 curves, alternating branched and unbranched."""
    rng = np.random.default_rng(seed)
    out = []
    for k, g in enumerate([1] * 10 + [2] * 5):
        branched = bool(k % 2)
        curve = random_curve(rng, g, branched)
        c, tau = random_data(rng)
        out.append((curve, c, tau))
    return out
