"""Shared test fixtures: seeded profile generators and brute-force oracles.

The brute-force functions enumerate every interval directly with plain
numpy slicing; they share no code path with the prefix-sum sweeps they
cross-check.
"""

import numpy as np


def piecewise_profile(rng, n, positive=True):
    """Piecewise-constant profile with 2-5 random levels in [0.1, 10]."""
    levels = rng.uniform(0.1, 10.0, rng.integers(2, 6))
    breaks = np.sort(rng.integers(1, n, levels.size - 1))
    out = np.empty(n)
    prev = 0
    for j, b in enumerate(np.append(breaks, n)):
        out[prev:b] = levels[j]
        prev = b
    if not positive:
        out = out * rng.choice([-1.0, 1.0], n)
    return out


def brute_ap(w, p):
    """A_p supremum by direct enumeration of all intervals (p > 1)."""
    n = len(w)
    sigma = w ** (-1.0 / (p - 1.0))
    best = -np.inf
    for s in range(n):
        for e in range(s + 1, n + 1):
            best = max(best, w[s:e].mean() * sigma[s:e].mean() ** (p - 1.0))
    return best


def brute_maximal(f):
    """Uncentered maximal function by direct enumeration."""
    n = len(f)
    out = np.zeros(n)
    for s in range(n):
        for e in range(s + 1, n + 1):
            a = f[s:e].mean()
            out[s:e] = np.maximum(out[s:e], a)
    return out


def brute_fujii_wilson(w):
    """Fujii-Wilson supremum with the window maximal function enumerated."""
    n = len(w)
    best = -np.inf
    for a in range(n):
        for b in range(a + 1, n + 1):
            m = np.zeros(b - a)
            for s in range(a, b):
                for e in range(s + 1, b + 1):
                    avg = w[s:e].mean()
                    m[s - a : e - a] = np.maximum(m[s - a : e - a], avg)
            best = max(best, m.sum() / w[a:b].sum())
    return best
