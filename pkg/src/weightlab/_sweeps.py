"""Compiled interval-sweep kernels.

Every weight constant is a supremum over the O(N^2) grid-aligned cell
ranges.  The kernels below run those sweeps as tight loops over prefix
sums (njit, disk-cached).  All reductions are exact max/min, so results
are deterministic regardless of evaluation order.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def ap_sweep(pw, psigma, pm1):
    """Max over intervals of avg(w) * avg(sigma)**pm1, with argmax.

    pw, psigma are prefix sums of w and sigma = w**(-1/(p-1)); pm1 = p - 1.
    Returns (value, start, length).
    """
    n = pw.shape[0] - 1
    best = -1.0
    bs = 0
    bl = 1
    for l in range(1, n + 1):
        inv = 1.0 / l
        for s in range(0, n - l + 1):
            a = (pw[s + l] - pw[s]) * inv
            b = (psigma[s + l] - psigma[s]) * inv
            v = a * b ** pm1
            if v > best:
                best = v
                bs = s
                bl = l
    return best, bs, bl


@njit(cache=True)
def rh_sweep(pwr, pw, inv_r):
    """Max over intervals of (avg w**r)**(1/r) / avg(w); inv_r = 1/r."""
    n = pw.shape[0] - 1
    best = -1.0
    for l in range(1, n + 1):
        inv = 1.0 / l
        for s in range(0, n - l + 1):
            num = ((pwr[s + l] - pwr[s]) * inv) ** inv_r
            den = (pw[s + l] - pw[s]) * inv
            v = num / den
            if v > best:
                best = v
    return best


@njit(cache=True)
def doubling_sweep(pw):
    """Max over intervals B of w(2B)/w(B), 2B truncated to the domain.

    2B extends B by floor(l/2) cells left and ceil(l/2) cells right.
    """
    n = pw.shape[0] - 1
    best = 1.0
    for l in range(1, n + 1):
        le = l // 2
        re = l - le
        for s in range(0, n - l + 1):
            e = s + l
            lo = s - le
            if lo < 0:
                lo = 0
            hi = e + re
            if hi > n:
                hi = n
            v = (pw[hi] - pw[lo]) / (pw[e] - pw[s])
            if v > best:
                best = v
    return best


@njit(cache=True)
def fw_window_sweep(pw, w):
    """Fujii-Wilson sweep: max over windows B of sum_B M_B w / w(B).

    M_B is the uncentered maximal operator restricted to subintervals of
    B; for x in B it equals M[chi_B w](x) because extending an interval
    past B only dilutes the average.  The window [a, b) grows one cell at
    a time; appending cell b adds exactly the intervals ending at b+1,
    whose averages are the slopes (pw[b+1]-pw[s])/(b+1-s), s <= x, so a
    running slope max updates M in place.
    """
    n = w.shape[0]
    best = 1.0
    m = np.empty(n)
    for a in range(n):
        for i in range(n - a):
            m[i] = 0.0
        for b in range(a, n):
            e = b + 1
            pe = pw[e]
            g = -1.0e300
            num = 0.0
            for x in range(a, e):
                sl = (pe - pw[x]) / (e - x)
                if sl > g:
                    g = sl
                i = x - a
                if g > m[i]:
                    m[i] = g
                num += m[i]
            v = num / (pe - pw[a])
            if v > best:
                best = v
    return best


@njit(cache=True)
def shifted_pair_sweep(pw, pwinv, off_half_num, off_half_den):
    """Worst shifted-interval product, eq-style: avg_{B'}(w) * avg_B(1/w).

    For each interval B = [s, s+l) the shifted copies are B +- off cells
    with off = round(shift * l / 2) = round(off_half_num * l /
    off_half_den); B is admissible when both copies fit in the domain.
    Returns (max product, start, length, sign) with sign in {-1, +1}.
    """
    n = pw.shape[0] - 1
    best = -1.0
    bs = -1
    bl = 0
    bsign = 0
    for l in range(1, n + 1):
        off = int(round(off_half_num * l / (2.0 * off_half_den)))
        if off < l:
            continue
        inv = 1.0 / l
        smin = off
        smax = n - l - off
        for s in range(smin, smax + 1):
            e = s + l
            avg_inv = (pwinv[e] - pwinv[s]) * inv
            right = (pw[e + off] - pw[s + off]) * inv * avg_inv
            left = (pw[e - off] - pw[s - off]) * inv * avg_inv
            if right > best:
                best = right
                bs = s
                bl = l
                bsign = 1
            if left > best:
                best = left
                bs = s
                bl = l
                bsign = -1
    return best, bs, bl, bsign


@njit(cache=True)
def mbe_sweep(pw, pwinv, off_half_num, off_half_den, half):
    """Max over B of w(B')/w(B) with B' the shifted evaluation set.

    Used to instantiate the lower-bound chain with f = chi_B: the check
    2 m^2 w(B) >= c^2 w(B') must hold for every admissible B.  When
    ``half`` is nonzero B' is the inner half of each shifted copy (the
    cells within shift*r of the center of B), matching the nondegeneracy
    evaluation geometry; otherwise the full copies.
    Returns the max of w(B')/w(B).
    """
    n = pw.shape[0] - 1
    best = -1.0
    for l in range(2, n + 1, 2):
        off = int(round(off_half_num * l / (2.0 * off_half_den)))
        if off < l:
            continue
        smin = off
        smax = n - l - off
        for s in range(smin, smax + 1):
            e = s + l
            wb = pw[e] - pw[s]
            if half != 0:
                h = l // 2
                right = pw[s + off + h] - pw[s + off]
                left = pw[e - off] - pw[e - off - h]
            else:
                right = pw[e + off] - pw[s + off]
                left = pw[e - off] - pw[s - off]
            v = right / wb
            if left / wb > v:
                v = left / wb
            if v > best:
                best = v
    return best


def warmup():
    """Compile (or load from disk cache) every kernel on toy inputs."""
    w = np.array([1.0, 2.0, 1.0, 3.0, 1.0, 2.0, 1.0, 2.0])
    pw = np.concatenate((np.zeros(1), np.cumsum(w)))
    pinv = np.concatenate((np.zeros(1), np.cumsum(1.0 / w)))
    ap_sweep(pw, pinv, 1.0)
    rh_sweep(pw, pw, 0.5)
    doubling_sweep(pw)
    fw_window_sweep(pw, w)
    shifted_pair_sweep(pw, pinv, 3.0, 1.0)
    mbe_sweep(pw, pinv, 3.0, 1.0, 1)
