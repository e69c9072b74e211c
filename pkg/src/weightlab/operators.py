"""Discrete operators on grid sample vectors.

* ``maximal`` -- exact uncentered Hardy-Littlewood maximal operator over
  grid-aligned intervals, via a length sweep of sliding-window maxima.
* ``hilbert`` -- principal-value midpoint rule for the Hilbert transform,
  (Hf)(x_i) = (1/pi) sum_{j != i} f(x_j) / (x_i - x_j) * dx, which in cell
  units is (1/pi) sum f_j / (i - j); direct convolution at small sizes and
  an FFT convolution (identical to 1e-13) above the cutoff.
* ``op_norm_weighted`` -- operator norm on the space with squared norm
  sum |f_i|^2 w_i dx, by power iteration on the symmetrized composition.
* ``nondegeneracy_constant`` -- empirical lower-bound constant: the min of
  |Tf(x)| / avg_B(f) over a ladder of intervals B, a nonnegative test
  family supported on B, and evaluation cells x in the inner halves of the
  shifted copies of B (the cells within shift*r of the center of B, where
  the kernel bound |Hf| >= avg/(2 pi) holds for every nonnegative f).
* ``verify_shift_ap2`` -- instantiates the shifted-interval product bound
  (avg_{B'} w)(avg_B w^{-1}) <= 2 c^{-2} m^2 on every admissible interval
  and the A_2-vs-norm estimate with a doubling-derived factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import fftconvolve

from . import _sweeps
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    InvariantViolation,
    PreconditionError,
)
from .grid import Grid, Interval, prefix_sums

_HILBERT_DIRECT_CUTOFF = 1024
_NONDEG_MAX_LENGTH = 256  # ratios are scale-invariant up to O(1/l) midpoint effects
_NONDEG_SEED = 0xD1E5
_FAMILY_SEED = 0xA11CE


def maximal(f: np.ndarray) -> np.ndarray:
    """Uncentered maximal function: max of averages over intervals containing the cell."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise DomainError("maximal operator needs finite nonnegative input")
    n = f.size
    pref = prefix_sums(f)
    out = f.copy()  # length-1 windows
    buf = np.empty(n)
    scratch = np.empty(n)
    for l in range(2, n + 1):
        nwin = n - l + 1
        np.subtract(pref[l:], pref[:-l], out=buf[:nwin])
        buf[:nwin] /= l
        buf[nwin:] = -np.inf
        # trailing window max: scratch[x] = max(buf[x-l+1 .. x])
        maximum_filter1d(
            buf, size=l, mode="constant", cval=-np.inf, origin=l - 1 - l // 2, output=scratch
        )
        np.maximum(out, scratch, out=out)
    return out


def _hilbert_kernel(n: int) -> np.ndarray:
    k = np.zeros(2 * n - 1)
    m = np.arange(1, n)
    k[n - 1 + m] = 1.0 / m
    k[n - 1 - m] = -1.0 / m
    return k


def hilbert(f: np.ndarray, method: str = "auto") -> np.ndarray:
    """Principal-value Hilbert transform by the midpoint rule (diagonal skipped)."""
    f = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise DomainError("hilbert needs finite input")
    n = f.size
    k = _hilbert_kernel(n)
    if method == "direct" or (method == "auto" and n <= _HILBERT_DIRECT_CUTOFF):
        conv = np.convolve(f, k)
    elif method in ("auto", "fft"):
        conv = fftconvolve(f, k)
    else:
        raise DomainError(f"unknown hilbert method {method!r}")
    return conv[n - 1 : 2 * n - 1] / math.pi


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """An operator on sample vectors: hilbert, maximal, identity, or custom kernel."""

    kind: str
    grid: Grid
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("hilbert", "maximal", "identity", "custom"):
            raise ConfigurationError(f"unknown operator kind {self.kind!r}")
        if self.kind == "custom":
            m = self.matrix
            if m is None or m.shape != (self.grid.n_cells, self.grid.n_cells):
                raise InvariantViolation("custom operator needs an (N, N) matrix")

    @classmethod
    def hilbert_op(cls, grid: Grid) -> "DiscreteOperator":
        return cls("hilbert", grid)

    @classmethod
    def maximal_op(cls, grid: Grid) -> "DiscreteOperator":
        return cls("maximal", grid)

    @classmethod
    def identity(cls, grid: Grid) -> "DiscreteOperator":
        return cls("identity", grid)

    @classmethod
    def from_kernel(cls, grid: Grid, kernel, require_antisymmetric: bool = True):
        """Custom singular kernel: (Tf)(x_i) = sum_{j != i} K(x_i, x_j) f_j dx."""
        x = grid.midpoints()
        with np.errstate(divide="ignore", invalid="ignore"):
            mat = kernel(x[:, None], x[None, :]) * grid.cell_width
        np.fill_diagonal(mat, 0.0)
        if not np.all(np.isfinite(mat)):
            raise InvariantViolation("custom kernel produced non-finite off-diagonal entries")
        if require_antisymmetric and not np.allclose(mat, -mat.T, atol=1e-12):
            raise InvariantViolation("custom kernel matrix is not antisymmetric")
        return cls("custom", grid, mat)

    @property
    def is_linear(self) -> bool:
        return self.kind != "maximal"

    def apply(self, f: np.ndarray) -> np.ndarray:
        if self.kind == "hilbert":
            return hilbert(f)
        if self.kind == "maximal":
            return maximal(f)
        if self.kind == "identity":
            return np.asarray(f, dtype=np.float64).copy()
        return self.matrix @ np.asarray(f, dtype=np.float64)

    def apply_transpose(self, f: np.ndarray) -> np.ndarray:
        if self.kind == "hilbert":
            return -hilbert(f)  # antisymmetric kernel
        if self.kind == "identity":
            return np.asarray(f, dtype=np.float64).copy()
        if self.kind == "custom":
            return self.matrix.T @ np.asarray(f, dtype=np.float64)
        raise DomainError("maximal operator is nonlinear; no transpose")

    def kernel_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray | None:
        """Dense kernel block K[rows, cols] (times dx) when cheaply available."""
        if self.kind == "hilbert":
            x = self.grid.midpoints()
            return self.grid.cell_width / (math.pi * (x[rows][:, None] - x[cols][None, :]))
        if self.kind == "custom":
            return self.matrix[np.ix_(rows, cols)]
        return None


@dataclass
class WeightedNormReport:
    """Power-iteration result for a weighted operator norm."""

    norm: float
    iterations: int
    residual: float


def op_norm_weighted(
    T: DiscreteOperator,
    w,
    fiber: int = 0,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> WeightedNormReport:
    """Norm of T on the space with squared norm sum |f|^2 w dx (one fiber).

    Power iteration on S^T S with S = diag(sqrt w) T diag(1/sqrt w);
    deterministic start vector; stops at relative residual <= tol.
    """
    if not T.is_linear:
        raise DomainError("weighted operator norm needs a linear operator")
    wrow = w.fiber(fiber)
    if wrow.size != T.grid.n_cells:
        raise InvariantViolation("weight and operator grids disagree")
    sqw = np.sqrt(wrow)
    n = wrow.size
    v = np.linspace(1.0, 2.0, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    resid = math.inf
    for it in range(1, max_iter + 1):
        sv = sqw * T.apply(v / sqw)
        z = T.apply_transpose(sv * sqw) / sqw
        lam = float(v @ z)
        if lam <= 0.0:
            raise ConvergenceError("power iteration collapsed to the null space")
        resid = float(np.linalg.norm(z - lam * v) / lam)
        if resid <= tol:
            return WeightedNormReport(norm=math.sqrt(lam), iterations=it, residual=resid)
        v = z / np.linalg.norm(z)
    raise ConvergenceError(
        f"power iteration did not reach residual {tol} in {max_iter} iterations",
        last_report=WeightedNormReport(norm=math.sqrt(lam), iterations=max_iter, residual=resid),
    )


def op_norm_weighted_joint(T: DiscreteOperator, w, **kw) -> float:
    """Joint norm over stacked fibers: max of the per-fiber norms (T acts fiberwise)."""
    return max(op_norm_weighted(T, w, fiber=i, **kw).norm for i in range(w.fiber_count))


def lp_norm(f: np.ndarray, p: float, dx: float) -> float:
    return float(np.sum(np.abs(f) ** p * dx) ** (1.0 / p))


def _test_family(grid: Grid, p: float, n_random: int = 8):
    """Adversarial nonnegative profiles for empirical L^p norm estimates."""
    n = grid.n_cells
    fam = []
    for name, pos in (("cell_mid", n // 2), ("cell_left", 0)):
        e = np.zeros(n)
        e[pos] = 1.0
        fam.append((name, e))
    block = np.zeros(n)
    block[: max(1, n // 8)] = 1.0
    fam.append(("block_left", block))
    half = np.zeros(n)
    half[n // 4 : n // 4 + n // 2] = 1.0
    fam.append(("half_centered", half))
    fam.append(("ones", np.ones(n)))
    x = np.abs(grid.midpoints())
    for a in (-0.9 / p, -0.5, 0.5):
        fam.append((f"power_{a:g}", x**a))
    rng = np.random.default_rng(_FAMILY_SEED)
    for i in range(n_random):
        fam.append((f"random_{i}", rng.uniform(0.0, 1.0, n)))
    return fam


@lru_cache(maxsize=64)
def maximal_norm_lp(p: float, grid: Grid) -> float:
    """Empirical upper estimate of the maximal operator norm on L^p.

    Lower estimate over the adversarial family, times a safety factor 1.5;
    cached per (p, grid).
    """
    if p <= 1.0:
        raise DomainError(f"maximal_norm_lp needs p > 1, got {p}")
    dx = grid.cell_width
    best = 0.0
    for _, f in _test_family(grid, p):
        best = max(best, lp_norm(maximal(f), p, dx) / lp_norm(f, p, dx))
    return 1.5 * best


_OP_NORM_MEMO: dict = {}


def op_norm_lp(T: DiscreteOperator, p: float, grid: Grid) -> float:
    """Measured norm of a linear operator on L^p over the grid.

    p = 2 uses power iteration (the exact spectral norm); other p use the
    supremum of ratios over the adversarial test family.  Values for the
    built-in kinds are memoized per (kind, p, grid).
    """
    if not T.is_linear:
        raise DomainError("op_norm_lp needs a linear operator")
    key = (T.kind, p, grid) if T.kind != "custom" else None
    if key in _OP_NORM_MEMO:
        return _OP_NORM_MEMO[key]
    if p == 2.0:
        from .weights import Weight

        best = op_norm_weighted(T, Weight.from_vector(grid, np.ones(grid.n_cells))).norm
    else:
        dx = grid.cell_width
        best = 0.0
        for _, f in _test_family(grid, p):
            best = max(best, lp_norm(T.apply(f), p, dx) / lp_norm(f, p, dx))
    if key is not None:
        _OP_NORM_MEMO[key] = best
    return best


@dataclass
class NondegReport:
    """Empirical lower-bound constant of an operator at a given shift."""

    shift: float
    empirical_c: float
    worst_interval: Interval | None
    worst_test_function: str

    def __post_init__(self):
        if self.empirical_c < 0:
            raise InvariantViolation("empirical constant must be nonnegative")


def _nondeg_eval_cells(a: int, l: int, off: int):
    """Inner halves of the shifted copies of B = [a, a+l): cells within shift*r of center(B)."""
    h = l // 2
    right = np.arange(a + off, a + off + h)
    left = np.arange(a - off + l - h, a - off + l)
    return left, right


def nondegeneracy_constant(
    T: DiscreteOperator,
    shift: float = 3.0,
    n_random: int = 32,
    seed: int = _NONDEG_SEED,
) -> NondegReport:
    """Empirical c: min over intervals, test functions, and shifted cells of |Tf| / avg_B f.

    Sweeps a dyadic ladder of even lengths (stride = length); the test
    family per length is the full indicator plus ``n_random`` seeded
    uniform(0.25, 1.75) profiles, shared across positions.
    """
    if shift < 2.0:
        raise DomainError("shift must be >= 2 so the shifted copies are disjoint from B")
    n = T.grid.n_cells
    best = math.inf
    worst_iv = None
    worst_fn = ""
    any_admissible = False
    l = 2
    while l <= min(n // 4, _NONDEG_MAX_LENGTH):
        off = int(round(shift * l / 2.0))
        if off < l:
            l *= 2
            continue
        starts = range(off, n - l - off + 1, l)
        rng = np.random.default_rng(seed + l)
        profiles = np.empty((l, n_random + 1))
        profiles[:, 0] = 1.0
        profiles[:, 1:] = rng.uniform(0.25, 1.75, (l, n_random))
        avgs = profiles.mean(axis=0)
        names = ["chi_B"] + [f"random[{i}]" for i in range(n_random)]
        for a in starts:
            any_admissible = True
            cols = np.arange(a, a + l)
            left, right = _nondeg_eval_cells(a, l, off)
            rows = np.concatenate((left, right))
            block = T.kernel_block(rows, cols)
            if block is not None:
                vals = np.abs(block @ profiles)
            else:
                vals = np.empty((rows.size, profiles.shape[1]))
                f_full = np.zeros(n)
                for j in range(profiles.shape[1]):
                    f_full[:] = 0.0
                    f_full[cols] = profiles[:, j]
                    vals[:, j] = np.abs(T.apply(f_full))[rows]
            ratios = vals / avgs
            jmin = int(np.argmin(np.min(ratios, axis=0)))
            vmin = float(np.min(ratios[:, jmin]))
            if vmin < best:
                best = vmin
                worst_iv = Interval(a, l)
                worst_fn = names[jmin]
        l *= 2
    if not any_admissible:
        raise ConfigurationError("grid too coarse: no interval admits both shifted copies")
    return NondegReport(shift=shift, empirical_c=best, worst_interval=worst_iv, worst_test_function=worst_fn)


@dataclass
class ShiftAp2Report:
    """Shifted-interval product check plus the A_2-vs-norm-square estimate."""

    c: float
    m: float
    worst_ratio: float
    passed: bool
    ap2: float
    doubling_inverse: float
    comparability_factor: float
    a2_over_cwm2: float
    worst_interval: Interval | None
    shift: float


def verify_shift_ap2(
    T: DiscreteOperator,
    w,
    shift: float = 3.0,
    c_t: float | None = None,
) -> ShiftAp2Report:
    """Check (avg_{B'} w)(avg_B w^{-1}) <= 2 c^{-2} m^2 on every admissible pair.

    Also computes the ratio [w]_{A_2} / (C_w m^2) with C_w derived from the
    doubling constant of w^{-1} and the shift geometry (B' sits inside the
    ceil(log2(1+shift))-fold dyadic dilation of B).  When ``c_t`` is given,
    the report passes only if that ratio stays below it.
    """
    from .weights import ap_constant, doubling_constant

    nd = nondegeneracy_constant(T, shift)
    if nd.empirical_c <= 0.0:
        raise PreconditionError("operator is degenerate at this shift")
    c = nd.empirical_c
    m = op_norm_weighted_joint(T, w)
    rhs = 2.0 * m * m / (c * c)
    worst = -math.inf
    worst_iv = None
    for i in range(w.fiber_count):
        row = w.fiber(i)
        val, s, l, _ = _sweeps.shifted_pair_sweep(
            prefix_sums(row), prefix_sums(1.0 / row), shift, 1.0
        )
        if val > worst:
            worst = val
            worst_iv = Interval(int(s), int(l))
    worst_ratio = worst / rhs
    ap2 = ap_constant(w, 2.0)
    dbl_inv = doubling_constant(w.inverse())
    comparability = dbl_inv ** math.ceil(math.log2(1.0 + shift))
    a2_ratio = ap2 / (comparability * m * m)
    passed = worst_ratio <= 1.0 and (c_t is None or a2_ratio <= c_t)
    return ShiftAp2Report(
        c=c,
        m=m,
        worst_ratio=worst_ratio,
        passed=passed,
        ap2=ap2,
        doubling_inverse=dbl_inv,
        comparability_factor=comparability,
        a2_over_cwm2=a2_ratio,
        worst_interval=worst_iv,
        shift=shift,
    )


def mbe_worst_ratio(w, shift: float = 3.0, fiber: int = 0) -> float:
    """Max over admissible B of w(B')/w(B), B' the inner-half evaluation set.

    Instantiates the chain with f = chi_B: the bound 2 m^2 w(B) >= c^2 w(B')
    holds iff this ratio stays below 2 m^2 / c^2.
    """
    row = w.fiber(fiber)
    pref = prefix_sums(row)
    return _sweeps.mbe_sweep(pref, prefix_sums(1.0 / row), shift, 1.0, 1)
