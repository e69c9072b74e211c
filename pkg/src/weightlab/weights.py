"""Weights on the dyadic grid and their scalar constants.

A weight is a family of strictly positive sample vectors (one per fiber)
over a shared grid; the essential supremum over the fiber index is the
max over the finite fiber list.  All constants are suprema over the
grid-aligned cell ranges, computed exactly by prefix-sum sweeps:

* ``ap_constant``    -- sup of avg(w) * avg(w**(-1/(p-1)))**(p-1); for
  p = 1 the pointwise form sup M w / w at cell midpoints.
* ``fujii_wilson``   -- sup over B of (integral of M[chi_B w] over B)
  divided by w(B), with the uncentered grid maximal operator.
* ``doubling_constant`` -- sup of w(2B)/w(B), 2B truncated to the domain.
* ``reverse_holder`` / ``rh_exponent`` -- the reverse Hoelder functional
  and the largest exponent keeping it under a cap (bisection).
* ``f_class_constant`` -- membership constant for the two-A1-factor
  classes via the reduction w = (w**(1/alpha))**alpha for alpha > 0 and
  the A1 constant of w**(-1/beta) for alpha = 0.

Restricted-domain caveat: ranges near the boundary are truncated, so all
constants are the [-L, L] versions; cross-checks always compare values
computed on the same footing.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import _sweeps
from .errors import DomainError, InvariantViolation, ParseError
from .grid import Grid, prefix_sums

RH_SEARCH_CAP = 256.0  # beyond this the exponent is reported as unbounded


@dataclass(frozen=True, eq=False)
class Weight:
    """Strictly positive samples, one row per fiber, on a shared grid."""

    grid: Grid
    samples: np.ndarray  # shape (fibers, n_cells)

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[1] != self.grid.n_cells:
            raise InvariantViolation(
                f"samples must have shape (F, {self.grid.n_cells}), got {arr.shape}"
            )
        if arr.shape[0] < 1:
            raise InvariantViolation("at least one fiber required")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise InvariantViolation("weight samples must be strictly positive and finite")
        object.__setattr__(self, "samples", arr)

    @property
    def fiber_count(self) -> int:
        return self.samples.shape[0]

    def fiber(self, index: int = 0) -> np.ndarray:
        return self.samples[index]

    def power(self, gamma: float) -> "Weight":
        return Weight(self.grid, self.samples**gamma)

    def inverse(self) -> "Weight":
        return Weight(self.grid, 1.0 / self.samples)

    @classmethod
    def from_vector(cls, grid: Grid, vec: np.ndarray) -> "Weight":
        return cls(grid, np.asarray(vec, dtype=np.float64)[None, :])


_DSL_RE = re.compile(r"^(?P<kind>const|power|step):(?P<rest>.*)$")


def weight_from_dsl(spec: str, grid: Grid) -> Weight:
    """Build a weight from a DSL string.

    Accepted forms: ``const:c=<v>``, ``power:a=<v>`` (w(x) = |x|**a at
    cell midpoints), ``step:K=<v>`` (1 on [-L, 0), K on [0, L]), and
    ``csv:<path>`` (one column per fiber, N rows).
    """
    if spec.startswith("csv:"):
        path = spec[4:]
        try:
            data = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ParseError(f"cannot read weight csv {path!r}: {exc}") from exc
        if data.shape[0] != grid.n_cells:
            raise ParseError(
                f"csv weight has {data.shape[0]} rows, grid has {grid.n_cells} cells"
            )
        return Weight(grid, data.T)

    m = _DSL_RE.match(spec)
    if m is None:
        raise ParseError(f"unrecognized weight spec {spec!r}")
    kind, rest = m.group("kind"), m.group("rest")
    key = {"const": "c", "power": "a", "step": "K"}[kind]
    m2 = re.match(rf"^{key}=(?P<val>[-+0-9.eE]+)$", rest)
    if m2 is None:
        raise ParseError(f"expected {kind}:{key}=<value>, got {spec!r}")
    val = float(m2.group("val"))

    n = grid.n_cells
    if kind == "const":
        if val <= 0:
            raise ParseError("const weight needs c > 0")
        return Weight(grid, np.full((1, n), val))
    if kind == "step":
        if val <= 0:
            raise ParseError("step weight needs K > 0")
        row = np.ones(n)
        row[n // 2 :] = val
        return Weight(grid, row[None, :])
    # power: midpoints never hit 0, so any exponent gives finite samples
    return Weight(grid, np.abs(grid.midpoints())[None, :] ** val)


def _fiber_prefixes(w: Weight):
    for i in range(w.fiber_count):
        row = w.samples[i]
        yield i, row, prefix_sums(row)


def ap_constant(w: Weight, p: float) -> float:
    """Muckenhoupt constant over all fibers and grid-aligned intervals.

    p > 1: sup of avg(w) * avg(w**(-1/(p-1)))**(p-1).
    p = 1: sup over cells of (M w) / w, M the uncentered maximal operator.
    """
    if p < 1.0:
        raise DomainError(f"ap_constant needs p >= 1, got {p}")
    if p == 1.0:
        from .operators import maximal

        best = -np.inf
        for i in range(w.fiber_count):
            row = w.samples[i]
            best = max(best, float(np.max(maximal(row) / row)))
        return best
    pm1 = p - 1.0
    best = -np.inf
    for i in range(w.fiber_count):
        row = w.samples[i]
        sigma = row ** (-1.0 / pm1)
        val, _, _ = _sweeps.ap_sweep(prefix_sums(row), prefix_sums(sigma), pm1)
        best = max(best, val)
    return best


def worst_ap_interval(w: Weight, p: float, fiber: int = 0):
    """The (start, length) attaining the A_p supremum on one fiber (p > 1)."""
    if p <= 1.0:
        raise DomainError("worst_ap_interval needs p > 1")
    row = w.samples[fiber]
    sigma = row ** (-1.0 / (p - 1.0))
    val, s, l = _sweeps.ap_sweep(prefix_sums(row), prefix_sums(sigma), p - 1.0)
    return val, int(s), int(l)


def fujii_wilson(w: Weight) -> float:
    """Fujii-Wilson functional: sup_B (sum_B M[chi_B w]) / w(B)."""
    best = -np.inf
    for i in range(w.fiber_count):
        row = w.samples[i]
        best = max(best, _sweeps.fw_window_sweep(prefix_sums(row), row))
    return best


def doubling_constant(w: Weight) -> float:
    """sup over fibers and intervals B of w(2B)/w(B), truncated at the ends."""
    best = -np.inf
    for _, _, pref in _fiber_prefixes(w):
        best = max(best, _sweeps.doubling_sweep(pref))
    return best


def reverse_holder(w: Weight, r: float) -> float:
    """sup of (avg w**r)**(1/r) / avg(w); inf when w**r overflows."""
    if r <= 1.0:
        raise DomainError(f"reverse_holder needs r > 1, got {r}")
    best = -np.inf
    for i in range(w.fiber_count):
        row = w.samples[i]
        with np.errstate(over="ignore"):
            rowr = row**r
        if not np.all(np.isfinite(rowr)):
            return math.inf
        val = _sweeps.rh_sweep(prefix_sums(rowr), prefix_sums(row), 1.0 / r)
        if not np.isfinite(val):
            return math.inf
        best = max(best, val)
    return best


def rh_exponent(w: Weight, cap: float, tol: float = 1e-4) -> float:
    """Largest r with reverse_holder(w, r) <= cap, by bisection.

    The functional is nondecreasing in r (power-mean monotonicity), so
    bisection to absolute tolerance ``tol`` in r is valid.  Returns inf
    when even r = RH_SEARCH_CAP stays under the cap.
    """
    if cap <= 1.0:
        raise DomainError(f"rh_exponent needs cap > 1, got {cap}")
    lo = 1.0
    hi = 2.0
    while hi <= RH_SEARCH_CAP and reverse_holder(w, hi) <= cap:
        lo = hi
        hi *= 2.0
    if hi > RH_SEARCH_CAP:
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if reverse_holder(w, mid) <= cap:
            lo = mid
        else:
            hi = mid
    return lo


def f_class_constant(w: Weight, alpha: float, beta: float) -> float:
    """Constant of the two-A1-factor class with indices (alpha, beta).

    alpha > 0 reduces to the A_{beta/alpha + 1} constant of w**(1/alpha);
    alpha = 0 to the A_1 constant of w**(-1/beta).
    """
    alpha = float(alpha)
    beta = float(beta)
    if alpha < 0 or beta < 0:
        raise DomainError("indices must be nonnegative")
    if alpha == 0 and beta == 0:
        raise DomainError("indices (0, 0) do not define a class")
    if alpha > 0:
        return ap_constant(w.power(1.0 / alpha), beta / alpha + 1.0)
    return ap_constant(w.power(-1.0 / beta), 1.0)


@dataclass
class ConstantsReport:
    """Bundle of the scalar constants of one weight."""

    ap: dict = field(default_factory=dict)  # p -> value
    a1: float = math.nan
    fujii_wilson: float = math.nan
    doubling: float = math.nan
    doubling_inverse: float = math.nan
    rh: dict = field(default_factory=dict)  # r -> value
    rh_exponent: float = math.nan

    def __post_init__(self):
        for name, v in self.iter_values():
            if np.isfinite(v) and v < 1.0 - 1e-9:
                raise InvariantViolation(f"constant {name} = {v} is below 1")

    def iter_values(self):
        for p, v in self.ap.items():
            yield f"ap_{p:g}", v
        yield "a1", self.a1
        yield "fw", self.fujii_wilson
        yield "doubling", self.doubling
        yield "doubling_inverse", self.doubling_inverse
        for r, v in self.rh.items():
            yield f"rh_{r:g}", v
        yield "rh_exp", self.rh_exponent

    def to_flat_dict(self, rh_key_r: float | None = None) -> dict:
        """Flat JSON-friendly mapping; the RH value keys as plain ``rh_r``."""
        out = {}
        for p, v in sorted(self.ap.items()):
            out[f"ap_{p:g}"] = v
        out["a1"] = self.a1
        out["fw"] = self.fujii_wilson
        out["doubling"] = self.doubling
        if rh_key_r is not None and rh_key_r in self.rh:
            out["rh_r"] = self.rh[rh_key_r]
        else:
            for r, v in sorted(self.rh.items()):
                out[f"rh_{r:g}"] = v
        out["rh_exp"] = None if math.isinf(self.rh_exponent) else self.rh_exponent
        return out


def constants_report(
    w: Weight,
    ps=(2.0,),
    rh_rs=(2.0,),
    rh_cap: float = 4.0,
) -> ConstantsReport:
    """Compute the full constants bundle for one weight."""
    return ConstantsReport(
        ap={float(p): ap_constant(w, float(p)) for p in ps},
        a1=ap_constant(w, 1.0),
        fujii_wilson=fujii_wilson(w),
        doubling=doubling_constant(w),
        doubling_inverse=doubling_constant(w.inverse()),
        rh={float(r): reverse_holder(w, float(r)) for r in rh_rs},
        rh_exponent=rh_exponent(w, rh_cap),
    )
