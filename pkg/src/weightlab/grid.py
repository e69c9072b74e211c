"""Dyadic grid on [-L, L] and contiguous cell ranges.

The domain is the truncated interval [-L, L] split into N = 2**k uniform
half-open cells; cell i covers [-L + i*dx, -L + (i+1)*dx) and is sampled at
its midpoint.  Contiguous cell ranges play the role of the balls of the
continuous theory, so every supremum over balls becomes a finite sweep over
(start, length) pairs evaluated through prefix sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ConfigurationError

MIN_RESOLUTION_EXPONENT = 3
MAX_RESOLUTION_EXPONENT = 20


@dataclass(frozen=True)
class Grid:
    """Uniform dyadic grid of 2**resolution_exponent cells on [-L, L]."""

    half_width: float
    resolution_exponent: int

    @property
    def n_cells(self) -> int:
        return 1 << self.resolution_exponent

    @property
    def cell_width(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    def midpoints(self) -> np.ndarray:
        dx = self.cell_width
        return -self.half_width + dx * (np.arange(self.n_cells) + 0.5)


@dataclass(frozen=True)
class Interval:
    """Contiguous range of cells [start_cell, start_cell + length_cells)."""

    start_cell: int
    length_cells: int

    @property
    def end_cell(self) -> int:
        return self.start_cell + self.length_cells

    def validate(self, n_cells: int) -> None:
        if self.length_cells <= 0:
            raise BoundsError(f"interval length must be positive, got {self.length_cells}")
        if self.start_cell < 0 or self.end_cell > n_cells:
            raise BoundsError(
                f"interval [{self.start_cell}, {self.end_cell}) outside grid of {n_cells} cells"
            )


def make_grid(half_width: float, resolution_exponent: int) -> Grid:
    """Build the grid, rejecting out-of-range parameters."""
    if not (MIN_RESOLUTION_EXPONENT <= resolution_exponent <= MAX_RESOLUTION_EXPONENT):
        raise ConfigurationError(
            f"resolution exponent must lie in [{MIN_RESOLUTION_EXPONENT}, "
            f"{MAX_RESOLUTION_EXPONENT}], got {resolution_exponent}"
        )
    if not (half_width > 0.0 and np.isfinite(half_width)):
        raise ConfigurationError(f"half width must be positive and finite, got {half_width}")
    return Grid(float(half_width), int(resolution_exponent))


def prefix_sums(f: np.ndarray) -> np.ndarray:
    """Prefix sums P with P[0] = 0, P[i] = f[0] + ... + f[i-1]."""
    out = np.empty(f.size + 1, dtype=np.float64)
    out[0] = 0.0
    np.cumsum(f, out=out[1:])
    return out


def average(f: np.ndarray, interval: Interval) -> float:
    """Arithmetic mean of the samples of f over the interval.

    Uses the same prefix-sum evaluation as the interval sweeps so that
    single-interval queries agree bit-for-bit with sweep results.
    """
    f = np.asarray(f, dtype=np.float64)
    interval.validate(f.size)
    pref = prefix_sums(f)
    return (pref[interval.end_cell] - pref[interval.start_cell]) / interval.length_cells
