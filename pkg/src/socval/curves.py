"""Storage device parameters and the discretized marginal-value curve.

A ValueCurve stores the derivative of the storage value function on a
uniform state-of-charge grid.  Lookups round to the nearest grid sample by
default; an opt-in linear mode treats the same samples as a piecewise-linear
function.  Curves are non-increasing in SoC: concavity of the value function
guarantees this analytically, so violations beyond floating-point noise are
treated as bugs and rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ToleranceError

# relative tolerance for repairing float noise in monotonicity
MONOTONE_RTOL = 1e-7


@dataclass(frozen=True)
class StorageSpec:
    """Device parameters.

    power is the energy moved per period at rated power (MWh/period, the
    period duration is normalized away); capacity in MWh; efficiency is the
    one-way efficiency in (0, 1]; discharge_cost in $/MWh covers degradation
    and similar per-MWh operating costs.
    """

    power: float
    capacity: float
    efficiency: float
    discharge_cost: float = 0.0

    def __post_init__(self):
        if self.power < 0.0:
            raise ValueError("power must be >= 0")
        if not self.capacity > 0.0:
            raise ValueError("capacity must be > 0")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if self.discharge_cost < 0.0:
            raise ValueError("discharge_cost must be >= 0")


@dataclass(frozen=True)
class ValueCurve:
    """Marginal value of stored energy ($/MWh) on a uniform SoC grid."""

    capacity: float
    values: np.ndarray
    interp: str = "nearest"

    def __post_init__(self):
        if not self.capacity > 0.0:
            raise ValueError("capacity must be > 0")
        if self.interp not in ("nearest", "linear"):
            raise ValueError(f"unknown interp mode {self.interp!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("need at least two grid samples")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        rises = np.diff(values)
        worst = float(rises.max(initial=0.0))
        tol = MONOTONE_RTOL * max(1.0, float(np.abs(values).max()))
        if worst > tol:
            raise ToleranceError(
                f"curve increases by {worst:g} (tolerance {tol:g}); "
                "marginal value must be non-increasing in SoC"
            )
        if worst > 0.0:
            values = np.minimum.accumulate(values)
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        grid = np.linspace(0.0, self.capacity, values.size)
        grid.setflags(write=False)
        object.__setattr__(self, "_grid", grid)
        ascending = values[::-1].copy()
        ascending.setflags(write=False)
        object.__setattr__(self, "_ascending", ascending)

    def __eq__(self, other):
        if not isinstance(other, ValueCurve):
            return NotImplemented
        return (
            self.capacity == other.capacity
            and self.interp == other.interp
            and np.array_equal(self.values, other.values)
        )

    @property
    def n_points(self) -> int:
        return self.values.size

    @property
    def step(self) -> float:
        return self.capacity / (self.values.size - 1)

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    def _check_soc(self, e: np.ndarray) -> np.ndarray:
        slack = 1e-9 * max(1.0, self.capacity)
        if np.any(e < -slack) or np.any(e > self.capacity + slack):
            raise ValueError(f"SoC outside [0, {self.capacity}]")
        return np.clip(e, 0.0, self.capacity)

    def _check_soc_scalar(self, e: float) -> float:
        slack = 1e-9 * max(1.0, self.capacity)
        if e < -slack or e > self.capacity + slack:
            raise ValueError(f"SoC outside [0, {self.capacity}]")
        return min(max(e, 0.0), self.capacity)

    def _nearest_index(self, e: np.ndarray) -> np.ndarray:
        # halfway ties round toward the lower index
        idx = np.ceil(e / self.step - 0.5)
        return np.clip(idx, 0, self.n_points - 1).astype(int)

    def eval(self, e):
        """Marginal value at SoC e; e may be a scalar or an array."""
        if np.ndim(e) == 0:  # fast path: dispatch calls this per period
            e = self._check_soc_scalar(float(e))
            if self.interp == "linear":
                return float(np.interp(e, self._grid, self.values))
            idx = math.ceil(e / self.step - 0.5)
            return float(self.values[min(max(idx, 0), self.n_points - 1)])
        e = self._check_soc(np.asarray(e, dtype=float))
        if self.interp == "linear":
            out = np.interp(e, self._grid, self.values)
        else:
            out = self.values[self._nearest_index(e)]
        return out

    def inverse(self, y: float, lo: float, hi: float) -> float:
        """SoC in [lo, hi] at which the curve crosses y, clamped.

        Returns lo when y >= eval(lo) and hi when the curve stays above y
        through hi.  On a flat run equal to y the lowest SoC of the run is
        returned, so an indifferent policy moves as little as possible.
        """
        if lo > hi:
            raise ValueError("inverse needs lo <= hi")
        lo = self._check_soc_scalar(float(lo))
        hi = self._check_soc_scalar(float(hi))
        if y >= self.eval(lo):
            return lo
        # smallest grid index whose value is <= y
        n_below = int(np.searchsorted(self._ascending, y, side="right"))
        if n_below == 0:
            return hi
        j = self.n_points - n_below
        if self.interp == "linear":
            if j == 0:
                e_star = 0.0
            else:
                v_prev, v_j = self.values[j - 1], self.values[j]
                e_star = (j - 1 + (v_prev - y) / (v_prev - v_j)) * self.step
        else:
            # candidates are grid points at or above lo
            j_lo = int(np.ceil(lo / self.step - 1e-12))
            e_star = min(max(j, j_lo), self.n_points - 1) * self.step
        return min(max(e_star, lo), hi)

    def integral_to(self, e: float) -> float:
        """Trapezoid integral of the curve from SoC 0 to e ($)."""
        e = float(self._check_soc(np.asarray(e, dtype=float)))
        k = int(e / self.step)
        k = min(k, self.n_points - 2)
        v = self.values
        whole = 0.5 * self.step * (v[:k] + v[1 : k + 1]).sum() if k > 0 else 0.0
        rem = e - k * self.step
        if rem <= 0.0:
            return float(whole)
        v_a = self.values[k]
        v_b = v_a + (self.values[k + 1] - v_a) * rem / self.step
        return float(whole + 0.5 * (v_a + v_b) * rem)


def from_function(
    g: Callable[[float], float],
    capacity: float,
    step: float,
    interp: str = "nearest",
) -> ValueCurve:
    """Sample g on the grid and clip to a non-increasing curve.

    The running-minimum clip makes any sampled function usable as a curve;
    already-monotone inputs pass through unchanged.
    """
    n = _points_for(capacity, step)
    grid = np.linspace(0.0, capacity, n)
    values = np.minimum.accumulate([float(g(e)) for e in grid])
    return ValueCurve(capacity, values, interp=interp)


def _points_for(capacity: float, step: float) -> int:
    if not step > 0.0:
        raise ValueError("step must be > 0")
    ratio = capacity / step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"capacity {capacity} is not a multiple of step {step}")
    return n + 1
