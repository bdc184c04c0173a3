"""Exhaustive discrete stochastic dynamic programming, used for verification.

Everything here is deliberately independent of the analytic recursion and
the dispatch policy: states, actions, and prices are fully enumerated, and
value lookups use this module's own grid rounding.  The default action set
contains exactly the moves that land on SoC grid points, which makes the
backward induction exact for the discretized instance.  Slow is fine; this
is the ground truth for small cases, not a production path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .curves import StorageSpec, ValueCurve
from .distributions import Empirical, PointMass, PriceDistribution, Shifted
from .errors import GuardError

ENUMERATION_GUARD = 10**8


@dataclass(frozen=True)
class DiscreteInstance:
    """A fully discretized valuation problem small enough to enumerate."""

    spec: StorageSpec
    grid: np.ndarray
    stages: tuple[Empirical, ...]
    terminal_values: np.ndarray  # V_T levels on the grid ($)
    action_step: float | None = None  # None: actions land on grid points

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        terminal = np.asarray(self.terminal_values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "terminal_values", terminal)
        object.__setattr__(self, "stages", tuple(self.stages))
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be 1-d with at least two points")
        steps = np.diff(grid)
        if grid[0] != 0.0 or np.any(steps <= 0):
            raise ValueError("grid must start at 0 and increase")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid must be uniform")
        if abs(grid[-1] - self.spec.capacity) > 1e-9 * self.spec.capacity:
            raise ValueError("grid must span [0, capacity]")
        if terminal.shape != grid.shape:
            raise ValueError("terminal_values must match the grid")
        for d in self.stages:
            if not isinstance(d, Empirical):
                raise ValueError("oracle stages must be Empirical distributions")

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def enumeration_size(self) -> int:
        j = self.grid.size
        k = max(d.values.size for d in self.stages)
        return k * j * j * self.n_stages


@dataclass(frozen=True)
class OracleAction:
    discharge: float
    charge: float
    e_end: float


@dataclass
class OracleSolution:
    values: np.ndarray  # (T+1, J) value levels ($)
    marginals: np.ndarray  # (T+1, J) finite-difference marginals ($/MWh)
    grid: np.ndarray


def _candidate_ends(e_prev: float, grid: np.ndarray, spec: StorageSpec,
                    action_step: float | None) -> np.ndarray:
    eps = 1e-9 * max(1.0, spec.power)
    if action_step is None:
        delta = grid - e_prev
        sell = np.where(delta < 0.0, -delta * spec.efficiency, 0.0)
        buy = np.where(delta > 0.0, delta / spec.efficiency, 0.0)
        ends = grid[(sell <= spec.power + eps) & (buy <= spec.power + eps)]
        if not np.any(np.isclose(ends, e_prev, rtol=0.0, atol=1e-12)):
            ends = np.append(ends, e_prev)
        return ends
    powers = np.arange(0.0, spec.power + action_step / 2.0, action_step)
    ends = np.concatenate([
        e_prev - powers / spec.efficiency,
        e_prev + powers * spec.efficiency,
    ])
    cap_eps = 1e-9 * max(1.0, spec.capacity)
    return np.unique(np.clip(ends[(ends >= -cap_eps) & (ends <= spec.capacity + cap_eps)],
                             0.0, spec.capacity))


def _table_lookup(v_table: np.ndarray, grid: np.ndarray, e: np.ndarray,
                  interpolate: bool = False) -> np.ndarray:
    if interpolate:
        # off-grid landings (fine action grids) must not be granted rounded
        # SoC for free; the piecewise-linear table is the honest extension
        return np.interp(e, grid, v_table)
    step = grid[1] - grid[0]
    idx = np.clip(np.floor(e / step + 0.5).astype(int), 0, grid.size - 1)
    return v_table[idx]


def single_stage_max(
    e_prev: float,
    price: float,
    v_table: np.ndarray,
    grid: np.ndarray,
    spec: StorageSpec,
    action_step: float | None = None,
) -> tuple[OracleAction, float]:
    """Argmax and max of the one-period profit plus next-period value."""
    ends = _candidate_ends(e_prev, grid, spec, action_step)
    delta = ends - e_prev
    sell = np.where(delta < 0.0, -delta * spec.efficiency, 0.0)
    buy = np.where(delta > 0.0, delta / spec.efficiency, 0.0)
    profit = price * (sell - buy) - spec.discharge_cost * sell
    score = profit + _table_lookup(v_table, grid, ends, interpolate=action_step is not None)
    if price <= 0.0:
        score = np.where(sell > 0.0, -np.inf, score)
    best = int(np.argmax(score))
    action = OracleAction(
        discharge=float(sell[best]), charge=float(buy[best]), e_end=float(ends[best])
    )
    return action, float(score[best])


def _stage_q_batch(
    e_prev: float,
    prices: np.ndarray,
    v_table: np.ndarray,
    grid: np.ndarray,
    spec: StorageSpec,
) -> np.ndarray:
    """single_stage_max values for a vector of prices (grid actions)."""
    ends = _candidate_ends(e_prev, grid, spec, None)
    delta = ends - e_prev
    sell = np.where(delta < 0.0, -delta * spec.efficiency, 0.0)
    buy = np.where(delta > 0.0, delta / spec.efficiency, 0.0)
    cont = _table_lookup(v_table, grid, ends)
    out = np.empty(prices.size)
    block = max(1, 4_000_000 // ends.size)
    for lo in range(0, prices.size, block):
        lam = prices[lo : lo + block, None]
        score = lam * (sell - buy)[None, :] - spec.discharge_cost * sell[None, :] + cont[None, :]
        score = np.where((lam <= 0.0) & (sell[None, :] > 0.0), -np.inf, score)
        out[lo : lo + block] = score.max(axis=1)
    return out


def sdp_solve(inst: DiscreteInstance) -> OracleSolution:
    """Exact backward induction over the discretized instance."""
    size = inst.enumeration_size()
    if size > ENUMERATION_GUARD:
        raise GuardError(
            f"instance needs {size} enumerations, over the {ENUMERATION_GUARD} guard"
        )
    j = inst.grid.size
    t_total = inst.n_stages
    values = np.empty((t_total + 1, j))
    values[t_total] = inst.terminal_values
    for t in range(t_total, 0, -1):
        dist = inst.stages[t - 1]
        v_next = values[t]
        expectation = np.zeros(j)
        for price, weight in zip(dist.values, dist.weights):
            q = np.array([
                single_stage_max(e, float(price), v_next, inst.grid, inst.spec,
                                 inst.action_step)[1]
                for e in inst.grid
            ])
            expectation += weight * q
        values[t - 1] = expectation
    step = inst.grid[1] - inst.grid[0]
    marginals = finite_difference_marginals(values, step)
    return OracleSolution(values=values, marginals=marginals, grid=inst.grid.copy())


def finite_difference_marginals(values: np.ndarray, step: float) -> np.ndarray:
    """Derivative estimate of value levels: central interior, one-sided
    second-order at the boundaries (exact for piecewise-quadratic levels)."""
    arr = np.asarray(values, dtype=float)
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] < 3:
        raise ValueError("need at least three grid points for finite differences")
    m = np.empty_like(arr)
    m[..., 1:-1] = (arr[..., 2:] - arr[..., :-2]) / (2.0 * step)
    m[..., 0] = (-3.0 * arr[..., 0] + 4.0 * arr[..., 1] - arr[..., 2]) / (2.0 * step)
    m[..., -1] = (3.0 * arr[..., -1] - 4.0 * arr[..., -2] + arr[..., -3]) / (2.0 * step)
    return m[0] if squeeze else m


def empirical_q_cdf(
    e: float,
    delta: float,
    dist: PriceDistribution,
    v_table: np.ndarray,
    grid: np.ndarray,
    spec: StorageSpec,
    n: int,
    seed: int,
) -> np.ndarray:
    """Sampled finite-difference marginals around e, sorted ascending.

    Each sample realizes one price, solves the single-period problem at
    e +/- delta, and returns the centered difference quotient; the sorted
    array is the empirical CDF of the marginal profit.
    """
    if delta <= 0.0 or e - delta < 0.0 or e + delta > spec.capacity:
        raise ValueError("need delta > 0 with e +/- delta inside [0, capacity]")
    rng = np.random.default_rng(seed)
    prices = np.asarray(dist.sample(rng, n), dtype=float)
    q_hi = _stage_q_batch(e + delta, prices, v_table, grid, spec)
    q_lo = _stage_q_batch(e - delta, prices, v_table, grid, spec)
    return np.sort((q_hi - q_lo) / (2.0 * delta))


def ks_distance(
    sorted_samples: np.ndarray,
    cdf: Callable[[np.ndarray], np.ndarray],
    jump_points: Sequence[float] = (),
    snap_tol: float = 1e-9,
) -> float:
    """sup |empirical CDF - cdf| over sample values and known jump points.

    Samples within snap_tol of a known jump are snapped onto it first:
    finite-difference samples that sit on an atom of the model carry a few
    ulps of rounding noise, which would otherwise register as the full atom
    mass at the jump itself.
    """
    finite_jumps = np.asarray([x for x in jump_points if np.isfinite(x)], dtype=float)
    samples = np.asarray(sorted_samples, dtype=float)
    if finite_jumps.size and snap_tol > 0.0:
        samples = samples.copy()
        for jump in finite_jumps:
            near = np.abs(samples - jump) <= snap_tol * max(1.0, abs(jump))
            samples[near] = jump
        samples.sort()
    probes = np.unique(np.concatenate([samples, finite_jumps]))
    n = samples.size
    ecdf_right = np.searchsorted(samples, probes, side="right") / n
    ecdf_left = np.searchsorted(samples, probes, side="left") / n
    model_right = np.asarray(cdf(probes), dtype=float)
    model_left = np.asarray(cdf(np.nextafter(probes, -np.inf)), dtype=float)
    return float(
        max(
            np.abs(ecdf_right - model_right).max(),
            np.abs(ecdf_left - model_left).max(),
        )
    )


def terminal_levels(curve: ValueCurve) -> np.ndarray:
    """Trapezoid value levels ($) of a marginal curve, for oracle tables."""
    v = np.asarray(curve.values, dtype=float)
    step = curve.step
    cells = 0.5 * step * (v[:-1] + v[1:])
    return np.concatenate(([0.0], np.cumsum(cells)))


def as_empirical(dist: PriceDistribution, nodes: int) -> Empirical:
    """Finite-support view of a distribution: exact when already discrete."""
    if isinstance(dist, Empirical):
        return dist
    if isinstance(dist, PointMass):
        return Empirical(np.array([dist.location]), np.array([1.0]))
    if isinstance(dist, Shifted):
        inner = as_empirical(dist.inner, nodes)
        return Empirical(inner.values + dist.offset, inner.weights)
    return dist.discretize(nodes)


def instance_from_horizon(horizon, nodes: int = 10,
                          action_step: float | None = None) -> DiscreteInstance:
    """Discretize a valuation horizon onto its own terminal grid."""
    terminal = horizon.terminal
    return DiscreteInstance(
        spec=horizon.spec,
        grid=terminal.grid,
        stages=tuple(as_empirical(d, nodes) for d in horizon.stages),
        terminal_values=terminal_levels(terminal),
        action_step=action_step,
    )


def perfect_information_values(
    price_paths: np.ndarray,
    terminal_values: np.ndarray,
    grid: np.ndarray,
    spec: StorageSpec,
    e0: float,
) -> np.ndarray:
    """Deterministic-DP optimum per realized path, including terminal value.

    price_paths has shape (paths, stages).  This is the hindsight benchmark:
    no admissible policy can beat its mean.
    """
    paths = np.atleast_2d(np.asarray(price_paths, dtype=float))
    m, t_total = paths.shape
    j = grid.size
    eps = 1e-9 * max(1.0, spec.power)
    delta = grid[:, None] - grid[None, :]  # start i, end j: positive = discharge
    sell = np.where(delta > 0.0, delta * spec.efficiency, 0.0)
    buy = np.where(delta < 0.0, -delta / spec.efficiency, 0.0)
    feasible = (sell <= spec.power + eps) & (buy <= spec.power + eps)
    start = int(np.clip(np.floor(e0 / (grid[1] - grid[0]) + 0.5), 0, j - 1))

    out = np.empty(m)
    block = max(1, 10**7 // (j * j))
    for lo in range(0, m, block):
        chunk = paths[lo : lo + block]
        values = np.broadcast_to(terminal_values, (chunk.shape[0], j)).copy()
        for t in range(t_total - 1, -1, -1):
            lam = chunk[:, t][:, None, None]
            score = lam * (sell - buy)[None] - spec.discharge_cost * sell[None]
            score = score + values[:, None, :]
            bad = ~feasible[None] | ((lam <= 0.0) & (sell[None] > 0.0))
            score = np.where(bad, -np.inf, score)
            values = score.max(axis=2)
        out[lo : lo + block] = values[:, start]
    return out
