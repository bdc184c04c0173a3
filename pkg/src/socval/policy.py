"""Dispatch against realized prices using marginal-value curves.

The decision rule is the feasible projection of the dual-decomposed optimum:
discharge while the net sale price exceeds the marginal value of stored
energy, charge while the replacement cost is below it, otherwise hold.  The
target SoC comes from the curve's inverse lookup, clamped to power and
energy limits.  Ties hold, and the device never discharges at a negative
price.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import StorageSpec, ValueCurve
from .recursion import ValuationHorizon, ValuationResult


@dataclass(frozen=True)
class Dispatch:
    """One period's decision and its immediate profit."""

    discharge: float  # energy sold (MWh), >= 0
    charge: float  # energy bought (MWh), >= 0
    e_end: float  # SoC after the period (MWh)
    profit: float  # price * (discharge - charge) - cost * discharge ($)


@dataclass(frozen=True)
class MonteCarloSummary:
    """Sample statistics of simulated path profits."""

    mean: float
    stderr: float
    mean_with_terminal: float
    stderr_with_terminal: float
    mean_final_soc: float
    n_paths: int
    seed: int
    profits: np.ndarray
    totals: np.ndarray


def dispatch(
    e_prev: float,
    price: float,
    v_next: ValueCurve,
    spec: StorageSpec,
) -> Dispatch:
    """Optimal single-period action given the next period's value curve."""
    cap = spec.capacity
    if not -1e-9 * max(1.0, cap) <= e_prev <= cap * (1.0 + 1e-9) + 1e-12:
        raise ValueError(f"SoC {e_prev} outside [0, {cap}]")
    e_prev = min(max(e_prev, 0.0), cap)
    eta = spec.efficiency
    value_here = v_next.eval(e_prev)
    sell_value = (price - spec.discharge_cost) * eta

    p_d = 0.0
    p_c = 0.0
    e_end = e_prev
    if price > 0.0 and value_here < sell_value:
        target = v_next.inverse(sell_value, 0.0, e_prev)
        e_end = max(target, e_prev - spec.power / eta, 0.0)
        p_d = min(max((e_prev - e_end) * eta, 0.0), spec.power)
    elif value_here > price / eta:
        target = v_next.inverse(price / eta, e_prev, cap)
        e_end = min(target, e_prev + spec.power * eta, cap)
        p_c = min(max((e_end - e_prev) / eta, 0.0), spec.power)
    profit = price * (p_d - p_c) - spec.discharge_cost * p_d
    return Dispatch(discharge=p_d, charge=p_c, e_end=e_end, profit=profit)


def simulate_path(
    e0: float,
    prices,
    result: ValuationResult,
    spec: StorageSpec,
) -> tuple[list[Dispatch], float]:
    """Dispatch a realized price path; returns the trace and total profit.

    Stage t consults curves[t], the marginal value of SoC at the end of
    period t.  The trading profit excludes any terminal valuation; add
    terminal_value() of the final SoC for the full objective.
    """
    prices = np.asarray(prices, dtype=float)
    if prices.size != result.n_stages:
        raise ValueError(
            f"got {prices.size} prices for {result.n_stages} stages"
        )
    trace: list[Dispatch] = []
    e = e0
    total = 0.0
    for t, price in enumerate(prices, start=1):
        try:
            step = dispatch(e, float(price), result.curves[t], spec)
        except ValueError as exc:
            raise ValueError(f"stage {t}: {exc}") from exc
        trace.append(step)
        e = step.e_end
        total += step.profit
    return trace, total


def terminal_value(terminal: ValueCurve, e: float) -> float:
    """Monetized end-state value: the terminal curve integrated to e ($)."""
    return terminal.integral_to(e)


def monte_carlo(
    e0: float,
    horizon: ValuationHorizon,
    result: ValuationResult,
    n: int,
    seed: int,
) -> MonteCarloSummary:
    """Expected policy profit by simulation over sampled price paths.

    Paths use independent child streams of the seed, so the estimate is
    reproducible and two runs with different e0 but the same seed see the
    same prices (common random numbers).
    """
    if n < 1:
        raise ValueError("need n >= 1 paths")
    children = np.random.SeedSequence(seed).spawn(n)
    profits = np.empty(n)
    totals = np.empty(n)
    finals = np.empty(n)
    for i in range(n):
        rng = np.random.default_rng(children[i])
        prices = [dist.sample(rng) for dist in horizon.stages]
        trace, profit = simulate_path(e0, prices, result, horizon.spec)
        profits[i] = profit
        finals[i] = trace[-1].e_end
        totals[i] = profit + terminal_value(horizon.terminal, trace[-1].e_end)
    return MonteCarloSummary(
        mean=float(profits.mean()),
        stderr=_stderr(profits),
        mean_with_terminal=float(totals.mean()),
        stderr_with_terminal=_stderr(totals),
        mean_final_soc=float(finals.mean()),
        n_paths=n,
        seed=seed,
        profits=profits,
        totals=totals,
    )


def _stderr(x: np.ndarray) -> float:
    if x.size < 2 or x.min() == x.max():
        return 0.0
    return float(x.std(ddof=1) / np.sqrt(x.size))
