"""Shared oracle-style utilities for the test suite.

These deliberately avoid the library's own computation paths: the Stieltjes
integrator consumes only the CDF callable, and the reference recursion term
sum is written scalar-by-scalar straight from the six-term decomposition.
"""

from __future__ import annotations

import math

import numpy as np

from socval import StorageSpec, ValueCurve, soc_price_cdf


def aligned_spec(m: int, k: int, step: float, capacity: float,
                 discharge_cost: float) -> StorageSpec:
    """Spec whose full-power SoC moves are whole grid cells.

    efficiency = sqrt(m/k) and power = sqrt(m*k)*step give a charge move of
    exactly m cells and a discharge move of exactly k cells, which makes the
    grid-action oracle and the analytic recursion see the same problem.
    """
    return StorageSpec(
        power=math.sqrt(m * k) * step,
        capacity=capacity,
        efficiency=math.sqrt(m / k),
        discharge_cost=discharge_cost,
    )


def stieltjes_mean(e, curve, dist, spec, n: int = 200_000) -> float:
    """E[q] by Riemann-Stieltjes summation of x against the SoC-price CDF."""
    eta = spec.efficiency
    c = spec.discharge_cost
    if hasattr(dist, "values"):
        lo_q, hi_q = float(dist.values.min()), float(dist.values.max())
    else:
        lo_q, hi_q = dist.quantile(1e-12), dist.quantile(1.0 - 1e-12)
    spread = [curve.values.min(), curve.values.max(),
              lo_q / eta, hi_q / eta, (lo_q - c) * eta, (hi_q - c) * eta]
    x_lo, x_hi = min(spread) - 1.0, max(spread) + 1.0
    xs = np.linspace(x_lo, x_hi, n + 1)
    cdf = soc_price_cdf(xs, e, curve, dist, spec)
    mids = 0.5 * (xs[:-1] + xs[1:])
    return float(np.sum(mids * np.diff(cdf)) + x_lo * cdf[0])


def plain_backward_entry(e: float, curve: ValueCurve, dist, spec) -> float:
    """Six-term recursion entry without any saturation handling.

    Only valid for interior e (full-power moves stay inside [0, capacity]);
    used as a regression guard that saturation logic leaves the interior
    untouched.
    """
    eta = spec.efficiency
    c = spec.discharge_cost
    v_hi = curve.eval(e + spec.power * eta)
    v_mid = curve.eval(e)
    v_lo = curve.eval(e - spec.power / eta)
    t1 = v_hi * dist.cdf(v_hi * eta)
    t2 = dist.partial_expectation(v_hi * eta, v_mid * eta) / eta
    t3 = v_mid * (dist.cdf(max(v_mid / eta + c, 0.0)) - dist.cdf(v_mid * eta))
    t4 = eta * dist.partial_expectation(
        max(v_mid / eta + c, 0.0), max(v_lo / eta + c, 0.0)
    )
    t5 = -c * eta * (dist.cdf(max(v_lo / eta + c, 0.0)) - dist.cdf(max(v_mid / eta + c, 0.0)))
    t6 = v_lo * (1.0 - dist.cdf(max(v_lo / eta + c, 0.0)))
    return float(t1 + t2 + t3 + t4 + t5 + t6)


def random_monotone_curve(rng: np.random.Generator, capacity: float, n: int,
                          low: float = 20.0, high: float = 150.0,
                          interp: str = "nearest") -> ValueCurve:
    """Random non-increasing curve with values inside [low, high]."""
    drops = rng.uniform(0.0, 1.0, n - 1)
    total = drops.sum()
    span = rng.uniform(0.3, 1.0) * (high - low)
    top = rng.uniform(low + span, high)
    values = top - np.concatenate(([0.0], np.cumsum(drops))) * (span / max(total, 1e-12))
    return ValueCurve(capacity, values, interp=interp)


def enumerate_sequences_value(prices, terminal_levels, grid, spec) -> float:
    """Best total over ALL grid-landing action sequences, by brute force.

    Exponential in len(prices); keep instances tiny.  Starts from each grid
    state are handled by the caller choosing prices/terminal and e0 index.
    """
    eps = 1e-9 * max(1.0, spec.power)

    def recurse(i_state: int, t: int) -> float:
        if t == len(prices):
            return float(terminal_levels[i_state])
        lam = prices[t]
        best = -np.inf
        e = grid[i_state]
        for j, e2 in enumerate(grid):
            move = e - e2
            sell = move * spec.efficiency if move > 0 else 0.0
            buy = -move / spec.efficiency if move < 0 else 0.0
            if sell > spec.power + eps or buy > spec.power + eps:
                continue
            if lam <= 0.0 and sell > 0.0:
                continue
            profit = lam * (sell - buy) - spec.discharge_cost * sell
            best = max(best, profit + recurse(j, t + 1))
        return best

    return recurse  # caller: enumerate_sequences_value(...)(i0, 0)
