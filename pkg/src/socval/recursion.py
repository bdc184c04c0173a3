"""Analytic backward recursion for the marginal storage value.

Each step maps the next period's marginal-value curve and the current
period's price distribution to the current marginal-value curve, evaluating
the expectation of the random marginal profit in closed form (plus two
partial expectations).  No scenario sampling is involved, so a full pass
costs O(T * J) distribution evaluations and O(J) working memory.

The marginal profit random variable q has a mixed distribution: atoms at
the three curve thresholds (full charge, hold, full discharge) and price-
driven continuous parts between them.  Boundary saturation -- a full-power
move would leave [0, capacity] -- is handled by dropping the corresponding
atom and extending the neighbouring integral to an infinite bound, which is
the correct limit of the saturated terms.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .curves import StorageSpec, ValueCurve
from .distributions import PriceDistribution
from .errors import ToleranceError


@dataclass(frozen=True)
class ValuationHorizon:
    """Device, per-stage price distributions (1..T), and the terminal curve."""

    spec: StorageSpec
    stages: tuple[PriceDistribution, ...]
    terminal: ValueCurve

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if len(self.stages) < 1:
            raise ValueError("horizon needs at least one stage")
        if abs(self.terminal.capacity - self.spec.capacity) > 1e-9 * self.spec.capacity:
            raise ValueError("terminal curve capacity must match the device capacity")

    @property
    def n_stages(self) -> int:
        return len(self.stages)


@dataclass
class ValuationResult:
    """One marginal-value curve per stage boundary; curves[T] is terminal."""

    curves: list[ValueCurve]
    stage_seconds: list[float]

    @property
    def n_stages(self) -> int:
        return len(self.curves) - 1


def _thresholds(e: float, v_next: ValueCurve, spec: StorageSpec):
    """Marginal values after full charge / hold / full discharge from e.

    Saturated moves map to -inf (charge past full) or +inf (discharge past
    empty), the feasibility convention of the recursion.
    """
    cap = v_next.capacity
    e_up = e + spec.power * spec.efficiency
    e_dn = e - spec.power / spec.efficiency
    eps = 1e-12 * max(1.0, cap)
    v_mid = v_next.eval(e)
    v_hi = -np.inf if e_up > cap + eps else v_next.eval(min(e_up, cap))
    v_lo = np.inf if e_dn < -eps else v_next.eval(max(e_dn, 0.0))
    # monotone eval guarantees the ordering; clip to be safe against noise
    v_hi = min(v_hi, v_mid)
    v_lo = max(v_lo, v_mid)
    return v_hi, v_mid, v_lo


def soc_price_cdf(
    x,
    e: float,
    v_next: ValueCurve,
    dist: PriceDistribution,
    spec: StorageSpec,
):
    """CDF of the random marginal profit at starting SoC e.

    Four cases over x: zero below the full-charge threshold, a charge branch
    F(x*eta), a discharge branch F([x/eta + c]+), and one above the full-
    discharge threshold.
    """
    v_hi, v_mid, v_lo = _thresholds(e, v_next, spec)
    x = np.asarray(x, dtype=float)
    eta = spec.efficiency
    c = spec.discharge_cost
    charge_branch = np.asarray(dist.cdf(x * eta), dtype=float)
    discharge_branch = np.asarray(dist.cdf(np.maximum(x / eta + c, 0.0)), dtype=float)
    out = np.select(
        [x < v_hi, x < v_mid, x < v_lo],
        [np.zeros_like(charge_branch), charge_branch, discharge_branch],
        default=1.0,
    )
    return float(out) if out.ndim == 0 else out


def backward_step(
    v_next: ValueCurve,
    dist: PriceDistribution,
    spec: StorageSpec,
) -> ValueCurve:
    """One recursion step: marginal-value curve one period earlier."""
    if spec.power == 0.0:
        # zero power admits no action; the value function is unchanged and
        # the identity must hold exactly, not within rounding
        return v_next

    eta = spec.efficiency
    c = spec.discharge_cost
    cap = v_next.capacity
    grid = v_next.grid
    eps = 1e-12 * max(1.0, cap)

    e_up = grid + spec.power * eta
    e_dn = grid - spec.power / eta
    sat_hi = e_up > cap + eps
    sat_lo = e_dn < -eps

    v_mid = v_next.values
    v_hi = v_next.eval(np.minimum(e_up, cap))
    v_lo = v_next.eval(np.maximum(e_dn, 0.0))
    # monotone lookups keep v_hi <= v_mid <= v_lo; repair sub-tolerance noise
    # and refuse anything larger (it would mean a broken curve)
    disorder = max(float((v_hi - v_mid).max()), float((v_mid - v_lo).max()))
    if disorder > 1e-7 * max(1.0, float(np.abs(v_mid).max())):
        raise ToleranceError(
            f"threshold ordering violated by {disorder:g}; curve lookup is not monotone"
        )
    v_hi = np.minimum(v_hi, v_mid)
    v_lo = np.maximum(v_lo, v_mid)

    thr_mid_c = v_mid * eta  # charge/hold boundary price
    thr_mid_d = np.maximum(v_mid / eta + c, 0.0)  # hold/discharge boundary price
    thr_hi = np.where(sat_hi, -np.inf, v_hi * eta)
    thr_lo = np.where(sat_lo, np.inf, np.maximum(v_lo / eta + c, 0.0))

    f_hi = np.asarray(dist.cdf(thr_hi), dtype=float)
    f_mid_c = np.asarray(dist.cdf(thr_mid_c), dtype=float)
    f_mid_d = np.asarray(dist.cdf(thr_mid_d), dtype=float)
    f_lo = np.asarray(dist.cdf(thr_lo), dtype=float)

    charge_atom = np.where(sat_hi, 0.0, v_hi * f_hi)
    charge_flow = np.asarray(dist.partial_expectation(thr_hi, thr_mid_c)) / eta
    hold_atom = v_mid * (f_mid_d - f_mid_c)
    discharge_flow = eta * np.asarray(dist.partial_expectation(thr_mid_d, thr_lo))
    discharge_cost = -c * eta * (f_lo - f_mid_d)
    discharge_atom = np.where(sat_lo, 0.0, v_lo * (1.0 - f_lo))

    values = (
        charge_atom
        + charge_flow
        + hold_atom
        + discharge_flow
        + discharge_cost
        + discharge_atom
    )
    return ValueCurve(cap, values, interp=v_next.interp)


def _steps(horizon: ValuationHorizon) -> Iterator[ValueCurve]:
    """Curves v_{T-1}, ..., v_0, computed with O(J) working memory."""
    curve = horizon.terminal
    for dist in reversed(horizon.stages):
        curve = backward_step(curve, dist, horizon.spec)
        yield curve


def backward_value(horizon: ValuationHorizon) -> ValueCurve:
    """Marginal-value curve at the start of the horizon (v_0) only.

    Streams the recursion without retaining intermediate curves, so peak
    memory is independent of the horizon length.
    """
    curve = horizon.terminal
    for curve in _steps(horizon):
        pass
    return curve


def backward_pass(horizon: ValuationHorizon) -> ValuationResult:
    """Full recursion, keeping the curve at every stage boundary."""
    curves: list[ValueCurve] = [horizon.terminal]
    seconds: list[float] = []
    t = horizon.n_stages
    step_iter = _steps(horizon)
    while t > 0:
        start = time.perf_counter()
        try:
            curve = next(step_iter)
        except Exception as exc:
            raise type(exc)(f"stage {t}: {exc}") from exc
        seconds.append(time.perf_counter() - start)
        curves.append(curve)
        t -= 1
    curves.reverse()
    seconds.reverse()
    return ValuationResult(curves=curves, stage_seconds=seconds)
