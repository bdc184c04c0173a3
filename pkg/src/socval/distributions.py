"""Per-stage electricity price distributions.

Every kind exposes the same three quantities the valuation recursion
consumes -- CDF values, partial expectations over an interval, and interval
masses -- plus seeded sampling for Monte Carlo evaluation.  Infinite bounds
are legal arguments everywhere: the recursion's boundary-saturation cases
integrate to +/-inf.

Discrete kinds (point mass, empirical) use the half-open convention (a, b]
for interval quantities, matching the right-continuous CDF, so that
partial expectations telescope exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

WEIGHT_TOL = 1e-9

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _unwrap(out: np.ndarray):
    """Return a Python float for 0-d results, the array otherwise."""
    return float(out) if out.ndim == 0 else out


def _check_interval(a: np.ndarray, b: np.ndarray) -> None:
    if np.any(a > b):
        raise ValueError("interval lower bound exceeds upper bound")


class PriceDistribution:
    """One stage's random price ($/MWh)."""

    def cdf(self, x):
        """P[price <= x].  Accepts scalars or arrays, including +/-inf."""
        raise NotImplementedError

    def partial_expectation(self, a, b):
        """Integral of u * f(u) du over (a, b], with a <= b.

        Over (-inf, +inf) this is the distribution mean.
        """
        raise NotImplementedError

    def interval_mass(self, a, b):
        """P[a < price <= b]."""
        a = _as_float_array(a)
        b = _as_float_array(b)
        _check_interval(a, b)
        return _unwrap(np.asarray(self.cdf(b)) - np.asarray(self.cdf(a)))

    def mean(self) -> float:
        return float(self.partial_expectation(-np.inf, np.inf))

    def quantile(self, q):
        """Smallest x with cdf(x) >= q, for q in (0, 1)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        """Draw realizations using the caller-owned generator."""
        raise NotImplementedError

    def discretize(self, n: int) -> "Empirical":
        """n-point quantile approximation (midpoint quantiles (k-1/2)/n)."""
        if n < 1:
            raise ValueError("discretize needs n >= 1")
        qs = (np.arange(n) + 0.5) / n
        values = np.asarray(self.quantile(qs), dtype=float)
        return Empirical(values, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class Normal(PriceDistribution):
    """Normal price with mean mu and standard deviation sigma ($/MWh)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be > 0; use PointMass for the degenerate case")

    def _z(self, x) -> np.ndarray:
        return (_as_float_array(x) - self.mu) / self.sigma

    def cdf(self, x):
        return _unwrap(ndtr(self._z(x)))

    def pdf(self, x):
        z = self._z(x)
        return _unwrap(np.exp(-0.5 * np.square(z)) / (self.sigma * _SQRT_2PI))

    def partial_expectation(self, a, b):
        # closed form: mu*(Phi(beta)-Phi(alpha)) - sigma*(phi(beta)-phi(alpha))
        alpha = self._z(a)
        beta = self._z(b)
        _check_interval(alpha, beta)
        phi_a = np.exp(-0.5 * np.square(alpha)) / _SQRT_2PI
        phi_b = np.exp(-0.5 * np.square(beta)) / _SQRT_2PI
        out = self.mu * (ndtr(beta) - ndtr(alpha)) - self.sigma * (phi_b - phi_a)
        return _unwrap(np.asarray(out))

    def quantile(self, q):
        return _unwrap(np.asarray(self.mu + self.sigma * ndtri(_as_float_array(q))))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mu, self.sigma, size=size)


@dataclass(frozen=True)
class PointMass(PriceDistribution):
    """Deterministic price; the sigma -> 0 limit handled without division."""

    location: float

    def cdf(self, x):
        return _unwrap((_as_float_array(x) >= self.location).astype(float))

    def partial_expectation(self, a, b):
        a = _as_float_array(a)
        b = _as_float_array(b)
        _check_interval(a, b)
        inside = (a < self.location) & (self.location <= b)
        return _unwrap(self.location * inside.astype(float))

    def quantile(self, q):
        q = _as_float_array(q)
        return _unwrap(np.full_like(q, self.location))

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.location
        return np.full(size, self.location)


@dataclass(frozen=True)
class Empirical(PriceDistribution):
    """Weighted samples; weights are non-negative and sum to one.

    Values are sorted and duplicates are merged on construction, so two
    Empirical objects describing the same distribution compare equal.
    """

    values: np.ndarray
    weights: np.ndarray
    _cum_w: np.ndarray = field(init=False, repr=False, compare=False)
    _cum_xw: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if values.ndim != 1 or values.shape != weights.shape or values.size == 0:
            raise ValueError("values and weights must be matching non-empty 1-d arrays")
        if not np.all(np.isfinite(values)):
            raise ValueError("empirical support must be finite")
        if np.any(weights < 0.0):
            raise ValueError("weights must be non-negative")
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1 within {WEIGHT_TOL}")
        weights = weights / total
        order = np.argsort(values, kind="stable")
        values = values[order]
        weights = weights[order]
        # merge duplicate atoms
        uniq, inverse = np.unique(values, return_inverse=True)
        if uniq.size != values.size:
            merged = np.zeros(uniq.size)
            np.add.at(merged, inverse, weights)
            values, weights = uniq, merged
        cum_w = np.minimum(np.cumsum(weights), 1.0)
        cum_w[-1] = 1.0
        cum_xw = np.cumsum(weights * values)
        for name, arr in (
            ("values", values),
            ("weights", weights),
            ("_cum_w", cum_w),
            ("_cum_xw", cum_xw),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, Empirical):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.weights, other.weights
        )

    def _count_leq(self, x) -> np.ndarray:
        return np.searchsorted(self.values, _as_float_array(x), side="right")

    def cdf(self, x):
        idx = self._count_leq(x)
        padded = np.concatenate(([0.0], self._cum_w))
        return _unwrap(padded[idx])

    def partial_expectation(self, a, b):
        a = _as_float_array(a)
        b = _as_float_array(b)
        _check_interval(a, b)
        padded = np.concatenate(([0.0], self._cum_xw))
        return _unwrap(padded[self._count_leq(b)] - padded[self._count_leq(a)])

    def quantile(self, q):
        idx = np.searchsorted(self._cum_w, _as_float_array(q), side="left")
        idx = np.minimum(idx, self.values.size - 1)
        return _unwrap(self.values[idx])

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cum_w, u, side="right")
        idx = np.minimum(idx, self.values.size - 1)
        return _unwrap(np.asarray(self.values[idx]))


@dataclass(frozen=True)
class Shifted(PriceDistribution):
    """A distribution translated by a constant offset (inner + offset)."""

    inner: PriceDistribution
    offset: float

    def cdf(self, x):
        return self.inner.cdf(_as_float_array(x) - self.offset)

    def partial_expectation(self, a, b):
        a = _as_float_array(a) - self.offset
        b = _as_float_array(b) - self.offset
        _check_interval(a, b)
        base = np.asarray(self.inner.partial_expectation(a, b))
        mass = np.asarray(self.inner.cdf(b)) - np.asarray(self.inner.cdf(a))
        return _unwrap(base + self.offset * mass)

    def quantile(self, q):
        return _unwrap(np.asarray(self.inner.quantile(q)) + self.offset)

    def sample(self, rng: np.random.Generator, size=None):
        return self.inner.sample(rng, size=size) + self.offset
