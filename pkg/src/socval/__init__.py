"""Operational valuation of energy storage under multi-stage price uncertainty.

The marginal value of stored energy is computed by an analytic backward
recursion over price distribution functions, then turned into a dispatch
policy and evaluated against realized or sampled price paths.
"""

__version__ = "0.1.0"

from .curves import StorageSpec, ValueCurve, from_function
from .distributions import Empirical, Normal, PointMass, PriceDistribution, Shifted
from .policy import Dispatch, MonteCarloSummary, dispatch, monte_carlo, simulate_path, terminal_value
from .recursion import (
    ValuationHorizon,
    ValuationResult,
    backward_pass,
    backward_step,
    backward_value,
    soc_price_cdf,
)

__all__ = [
    "Dispatch",
    "Empirical",
    "MonteCarloSummary",
    "Normal",
    "PointMass",
    "PriceDistribution",
    "Shifted",
    "StorageSpec",
    "ValuationHorizon",
    "ValuationResult",
    "ValueCurve",
    "backward_pass",
    "backward_step",
    "backward_value",
    "dispatch",
    "from_function",
    "monte_carlo",
    "simulate_path",
    "soc_price_cdf",
    "terminal_value",
    "__version__",
]
