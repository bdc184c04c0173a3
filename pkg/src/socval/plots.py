"""Figure rendering for CLI reports.

Figures are written next to the delimited output files.  PNG metadata is
stripped of timestamps so reruns produce byte-identical images.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 150, "metadata": {"Date": None}}


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def value_range_plot(curve_sets: dict[str, list], path: Path) -> Path:
    """Marginal-value band per stage: value at empty vs full storage."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, curves in curve_sets.items():
        stages = np.arange(len(curves))
        top = [c.values[0] for c in curves]
        bottom = [c.values[-1] for c in curves]
        line, = ax.plot(stages, top, label=f"{label} (0% SoC)")
        ax.plot(stages, bottom, linestyle="--", color=line.get_color(),
                label=f"{label} (100% SoC)")
        ax.fill_between(stages, bottom, top, alpha=0.15, color=line.get_color())
    ax.set_xlabel("stage")
    ax.set_ylabel("marginal value ($/MWh)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def value_profile_plot(profiles: dict[str, np.ndarray], grid: np.ndarray,
                       path: Path, stage: int) -> Path:
    """Marginal value versus SoC at one stage boundary."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, values in profiles.items():
        ax.plot(100.0 * grid / grid[-1], values, label=label)
    ax.set_xlabel("state of charge (%)")
    ax.set_ylabel(f"marginal value at stage {stage} ($/MWh)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def trace_plot(rows: Sequence[dict], capacity: float, path: Path) -> Path:
    """Realized price and the SoC trajectory of a dispatch trace."""
    stages = [row["stage"] for row in rows]
    fig, (ax_price, ax_soc) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax_price.step(stages, [row["price"] for row in rows], where="mid")
    ax_price.set_ylabel("price ($/MWh)")
    ax_price.grid(alpha=0.3)
    ax_soc.step(stages, [100.0 * row["soc"] / capacity for row in rows], where="mid")
    ax_soc.set_ylabel("SoC (%)")
    ax_soc.set_xlabel("stage")
    ax_soc.set_ylim(-2, 102)
    ax_soc.grid(alpha=0.3)
    return _finish(fig, path)


def profit_histogram(profits: np.ndarray, path: Path) -> Path:
    """Distribution of per-path simulated profits."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(profits, bins=min(60, max(10, profits.size // 30)), alpha=0.8)
    ax.axvline(float(profits.mean()), color="k", linestyle="--", label="mean")
    ax.set_xlabel("path profit ($)")
    ax.set_ylabel("paths")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _finish(fig, path)
