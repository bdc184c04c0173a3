"""Price data ingestion, residual fitting, and horizon construction.

Input CSVs carry hourly day-ahead prices and optional real-time prices
(header: timestamp,da,rt).  The last T rows form the operating horizon; the
rows before them supply the residual training window.  Real-time prices are
modeled as a per-stage error distribution on top of the day-ahead price,
fitted from historical rt - da residuals grouped by hour of day (a pooled
variant is available).
"""

from __future__ import annotations

import csv
import sys
import warnings
from dataclasses import dataclass, fields
from datetime import datetime
from pathlib import Path

import numpy as np

from . import curves
from .curves import StorageSpec, ValueCurve
from .distributions import Empirical, Normal, PointMass, PriceDistribution, Shifted
from .errors import ConfigError, DataError
from .recursion import ValuationHorizon

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MIN_SAMPLES_PER_GROUP = 7

FORECAST_MODES = ("point-da", "normal-residual", "empirical-residual")
GROUPINGS = ("hour-of-day", "pooled")
TERMINAL_KINDS = ("constant", "step", "table")


@dataclass(frozen=True)
class PriceRecord:
    timestamp: datetime
    da: float
    rt: float | None = None


@dataclass
class HorizonConfig:
    """Declarative description of one valuation run."""

    power_mwh: float
    capacity_mwh: float
    efficiency: float
    stages: int
    discharge_cost: float = 0.0
    grid_points: int = 1001
    forecast: str = "point-da"
    training_days: int = 30
    residual_grouping: str = "hour-of-day"
    sigma_override: float | None = None
    sigma_sweep: list[float] | None = None
    da_profile: list[float] | None = None
    terminal: str = "constant"
    terminal_value: float = 0.0
    terminal_step_fraction: float = 0.9
    terminal_soc: list[float] | None = None
    terminal_values: list[float] | None = None
    initial_soc_mwh: float = 0.0
    seed: int = 0
    lookup: str = "nearest"
    oracle_nodes: int = 10
    mc_paths: int = 1000

    def __post_init__(self):
        for name in ("stages", "grid_points", "training_days", "seed",
                     "oracle_nodes", "mc_paths"):
            value = getattr(self, name)
            if not isinstance(value, int):
                if isinstance(value, float) and value.is_integer():
                    setattr(self, name, int(value))
                else:
                    raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("power_mwh", "capacity_mwh", "efficiency", "discharge_cost",
                     "terminal_value", "terminal_step_fraction", "initial_soc_mwh"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a number, got {value!r}")
            setattr(self, name, float(value))
        if self.forecast not in FORECAST_MODES:
            raise ConfigError(f"forecast must be one of {FORECAST_MODES}")
        if self.residual_grouping not in GROUPINGS:
            raise ConfigError(f"residual_grouping must be one of {GROUPINGS}")
        if self.terminal not in TERMINAL_KINDS:
            raise ConfigError(f"terminal must be one of {TERMINAL_KINDS}")
        if self.lookup not in ("nearest", "linear"):
            raise ConfigError("lookup must be 'nearest' or 'linear'")
        if self.stages < 1:
            raise ConfigError("stages must be >= 1")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if not 0.0 <= self.terminal_step_fraction <= 1.0:
            raise ConfigError("terminal_step_fraction must be in [0, 1]")
        if self.terminal == "table" and (
            self.terminal_soc is None or self.terminal_values is None
        ):
            raise ConfigError("table terminal needs terminal_soc and terminal_values")
        if self.da_profile is not None and len(self.da_profile) != self.stages:
            raise ConfigError("da_profile length must equal stages")
        if not 0.0 <= self.initial_soc_mwh <= self.capacity_mwh * (1 + 1e-9):
            raise ConfigError("initial_soc_mwh outside [0, capacity]")

    @property
    def storage_spec(self) -> StorageSpec:
        try:
            return StorageSpec(
                power=self.power_mwh,
                capacity=self.capacity_mwh,
                efficiency=self.efficiency,
                discharge_cost=self.discharge_cost,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def soc_step(self) -> float:
        return self.capacity_mwh / (self.grid_points - 1)


def parse_config(path: str | Path) -> HorizonConfig:
    """Read a flat TOML key-value file into a HorizonConfig."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    known = {f.name for f in fields(HorizonConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    missing = [
        name
        for name in ("power_mwh", "capacity_mwh", "efficiency", "stages")
        if name not in raw
    ]
    if missing:
        raise ConfigError(f"{path}: missing required keys {missing}")
    try:
        return HorizonConfig(**raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_timestamp(text: str, line: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataError(f"line {line}: bad timestamp {text!r}") from exc


def load_prices(path: str | Path) -> list[PriceRecord]:
    """Parse a price CSV; skips unparseable rows with a warning."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header timestamp,da,rt")
        if [h.strip().lower() for h in header] != ["timestamp", "da", "rt"]:
            raise DataError(f"{path}: expected header timestamp,da,rt, got {header}")
        records: list[PriceRecord] = []
        bad_lines: list[int] = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                bad_lines.append(line)
                continue
            stamp = _parse_timestamp(row[0], line)
            try:
                da = float(row[1])
                rt = float(row[2]) if row[2].strip() else None
            except ValueError:
                bad_lines.append(line)
                continue
            if not np.isfinite(da) or (rt is not None and not np.isfinite(rt)):
                bad_lines.append(line)
                continue
            records.append(PriceRecord(timestamp=stamp, da=da, rt=rt))
    if bad_lines:
        warnings.warn(f"{path}: rejected rows with unparseable prices at lines {bad_lines}")
    for prev, cur in zip(records, records[1:]):
        if cur.timestamp <= prev.timestamp:
            raise DataError(
                f"timestamps must be strictly increasing; "
                f"{cur.timestamp.isoformat()} follows {prev.timestamp.isoformat()}"
            )
    return records


def terminal_curve(config: HorizonConfig) -> ValueCurve:
    """Build the end-of-horizon marginal-value curve from the config."""
    cap = config.capacity_mwh
    step = config.soc_step
    if config.terminal == "constant":
        k = config.terminal_value
        return curves.from_function(lambda e: k, cap, step, interp=config.lookup)
    if config.terminal == "step":
        threshold = config.terminal_step_fraction * cap
        k = config.terminal_value
        return curves.from_function(
            lambda e: k if e <= threshold else 0.0, cap, step, interp=config.lookup
        )
    soc = np.asarray(config.terminal_soc, dtype=float)
    vals = np.asarray(config.terminal_values, dtype=float)
    if soc.ndim != 1 or soc.shape != vals.shape or soc.size < 2:
        raise ConfigError("terminal table needs matching soc and value lists")
    if np.any(np.diff(soc) <= 0):
        raise ConfigError("terminal table soc values must increase")
    return curves.from_function(
        lambda e: float(np.interp(e, soc, vals)), cap, step, interp=config.lookup
    )


def _residuals_by_group(
    training: list[PriceRecord], grouping: str
) -> dict[int, np.ndarray]:
    groups: dict[int, list[float]] = {}
    for rec in training:
        if rec.rt is None:
            continue
        key = rec.timestamp.hour if grouping == "hour-of-day" else 0
        groups.setdefault(key, []).append(rec.rt - rec.da)
    return {k: np.sort(np.asarray(v)) for k, v in groups.items()}


def _horizon_means(records: list[PriceRecord], config: HorizonConfig) -> list[tuple[int, float]]:
    """(hour-of-day, day-ahead price) per stage."""
    if config.da_profile is not None:
        return [(t % 24, float(da)) for t, da in enumerate(config.da_profile)]
    if len(records) < config.stages:
        raise DataError(
            f"need at least {config.stages} price rows for the horizon, got {len(records)}"
        )
    tail = records[-config.stages :]
    return [(rec.timestamp.hour, rec.da) for rec in tail]


def build_forecast(
    records: list[PriceRecord], config: HorizonConfig
) -> ValuationHorizon:
    """Assemble per-stage distributions and the terminal curve.

    point-da uses the day-ahead price as a point mass; normal-residual
    centers a normal at the day-ahead price with the fitted (or overridden)
    residual standard deviation; empirical-residual shifts the empirical
    residual distribution to the day-ahead price.
    """
    spec = config.storage_spec
    means = _horizon_means(records, config)
    stages: list[PriceDistribution] = []

    if config.forecast == "point-da":
        stages = [PointMass(da) for _, da in means]
    elif config.forecast == "normal-residual" and config.sigma_override is not None:
        if not config.sigma_override > 0.0:
            raise ConfigError("sigma_override must be > 0")
        stages = [Normal(da, config.sigma_override) for _, da in means]
    else:
        training = _training_window(records, config)
        groups = _residuals_by_group(training, config.residual_grouping)
        for hour, da in means:
            key = hour if config.residual_grouping == "hour-of-day" else 0
            residuals = groups.get(key)
            if residuals is None or residuals.size < MIN_SAMPLES_PER_GROUP:
                got = 0 if residuals is None else residuals.size
                raise DataError(
                    f"hour group {key}: {got} residual samples, "
                    f"need >= {MIN_SAMPLES_PER_GROUP}"
                )
            if config.forecast == "normal-residual":
                sigma = float(residuals.std(ddof=1))
                if sigma > 0.0:
                    stages.append(Normal(da, sigma))
                else:
                    warnings.warn(
                        f"hour group {key}: zero residual spread, using point mass"
                    )
                    stages.append(PointMass(da))
            else:
                weights = np.full(residuals.size, 1.0 / residuals.size)
                stages.append(Shifted(Empirical(residuals, weights), da))

    return ValuationHorizon(spec=spec, stages=tuple(stages), terminal=terminal_curve(config))


def _training_window(
    records: list[PriceRecord], config: HorizonConfig
) -> list[PriceRecord]:
    horizon_rows = 0 if config.da_profile is not None else config.stages
    head = records[: len(records) - horizon_rows]
    if not head:
        raise DataError("no training rows before the horizon window")
    cutoff = head[-1].timestamp.toordinal() - config.training_days
    return [rec for rec in head if rec.timestamp.toordinal() > cutoff]


def realized_prices(records: list[PriceRecord], stages: int) -> np.ndarray:
    """Real-time prices of the final `stages` rows; all must be present."""
    if len(records) < stages:
        raise DataError(f"need {stages} rows of realized prices, got {len(records)}")
    tail = records[-stages:]
    missing = [rec.timestamp.isoformat() for rec in tail if rec.rt is None]
    if missing:
        raise DataError(f"missing real-time prices for stages: {missing}")
    return np.asarray([rec.rt for rec in tail], dtype=float)


# --- serialization -------------------------------------------------------

def dist_to_dict(dist: PriceDistribution) -> dict:
    if isinstance(dist, Normal):
        return {"kind": "normal", "mu": dist.mu, "sigma": dist.sigma}
    if isinstance(dist, PointMass):
        return {"kind": "point-mass", "location": dist.location}
    if isinstance(dist, Empirical):
        return {
            "kind": "empirical",
            "values": dist.values.tolist(),
            "weights": dist.weights.tolist(),
        }
    if isinstance(dist, Shifted):
        return {"kind": "shifted", "offset": dist.offset, "inner": dist_to_dict(dist.inner)}
    raise TypeError(f"cannot serialize distribution {type(dist).__name__}")


def dist_from_dict(obj: dict) -> PriceDistribution:
    kind = obj.get("kind")
    if kind == "normal":
        return Normal(obj["mu"], obj["sigma"])
    if kind == "point-mass":
        return PointMass(obj["location"])
    if kind == "empirical":
        return Empirical(np.asarray(obj["values"]), np.asarray(obj["weights"]))
    if kind == "shifted":
        return Shifted(dist_from_dict(obj["inner"]), obj["offset"])
    raise DataError(f"unknown distribution kind {kind!r}")


def horizon_to_dict(horizon: ValuationHorizon) -> dict:
    return {
        "spec": {
            "power_mwh": horizon.spec.power,
            "capacity_mwh": horizon.spec.capacity,
            "efficiency": horizon.spec.efficiency,
            "discharge_cost": horizon.spec.discharge_cost,
        },
        "stages": [dist_to_dict(d) for d in horizon.stages],
        "terminal": {
            "capacity": horizon.terminal.capacity,
            "values": horizon.terminal.values.tolist(),
            "interp": horizon.terminal.interp,
        },
    }


def horizon_from_dict(obj: dict) -> ValuationHorizon:
    spec = obj["spec"]
    terminal = obj["terminal"]
    return ValuationHorizon(
        spec=StorageSpec(
            power=spec["power_mwh"],
            capacity=spec["capacity_mwh"],
            efficiency=spec["efficiency"],
            discharge_cost=spec["discharge_cost"],
        ),
        stages=tuple(dist_from_dict(d) for d in obj["stages"]),
        terminal=ValueCurve(
            terminal["capacity"],
            np.asarray(terminal["values"], dtype=float),
            interp=terminal["interp"],
        ),
    )
