import json
from datetime import datetime, timedelta

import numpy as np
import pytest

from socval.distributions import Empirical, Normal, PointMass, Shifted
from socval.errors import ConfigError, DataError
from socval.forecast import (
    HorizonConfig,
    PriceRecord,
    build_forecast,
    horizon_from_dict,
    horizon_to_dict,
    load_prices,
    parse_config,
    realized_prices,
    terminal_curve,
)


def write_csv(tmp_path, body, name="prices.csv"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


def make_records(days, start=datetime(2024, 1, 1), residual_fn=None, da_fn=None):
    records = []
    for day in range(days):
        for hour in range(24):
            stamp = start + timedelta(days=day, hours=hour)
            da = da_fn(day, hour) if da_fn else 30.0 + hour
            rt = None
            if residual_fn is not None:
                rt = da + residual_fn(day, hour)
            records.append(PriceRecord(timestamp=stamp, da=da, rt=rt))
    return records


def base_config(**overrides):
    values = dict(
        power_mwh=0.5,
        capacity_mwh=2.0,
        efficiency=0.9,
        discharge_cost=10.0,
        stages=24,
        grid_points=41,
        forecast="point-da",
        terminal="constant",
        terminal_value=40.0,
        initial_soc_mwh=1.0,
    )
    values.update(overrides)
    return HorizonConfig(**values)


class TestLoadPrices:
    def test_header_only_gives_empty_sequence(self, tmp_path):
        path = write_csv(tmp_path, "timestamp,da,rt\n")
        assert load_prices(path) == []

    def test_two_valid_rows(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,da,rt\n"
            "2024-01-01T00:00:00,30.0,31.5\n"
            "2024-01-01T01:00:00,28.0,27.0\n",
        )
        records = load_prices(path)
        assert len(records) == 2
        assert records[0].da == 30.0
        assert records[1].rt == 27.0

    def test_blank_rt_is_absent(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,da,rt\n2024-01-01T00:00:00,30.0,\n",
        )
        records = load_prices(path)
        assert records[0].rt is None

    def test_unparseable_rows_skipped_with_warning(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,da,rt\n"
            "2024-01-01T00:00:00,30.0,31.0\n"
            "2024-01-01T01:00:00,oops,31.0\n"
            "2024-01-01T02:00:00,32.0,33.0\n",
        )
        with pytest.warns(UserWarning, match="lines \\[3\\]"):
            records = load_prices(path)
        assert len(records) == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_prices(tmp_path / "nope.csv")

    def test_malformed_header(self, tmp_path):
        path = write_csv(tmp_path, "time,price\n")
        with pytest.raises(DataError):
            load_prices(path)

    def test_non_monotone_timestamps(self, tmp_path):
        path = write_csv(
            tmp_path,
            "timestamp,da,rt\n"
            "2024-01-01T01:00:00,30.0,\n"
            "2024-01-01T00:00:00,28.0,\n",
        )
        with pytest.raises(DataError, match="strictly increasing"):
            load_prices(path)

    def test_negative_prices_accepted(self, tmp_path):
        path = write_csv(tmp_path, "timestamp,da,rt\n2024-01-01T00:00:00,-12.5,-30.0\n")
        records = load_prices(path)
        assert records[0].da == -12.5


class TestParseConfig:
    def test_round_trips_flat_toml(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            "power_mwh = 0.5\ncapacity_mwh = 2.0\nefficiency = 0.9\n"
            "stages = 6\nforecast = 'point-da'\nda_profile = [30.0, 40.0, 35.0, 20.0, 55.0, 31.0]\n",
            encoding="utf-8",
        )
        config = parse_config(path)
        assert config.stages == 6
        assert config.da_profile[4] == 55.0

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            "power_mwh = 0.5\ncapacity_mwh = 2.0\nefficiency = 0.9\nstages = 6\nbogus = 1\n",
            encoding="utf-8",
        )
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(path)

    def test_missing_required_keys(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("power_mwh = 0.5\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="missing required"):
            parse_config(path)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            base_config(forecast="nonsense")
        with pytest.raises(ConfigError):
            base_config(stages=0)
        with pytest.raises(ConfigError):
            base_config(initial_soc_mwh=5.0)
        with pytest.raises(ConfigError):
            base_config(terminal="table")  # missing the table itself

    def test_config_numeric_coercion(self):
        config = base_config(stages=6.0, power_mwh=1)
        assert config.stages == 6 and isinstance(config.stages, int)
        assert isinstance(config.power_mwh, float)
        with pytest.raises(ConfigError, match="stages must be an integer"):
            base_config(stages="six")
        with pytest.raises(ConfigError, match="must be a number"):
            base_config(power_mwh="lots")


class TestTerminalCurve:
    def test_constant(self):
        curve = terminal_curve(base_config(terminal_value=35.0))
        assert np.array_equal(curve.values, np.full(41, 35.0))

    def test_step_at_fraction(self):
        config = base_config(terminal="step", terminal_value=100.0,
                             terminal_step_fraction=0.9)
        curve = terminal_curve(config)
        grid = curve.grid
        assert np.array_equal(curve.values[grid <= 1.8], np.full(37, 100.0))
        assert np.array_equal(curve.values[grid > 1.8], np.zeros(4))

    def test_table_interpolates(self):
        config = base_config(
            terminal="table",
            terminal_soc=[0.0, 1.0, 2.0],
            terminal_values=[80.0, 60.0, 0.0],
        )
        curve = terminal_curve(config)
        assert curve.eval(0.5) == pytest.approx(70.0)


class TestBuildForecast:
    def test_point_da_uses_last_rows(self):
        records = make_records(3)
        config = base_config(stages=24)
        horizon = build_forecast(records, config)
        assert all(isinstance(d, PointMass) for d in horizon.stages)
        assert horizon.stages[0].location == records[-24].da

    def test_normal_residual_fits_hourly_sigma(self):
        rng = np.random.default_rng(5)
        spread = {h: 2.0 + h for h in range(24)}
        records = make_records(
            15, residual_fn=lambda d, h: float(rng.normal(0.0, spread[h]))
        )
        config = base_config(forecast="normal-residual", training_days=14)
        horizon = build_forecast(records, config)
        sigmas = [d.sigma for d in horizon.stages]
        # hour-of-day grouping: fitted spread grows across the day
        assert sigmas[23] > sigmas[0]

    def test_rt_equal_da_degenerates_to_point_mass(self):
        records = make_records(10, residual_fn=lambda d, h: 0.0)
        config = base_config(forecast="normal-residual", training_days=9)
        with pytest.warns(UserWarning, match="zero residual spread"):
            horizon = build_forecast(records, config)
        assert all(isinstance(d, PointMass) for d in horizon.stages)

    def test_sigma_override_needs_no_training(self):
        config = base_config(
            forecast="normal-residual",
            sigma_override=30.0,
            stages=4,
            da_profile=[30.0, 40.0, 50.0, 45.0],
        )
        horizon = build_forecast([], config)
        assert all(isinstance(d, Normal) and d.sigma == 30.0 for d in horizon.stages)
        assert [d.mu for d in horizon.stages] == [30.0, 40.0, 50.0, 45.0]

    def test_empirical_residual_two_point(self):
        # residuals alternate -5/+5 within each hour group (8 training days)
        records = make_records(9, residual_fn=lambda d, h: -5.0 if d % 2 == 0 else 5.0)
        config = base_config(forecast="empirical-residual", training_days=8)
        horizon = build_forecast(records, config)
        stage = horizon.stages[0]
        assert isinstance(stage, Shifted)
        assert np.array_equal(stage.inner.values, [-5.0, 5.0])
        assert stage.inner.weights == pytest.approx([0.5, 0.5])

    def test_day_permutation_leaves_fit_unchanged(self):
        rng = np.random.default_rng(9)
        residuals = rng.normal(0.0, 6.0, (10, 24))
        records = make_records(11, residual_fn=lambda d, h: float(residuals[d % 10, h]))
        config = base_config(forecast="empirical-residual", training_days=10, stages=24)
        horizon = build_forecast(records, config)

        perm = rng.permutation(10)
        shuffled = make_records(11, residual_fn=lambda d, h: float(residuals[perm[d % 10], h]))
        horizon2 = build_forecast(shuffled, config)
        for a, b in zip(horizon.stages, horizon2.stages):
            assert np.array_equal(a.inner.values, b.inner.values)
            assert a.inner.weights == pytest.approx(b.inner.weights)

    def test_insufficient_training_data(self):
        records = make_records(4, residual_fn=lambda d, h: 1.0 * d)
        config = base_config(forecast="normal-residual", training_days=30)
        with pytest.raises(DataError, match="residual samples"):
            build_forecast(records, config)

    def test_pooled_grouping(self):
        rng = np.random.default_rng(2)
        records = make_records(9, residual_fn=lambda d, h: float(rng.normal(0.0, 5.0)))
        config = base_config(
            forecast="normal-residual", training_days=8, residual_grouping="pooled"
        )
        horizon = build_forecast(records, config)
        sigmas = {round(d.sigma, 12) for d in horizon.stages}
        assert len(sigmas) == 1


class TestRealizedPrices:
    def test_extracts_tail(self):
        records = make_records(2, residual_fn=lambda d, h: 1.0)
        got = realized_prices(records, 24)
        assert got.shape == (24,)
        assert got[0] == records[-24].rt

    def test_missing_rt_rejected(self):
        records = make_records(2)
        with pytest.raises(DataError, match="missing real-time"):
            realized_prices(records, 24)


class TestSerialization:
    def test_horizon_round_trip_bit_exact(self):
        rng = np.random.default_rng(33)
        records = make_records(9, residual_fn=lambda d, h: float(rng.normal(0.0, 7.0)))
        config = base_config(forecast="empirical-residual", training_days=8)
        horizon = build_forecast(records, config)
        payload = json.dumps(horizon_to_dict(horizon))
        back = horizon_from_dict(json.loads(payload))
        assert back.spec == horizon.spec
        assert back.terminal == horizon.terminal
        for a, b in zip(horizon.stages, back.stages):
            assert a.offset == b.offset
            assert np.array_equal(a.inner.values, b.inner.values)
            assert np.array_equal(a.inner.weights, b.inner.weights)

    def test_all_kinds_round_trip(self):
        from socval.forecast import dist_from_dict, dist_to_dict

        kinds = [
            Normal(40.0, 12.345678901234567),
            PointMass(-3.2),
            Empirical(np.array([1.0, 2.5]), np.array([0.25, 0.75])),
            Shifted(Normal(0.0, 1.0), 41.5),
        ]
        for dist in kinds:
            back = dist_from_dict(json.loads(json.dumps(dist_to_dict(dist))))
            assert type(back) is type(dist)
            assert back == dist
