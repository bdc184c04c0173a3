#!/usr/bin/env python3
"""Regenerate data/sample_prices.csv (synthetic hourly DA/RT prices).

The series is deterministic: a daily day-ahead shape plus seeded residuals
whose spread varies by hour of day, with occasional evening spikes and a
few negative morning prices.  38 days ending 2024-02-07 23:00.
"""

from datetime import datetime, timedelta
from pathlib import Path

import numpy as np


def main() -> None:
    rng = np.random.default_rng(20240101)
    start = datetime(2024, 1, 1, 0, 0)
    n_days = 38
    rows = []
    hour_sigma = 4.0 + 8.0 * np.exp(-0.5 * ((np.arange(24) - 18.0) / 3.0) ** 2)
    for day in range(n_days):
        weekday_lift = 4.0 if (start + timedelta(days=day)).weekday() < 5 else 0.0
        for hour in range(24):
            stamp = start + timedelta(days=day, hours=hour)
            da = (
                35.0
                + 12.0 * np.sin(2.0 * np.pi * (hour - 9.0) / 24.0)
                + weekday_lift
                + rng.normal(0.0, 1.5)
            )
            residual = rng.normal(0.0, hour_sigma[hour])
            if hour in (17, 18, 19) and rng.random() < 0.04:
                residual += rng.uniform(40.0, 120.0)  # evening spike
            if hour in (2, 3, 4) and rng.random() < 0.02:
                residual -= rng.uniform(30.0, 60.0)  # negative-price dip
            rt = da + residual
            rows.append(f"{stamp.isoformat()},{da:.2f},{rt:.2f}")
    out = Path(__file__).resolve().parents[1] / "data" / "sample_prices.csv"
    out.parent.mkdir(exist_ok=True)
    out.write_text("timestamp,da,rt\n" + "\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
