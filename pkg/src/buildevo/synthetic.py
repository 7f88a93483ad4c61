"""Synthetic buildings whose load is DSL-expressible, for tests, demos and desk-scale checks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from buildevo.data import BuildingMetadata, EnergyDataset, MeterSeries, WeatherGrid, local_calendar

USAGES = ("Office", "Education", "Lodging/residential")


def synthetic_temperature(n: int, rng: np.random.Generator, hours_local: np.ndarray) -> np.ndarray:
    daily = 6.0 * np.sin(2 * np.pi * (hours_local - 9) / 24)
    drift = np.cumsum(rng.normal(0, 0.15, n))
    drift -= np.linspace(0, drift[-1], n)  # pin the walk so the season does not wander off
    return 22.0 + daily + drift


def make_synthetic_dataset(
    seed: int = 0,
    n_buildings: int = 3,
    days: int = 70,
    noise: float = 2.0,
    start: str = "2016-06-01T04:00:00",
    timezone: str = "America/New_York",
    with_params: bool = False,
):
    """Aligned, fully observed electricity data.

    Each building follows ``base + slope * cdd(18) - weekend_dip * is_weekend() + N(0, noise)``.
    With ``with_params`` the per-building constants are returned alongside.
    """
    rng = np.random.default_rng(seed)
    n = days * 24
    grid = (np.datetime64(start, "s") + np.arange(n) * np.timedelta64(1, "h")).astype("datetime64[s]")
    cal = local_calendar(grid, timezone)
    temp = synthetic_temperature(n, rng, cal["hour"])
    humidity = 60 + 15 * np.cos(2 * np.pi * cal["hour"] / 24)
    wind = np.abs(rng.normal(3, 1, n))
    irradiance = np.maximum(0.0, 800 * np.sin(np.pi * (cal["hour"] - 6) / 14)) * ((cal["hour"] >= 6) & (cal["hour"] < 20))
    weather = {"S1": WeatherGrid("S1", grid, temp, humidity, wind, irradiance)}
    weekend = (cal["dow"] >= 5).astype(float)
    cdd = np.maximum(0.0, temp - 18.0)

    buildings, meters, params = [], [], {}
    for i in range(n_buildings):
        bid = f"B{i + 1}"
        base = float(rng.uniform(60, 140))
        slope = float(rng.uniform(2.0, 4.0))
        dip = float(rng.uniform(10, 25))
        y = base + slope * cdd - dip * weekend + rng.normal(0, noise, n)
        buildings.append(
            BuildingMetadata(bid, "S1", float(rng.integers(20_000, 200_000)), int(rng.integers(1950, 2015)), USAGES[i % len(USAGES)], timezone)
        )
        meters.append(MeterSeries(bid, "electricity", grid, y, np.ones(n, dtype=bool)))
        params[bid] = {"base": base, "cdd_slope": slope, "weekend_dip": dip, "noise": noise}

    ds = EnergyDataset(tuple(buildings), weather, tuple(meters), (grid[0], grid[-1]), aligned=True)
    return (ds, params) if with_params else ds


def write_csv_sources(ds: EnergyDataset, directory) -> dict[str, Path]:
    """Write BDG2-style CSVs (site-local naive timestamps) for an aligned dataset."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"metadata": directory / "metadata.csv", "weather": directory / "weather.csv"}
    pd.DataFrame(
        [
            {
                "building_id": b.building_id,
                "site_id": b.site_id,
                "sqft": b.sqft,
                "yearbuilt": b.year_built,
                "primaryspaceusage": b.primary_space_usage,
                "timezone": b.timezone,
            }
            for b in ds.buildings
        ]
    ).to_csv(paths["metadata"], index=False)

    def local(stamps, tz):
        idx = pd.DatetimeIndex(stamps).tz_localize("UTC").tz_convert(tz).tz_localize(None)
        return idx.strftime("%Y-%m-%d %H:%M:%S")

    site_tz = {}
    for b in sorted(ds.buildings, key=lambda b: b.building_id):
        site_tz.setdefault(b.site_id, b.timezone)
    frames = []
    for site, w in ds.weather.items():
        frames.append(
            pd.DataFrame(
                {
                    "timestamp": local(w.timestamps, site_tz.get(site, "UTC")),
                    "site_id": site,
                    "airTemperature": w.air_temperature,
                    "humidity": w.humidity,
                    "windSpeed": w.wind_speed,
                    "solarIrradiance": w.solar_irradiance,
                }
            )
        )
    pd.concat(frames).to_csv(paths["weather"], index=False)

    by_type: dict[str, list[MeterSeries]] = {}
    for m in ds.meters:
        by_type.setdefault(m.meter_type, []).append(m)
    for meter_type, series in by_type.items():
        tz = ds.building(series[0].building_id).timezone
        cols = {"timestamp": local(series[0].timestamps, tz)}
        for m in series:
            cols[m.building_id] = np.where(m.mask, m.values, np.nan)
        path = directory / f"{meter_type}.csv"
        pd.DataFrame(cols).to_csv(path, index=False)
        paths[meter_type] = path
    return paths
