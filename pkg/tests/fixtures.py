"""Hand-built datasets with known ground truth."""

import numpy as np

from buildevo.data import BuildingMetadata, EnergyDataset, MeterSeries, WeatherGrid, local_calendar

TZ = "America/Chicago"
START = "2017-03-06T06:00:00"  # a Monday, local midnight


def grid(n, start=START):
    return (np.datetime64(start, "s") + np.arange(n) * np.timedelta64(1, "h")).astype("datetime64[s]")


def weather(site, ts, seed=0, **overrides):
    rng = np.random.default_rng(seed)
    cal = local_calendar(ts, TZ)
    n = len(ts)
    cols = {
        "air_temperature": 15 + 8 * np.sin(2 * np.pi * (cal["hour"] - 9) / 24) + rng.normal(0, 1.5, n),
        "humidity": 50 + rng.normal(0, 5, n),
        "wind_speed": np.abs(rng.normal(3, 1, n)),
        "solar_irradiance": np.maximum(0.0, 700 * np.sin(np.pi * (cal["hour"] - 6) / 14)) * ((cal["hour"] >= 6) & (cal["hour"] < 20)),
    }
    cols.update(overrides)
    return WeatherGrid(site, ts, **cols)


def series(bid, meter, ts, values, missing=()):
    mask = np.ones(len(ts), dtype=bool)
    mask[list(missing)] = False
    return MeterSeries(bid, meter, ts, np.asarray(values, float), mask)


def imputation_fixture(n=240, seed=7):
    """Four gapped series, one per tier, plus fully observed filler series; about 15% of slots missing.

    Returns (dataset, truth) where truth maps series key -> complete ground-truth values
    (None where the expected fill is not a closed form).
    """
    rng = np.random.default_rng(seed)
    ts = grid(n)
    w = weather("S1", ts, seed)
    cal = local_calendar(ts, TZ)
    temp = w.air_temperature
    weekend = (cal["dow"] >= 5).astype(float)
    night = np.flatnonzero(w.solar_irradiance <= 0)
    day = w.solar_irradiance > 0

    buildings = [
        BuildingMetadata("B1", "S1", 50_000.0, 1990, "Office", TZ),
        BuildingMetadata("B2", "S1", 80_000.0, 2001, "Office", TZ),
        BuildingMetadata("B3", "S1", 40_000.0, 1975, "Education", TZ),
        BuildingMetadata("B4", "S1", 45_000.0, 1980, "Education", TZ),
        BuildingMetadata("B5", "S1", 10_000.0, 2010, "Parking", TZ),
    ]
    truth, meters = {}, []

    # rule tier: solar output lost at night only
    solar = np.where(day, 0.05 * w.solar_irradiance, 0.0)
    gaps = rng.choice(night, size=36, replace=False)
    meters.append(series("B1", "solar", ts, solar, gaps))
    truth[("B1", "solar")] = solar

    # model tier: noiseless linear function of model features
    elec = 50 + 2 * temp + 10 * weekend
    gaps = rng.choice(n, size=36, replace=False)
    meters.append(series("B2", "electricity", ts, elec, gaps))
    truth[("B2", "electricity")] = elec

    # donor tier: too few observations to fit, exact multiple of a same-usage neighbour
    donor = 200 + 20 * np.sin(2 * np.pi * cal["hour"] / 24) + rng.normal(0, 3, n)
    target = 2 * donor
    gaps = np.arange(20, 160)
    meters.append(series("B3", "chilledwater", ts, target, gaps))
    meters.append(series("B4", "chilledwater", ts, donor))
    truth[("B3", "chilledwater")] = target

    # interpolation tier: linear in time, short interior gaps then one long gap
    line = 10 + 0.1 * np.arange(n)
    short = [i for i in range(1, 150) if i % 3 != 0]  # 2-hour gaps between observed hours
    long_gap = list(range(160, 200))
    gaps = short[:100] + long_gap
    meters.append(series("B5", "hotwater", ts, line, gaps))
    truth[("B5", "hotwater")] = line

    # fully observed fillers so the overall missing share is about 15%
    for bid, meter in (("B1", "gas"), ("B1", "steam"), ("B2", "gas"), ("B2", "steam"), ("B4", "gas")):
        meters.append(series(bid, meter, ts, 30 + rng.normal(0, 1, n)))

    ds = EnergyDataset(tuple(buildings), {"S1": w}, tuple(meters), (ts[0], ts[-1]), aligned=True)
    return ds, truth


EXOG = ("temp", "humidity", "wind", "irradiance", "hour", "dow", "month", "is_weekend")


def window(history, truth, bid="A", meter="electricity", start=0, **future):
    """A hand-built forecast window; exogenous columns default to zeros."""
    from buildevo.evaluation import ForecastWindow

    history, truth = np.asarray(history, float), np.asarray(truth, float)
    past = {k: np.zeros(len(history)) for k in EXOG}
    fut = {k: np.asarray(future.get(k, np.zeros(len(truth))), float) for k in EXOG}
    return ForecastWindow(bid, meter, start, history, past, truth, fut)


def office(bid="A", usage="Office"):
    return {bid: BuildingMetadata(bid, "S1", 1000.0, 1990, usage, "UTC")}
