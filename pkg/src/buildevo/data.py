"""Loading, validation and hourly alignment of building metadata, weather and meter data."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np
import pandas as pd

from buildevo import METER_TYPES

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

METADATA_COLUMNS = ("building_id", "site_id", "sqft", "yearbuilt", "primaryspaceusage", "timezone")
WEATHER_REQUIRED = ("timestamp", "site_id", "airTemperature")
# csv column -> WeatherRecord field
WEATHER_COLUMNS = {
    "airTemperature": "air_temperature",
    "humidity": "humidity",
    "windSpeed": "wind_speed",
    "solarIrradiance": "solar_irradiance",
}
WEATHER_FIELDS = tuple(WEATHER_COLUMNS.values())

_HOUR = np.timedelta64(1, "h")


class DataError(Exception):
    """Base class for dataset loading and validation failures."""


class MissingColumn(DataError):
    def __init__(self, name: str, path: str | Path | None = None):
        self.name = name
        self.path = str(path) if path is not None else None
        where = f" in {self.path}" if self.path else ""
        super().__init__(f"missing column {name!r}{where}")


class UnresolvedSite(DataError):
    def __init__(self, building_id: str, site_id: str | None = None):
        self.building_id = building_id
        self.site_id = site_id
        super().__init__(f"building {building_id!r} refers to site {site_id!r} absent from weather data")


class EmptyDataset(DataError):
    pass


class NonMonotonicTimestamps(DataError):
    def __init__(self, series_id: str):
        self.series_id = series_id
        super().__init__(f"timestamps decrease within series {series_id}")


class NotAligned(DataError):
    pass


@dataclass(frozen=True)
class BuildingMetadata:
    building_id: str
    site_id: str
    sqft: float | None
    year_built: int | None
    primary_space_usage: str
    timezone: str


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class WeatherGrid:
    """Weather for one site; NaN marks an unobserved value."""

    site_id: str
    timestamps: np.ndarray
    air_temperature: np.ndarray
    humidity: np.ndarray
    wind_speed: np.ndarray
    solar_irradiance: np.ndarray

    def __post_init__(self):
        for name in ("timestamps",) + WEATHER_FIELDS:
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def __eq__(self, other):
        if not isinstance(other, WeatherGrid):
            return NotImplemented
        return (
            self.site_id == other.site_id
            and np.array_equal(self.timestamps, other.timestamps)
            and all(np.array_equal(self.column(f), other.column(f), equal_nan=True) for f in WEATHER_FIELDS)
        )


@dataclass(frozen=True, eq=False)
class MeterSeries:
    """One meter's readings. ``mask`` is the source of truth; values under mask=False are NaN."""

    building_id: str
    meter_type: str
    timestamps: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.meter_type not in METER_TYPES:
            raise ValueError(f"unknown meter type {self.meter_type!r}")
        n = len(self.timestamps)
        if len(self.values) != n or len(self.mask) != n:
            raise ValueError("timestamps, values and mask must have equal length")
        mask = np.asarray(self.mask, dtype=bool)
        values = np.where(mask, np.asarray(self.values, dtype=float), np.nan)
        if not np.all(np.isfinite(values[mask])):
            raise ValueError(f"non-finite observed value in {self.key}")
        object.__setattr__(self, "timestamps", _readonly(self.timestamps))
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))

    @property
    def key(self) -> tuple[str, str]:
        return (self.building_id, self.meter_type)

    @property
    def n_missing(self) -> int:
        return int(len(self.mask) - self.mask.sum())

    def with_values(self, values: np.ndarray, mask: np.ndarray) -> MeterSeries:
        return replace(self, values=values, mask=mask)

    def __eq__(self, other):
        if not isinstance(other, MeterSeries):
            return NotImplemented
        return (
            self.key == other.key
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.values[self.mask], other.values[other.mask])
        )


@dataclass
class LoadReport:
    dropped_rows: dict[str, int] = field(default_factory=dict)
    unknown_buildings: list[str] = field(default_factory=list)

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped_rows.values())


@dataclass(frozen=True)
class EnergyDataset:
    buildings: tuple[BuildingMetadata, ...]
    weather: Mapping[str, WeatherGrid]
    meters: tuple[MeterSeries, ...]
    span: tuple[np.datetime64, np.datetime64]
    aligned: bool = False
    report: LoadReport | None = field(default=None, compare=False)

    @cached_property
    def _building_index(self) -> dict[str, BuildingMetadata]:
        return {b.building_id: b for b in self.buildings}

    @cached_property
    def _series_index(self) -> dict[tuple[str, str], MeterSeries]:
        return {m.key: m for m in self.meters}

    def building(self, building_id: str) -> BuildingMetadata:
        return self._building_index[building_id]

    def series(self, building_id: str, meter_type: str) -> MeterSeries:
        return self._series_index[(building_id, meter_type)]

    def weather_for(self, building_id: str) -> WeatherGrid:
        return self.weather[self.building(building_id).site_id]

    @property
    def metadata_index(self) -> dict[str, BuildingMetadata]:
        return dict(self._building_index)

    @property
    def grid(self) -> np.ndarray:
        if not self.aligned:
            raise NotAligned("dataset has no common hourly grid before alignment")
        return next(iter(self.weather.values())).timestamps if self.weather else self.meters[0].timestamps

    def with_meters(self, meters) -> EnergyDataset:
        return replace(self, meters=tuple(meters))

    def with_weather(self, weather: Mapping[str, WeatherGrid]) -> EnergyDataset:
        return replace(self, weather=dict(weather))


# ---------------------------------------------------------------------------
# CSV loading


def _parse_timestamps(col: pd.Series) -> pd.Series:
    ts = pd.to_datetime(col, errors="coerce", format="ISO8601")
    if getattr(ts.dt, "tz", None) is not None:
        ts = ts.dt.tz_convert("UTC").dt.tz_localize(None)
    return ts


def _require(df: pd.DataFrame, columns, path) -> None:
    for name in columns:
        if name not in df.columns:
            raise MissingColumn(name, path)


def _valid_timezone(name) -> bool:
    if not isinstance(name, str) or not name:
        return False
    try:
        ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError):
        return False
    return True


def _load_metadata(path, report: LoadReport) -> list[BuildingMetadata]:
    df = pd.read_csv(path, dtype=str)
    _require(df, METADATA_COLUMNS, path)
    sqft = pd.to_numeric(df["sqft"], errors="coerce")
    year = pd.to_numeric(df["yearbuilt"], errors="coerce")
    buildings: dict[str, BuildingMetadata] = {}
    dropped = 0
    for i, row in df.iterrows():
        bid, site, tz = row["building_id"], row["site_id"], row["timezone"]
        if not isinstance(bid, str) or not isinstance(site, str) or not _valid_timezone(tz) or bid in buildings:
            dropped += 1
            continue
        area = float(sqft[i])
        usage = row["primaryspaceusage"]
        buildings[bid] = BuildingMetadata(
            building_id=bid,
            site_id=site,
            sqft=area if np.isfinite(area) and area > 0 else None,
            year_built=int(year[i]) if np.isfinite(year[i]) else None,
            primary_space_usage=usage if isinstance(usage, str) else "unknown",
            timezone=tz,
        )
    report.dropped_rows[str(path)] = dropped
    return list(buildings.values())


def _load_weather(path, report: LoadReport) -> dict[str, WeatherGrid]:
    df = pd.read_csv(path, dtype={"site_id": str, "timestamp": str})
    _require(df, WEATHER_REQUIRED, path)
    ts = _parse_timestamps(df["timestamp"])
    ok = ts.notna() & df["site_id"].notna()
    report.dropped_rows[str(path)] = int((~ok).sum())
    df = df.loc[ok]
    ts = ts[ok]
    grids = {}
    for site, idx in df.groupby("site_id", sort=True).groups.items():
        cols = {}
        for csv_name, fname in WEATHER_COLUMNS.items():
            if csv_name in df.columns:
                cols[fname] = pd.to_numeric(df.loc[idx, csv_name], errors="coerce").to_numpy(float)
            else:
                cols[fname] = np.full(len(idx), np.nan)
        grids[site] = WeatherGrid(
            site_id=site, timestamps=ts[idx].to_numpy("datetime64[s]"), **cols
        )
    return grids


def _load_meter(path, meter_type: str, known: set[str], report: LoadReport) -> list[MeterSeries]:
    df = pd.read_csv(path, dtype={"timestamp": str})
    _require(df, ("timestamp",), path)
    ts = _parse_timestamps(df["timestamp"])
    ok = ts.notna()
    report.dropped_rows[str(path)] = int((~ok).sum())
    stamps = ts[ok].to_numpy("datetime64[s]")
    out = []
    for col in df.columns:
        if col == "timestamp":
            continue
        if col not in known:
            report.unknown_buildings.append(col)
            continue
        values = pd.to_numeric(df.loc[ok, col], errors="coerce").to_numpy(float)
        mask = np.isfinite(values)
        out.append(MeterSeries(col, meter_type, stamps, values, mask))
    return out


def load_dataset(metadata_path, weather_path, meter_paths: Mapping[str, str | Path]) -> EnergyDataset:
    """Read the three CSV sources into an unaligned dataset (timestamps still site-local).

    Rows with malformed timestamps are dropped and counted in ``dataset.report``.
    """
    report = LoadReport()
    buildings = _load_metadata(metadata_path, report)
    weather = _load_weather(weather_path, report)
    for b in buildings:
        if b.site_id not in weather:
            raise UnresolvedSite(b.building_id, b.site_id)

    known = {b.building_id for b in buildings}
    meters: list[MeterSeries] = []
    for meter_type, path in sorted(meter_paths.items()):
        if meter_type not in METER_TYPES:
            raise ValueError(f"unknown meter type {meter_type!r}")
        meters.extend(_load_meter(path, meter_type, known, report))
    if not buildings or not meters:
        raise EmptyDataset("no buildings or meter series could be loaded")
    if report.total_dropped:
        logger.info("dropped %d malformed rows", report.total_dropped)

    sites = {b.site_id for b in buildings}
    all_ts = np.concatenate([m.timestamps for m in meters])
    span = (all_ts.min(), all_ts.max()) if len(all_ts) else (np.datetime64("NaT"), np.datetime64("NaT"))
    return EnergyDataset(
        buildings=tuple(buildings),
        weather={s: weather[s] for s in sorted(sites)},
        meters=tuple(meters),
        span=span,
        aligned=False,
        report=report,
    )


# ---------------------------------------------------------------------------
# alignment


def _utc_hours(stamps: np.ndarray, tz: str, series_id: str) -> np.ndarray:
    """Localize naive wall-clock stamps to ``tz`` and return integer UTC epoch hours."""
    stamps = np.asarray(stamps, dtype="datetime64[s]")
    if len(stamps) > 1 and np.any(np.diff(stamps) < np.timedelta64(0, "s")):
        raise NonMonotonicTimestamps(series_id)
    if tz == "UTC":
        secs = stamps.astype(np.int64)
    else:
        idx = pd.DatetimeIndex(stamps).tz_localize(
            tz, ambiguous=np.zeros(len(stamps), dtype=bool), nonexistent="shift_forward"
        )
        secs = idx.tz_convert("UTC").tz_localize(None).to_numpy("datetime64[s]").astype(np.int64)
    return np.floor_divide(secs, 3600)


def _hourly_mean(hours: np.ndarray, values: np.ndarray, start: int, n: int) -> np.ndarray:
    inside = (hours >= start) & (hours < start + n) & np.isfinite(values)
    idx = (hours[inside] - start).astype(np.intp)
    sums = np.bincount(idx, weights=values[inside], minlength=n)
    counts = np.bincount(idx, minlength=n)
    out = np.full(n, np.nan)
    np.divide(sums, counts, out=out, where=counts > 0)
    return out


def align_and_resample(raw: EnergyDataset) -> EnergyDataset:
    """Put every meter and weather series on one hourly UTC grid.

    Naive meter timestamps are read in the building's timezone and weather timestamps
    in the timezone of the site's first building. Sub-hourly values are averaged.
    Hours with no reading get mask=False. Applying this to an aligned dataset is a no-op.
    """
    meta = {b.building_id: b for b in raw.buildings}
    site_tz = {}
    for b in sorted(raw.buildings, key=lambda b: b.building_id):
        site_tz.setdefault(b.site_id, b.timezone)

    def tz_of_building(bid):
        return "UTC" if raw.aligned else meta[bid].timezone

    meter_hours = [
        _utc_hours(m.timestamps, tz_of_building(m.building_id), f"{m.building_id}/{m.meter_type}") for m in raw.meters
    ]
    nonempty = [h for h in meter_hours if len(h)]
    if not nonempty:
        raise EmptyDataset("no meter timestamps to align")
    start = int(min(h.min() for h in nonempty))
    end = int(max(h.max() for h in nonempty))
    n = end - start + 1
    grid = (np.datetime64(start, "h") + np.arange(n) * _HOUR).astype("datetime64[s]")
    grid = _readonly(grid)

    meters = []
    for m, hours in zip(raw.meters, meter_hours):
        values = np.where(m.mask, m.values, np.nan)
        hourly = _hourly_mean(hours, values, start, n)
        meters.append(MeterSeries(m.building_id, m.meter_type, grid, hourly, np.isfinite(hourly)))

    weather = {}
    for site, w in sorted(raw.weather.items()):
        tz = "UTC" if raw.aligned else site_tz.get(site, "UTC")
        hours = _utc_hours(w.timestamps, tz, f"weather/{site}")
        cols = {f: _hourly_mean(hours, w.column(f), start, n) for f in WEATHER_FIELDS}
        weather[site] = WeatherGrid(site_id=site, timestamps=grid, **cols)

    return EnergyDataset(
        buildings=raw.buildings,
        weather=weather,
        meters=tuple(meters),
        span=(grid[0], grid[-1]),
        aligned=True,
        report=raw.report,
    )


def local_calendar(utc: np.ndarray, tz: str) -> dict[str, np.ndarray]:
    """Local hour, day-of-week (Mon=0), month and date for UTC grid stamps."""
    idx = pd.DatetimeIndex(np.asarray(utc, dtype="datetime64[s]")).tz_localize("UTC").tz_convert(tz)
    return {
        "hour": idx.hour.to_numpy(np.int64),
        "dow": idx.dayofweek.to_numpy(np.int64),
        "month": idx.month.to_numpy(np.int64),
        "date": idx.tz_localize(None).normalize().to_numpy("datetime64[D]"),
    }


# ---------------------------------------------------------------------------
# missingness


@dataclass
class SeriesMissingness:
    missing_pct: float
    longest_gap: int
    gaps_by_hour_of_day: list[int]


def longest_run(flags: np.ndarray) -> int:
    """Length of the longest run of True values."""
    best = run = 0
    for f in flags:
        run = run + 1 if f else 0
        best = max(best, run)
    return best


def missingness_report(ds: EnergyDataset) -> dict[tuple[str, str], SeriesMissingness]:
    out = {}
    for m in ds.meters:
        missing = ~m.mask
        n = len(missing)
        hours = local_calendar(m.timestamps, ds.building(m.building_id).timezone)["hour"] if n else np.array([], int)
        hist = np.bincount(hours[missing], minlength=24) if n else np.zeros(24, int)
        out[m.key] = SeriesMissingness(
            missing_pct=100.0 * missing.sum() / n if n else 0.0,
            longest_gap=longest_run(missing),
            gaps_by_hour_of_day=[int(c) for c in hist],
        )
    return out


# ---------------------------------------------------------------------------
# canonical JSON form


def _floats_or_null(values: np.ndarray, mask: np.ndarray | None = None) -> list:
    if mask is None:
        mask = np.isfinite(values)
    return [float(v) if ok else None for v, ok in zip(values.tolist(), mask.tolist())]


def _from_floats(items) -> tuple[np.ndarray, np.ndarray]:
    values = np.array([np.nan if v is None else v for v in items], dtype=float)
    return values, np.array([v is not None for v in items], dtype=bool)


def dataset_to_dict(ds: EnergyDataset) -> dict:
    if not ds.aligned:
        raise NotAligned("only aligned datasets have a canonical JSON form")
    grid = ds.grid
    return {
        "schema": SCHEMA_VERSION,
        "start": str(grid[0]),
        "hours": int(len(grid)),
        "buildings": [
            {
                "building_id": b.building_id,
                "site_id": b.site_id,
                "sqft": b.sqft,
                "yearbuilt": b.year_built,
                "primaryspaceusage": b.primary_space_usage,
                "timezone": b.timezone,
            }
            for b in ds.buildings
        ],
        "weather": {
            site: {f: _floats_or_null(w.column(f)) for f in WEATHER_FIELDS} for site, w in ds.weather.items()
        },
        "meters": [
            {"building_id": m.building_id, "meter_type": m.meter_type, "values": _floats_or_null(m.values, m.mask)}
            for m in ds.meters
        ],
    }


def dataset_from_dict(doc: dict) -> EnergyDataset:
    if doc.get("schema") != SCHEMA_VERSION:
        raise DataError(f"unsupported dataset schema {doc.get('schema')!r}")
    n = int(doc["hours"])
    grid = _readonly((np.datetime64(doc["start"], "s") + np.arange(n) * _HOUR).astype("datetime64[s]"))
    buildings = tuple(
        BuildingMetadata(
            building_id=b["building_id"],
            site_id=b["site_id"],
            sqft=b["sqft"],
            year_built=b["yearbuilt"],
            primary_space_usage=b["primaryspaceusage"],
            timezone=b["timezone"],
        )
        for b in doc["buildings"]
    )
    weather = {}
    for site, cols in doc["weather"].items():
        weather[site] = WeatherGrid(site_id=site, timestamps=grid, **{f: _from_floats(cols[f])[0] for f in WEATHER_FIELDS})
    meters = []
    for m in doc["meters"]:
        values, mask = _from_floats(m["values"])
        meters.append(MeterSeries(m["building_id"], m["meter_type"], grid, values, mask))
    if not meters:
        raise EmptyDataset("dataset document has no meter series")
    return EnergyDataset(buildings, weather, tuple(meters), (grid[0], grid[-1]), aligned=True)


def save_dataset(ds: EnergyDataset, path) -> None:
    Path(path).write_text(json.dumps(dataset_to_dict(ds), allow_nan=False))


def read_dataset(path) -> EnergyDataset:
    return dataset_from_dict(json.loads(Path(path).read_text()))
