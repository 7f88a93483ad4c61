"""Hierarchical gap filling for meter series: rules, regression model, donor buildings, interpolation.

Each tier receives the dataset and the audit produced so far and returns updated copies.
Observed readings are never changed; every filled slot is recorded exactly once.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from buildevo.data import EnergyDataset, MeterSeries, WEATHER_FIELDS, WeatherGrid, local_calendar

logger = logging.getLogger(__name__)

METHODS = ("rule", "model", "donor", "interpolation")

BASE_FEATURES = (
    "intercept",
    "hour_sin",
    "hour_cos",
    "dow_sin",
    "dow_cos",
    "month_sin",
    "month_cos",
    "is_weekend",
    "temp",
    "temp_lag1",
    "temp_lag24",
    "hdd18",
    "cdd18",
    "sqft",
)


class ImputationError(Exception):
    pass


class InsufficientData(ImputationError):
    def __init__(self, observed_count: int, required: int = 168):
        self.observed_count = observed_count
        super().__init__(f"{observed_count} usable observed hours, need {required}")


@dataclass(frozen=True)
class ImputationConfig:
    min_observed: int = 168
    ridge: float = 1e-6
    clamp_factor: float = 3.0
    interp_max_gap: int = 2
    daylight_hours: tuple[int, int] = (6, 20)
    irrigation_winter_rule: bool = False
    holidays: frozenset = frozenset()


DEFAULT_CONFIG = ImputationConfig()


@dataclass(frozen=True)
class ImputationRecord:
    building_id: str
    meter_type: str
    timestamp: str
    method: str
    value: float
    detail: str | None = None

    def to_dict(self) -> dict:
        d = {
            "building_id": self.building_id,
            "meter_type": self.meter_type,
            "timestamp": self.timestamp,
            "method": self.method,
            "value": self.value,
        }
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class ImputationAudit:
    records: list[ImputationRecord] = field(default_factory=list)
    dropped_series: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    # per-series boolean arrays of slots filled by any tier
    filled: dict = field(default_factory=dict, repr=False)

    def copy(self) -> ImputationAudit:
        return ImputationAudit(
            list(self.records),
            list(self.dropped_series),
            list(self.warnings),
            {k: v.copy() for k, v in self.filled.items()},
        )

    def filled_mask(self, series: MeterSeries) -> np.ndarray:
        return self.filled.get(series.key, np.zeros(len(series.mask), dtype=bool))

    def record(self, series: MeterSeries, idx: np.ndarray, values: np.ndarray, method: str, detail=None) -> None:
        assert method in METHODS
        mask = self.filled.setdefault(series.key, np.zeros(len(series.mask), dtype=bool))
        mask[idx] = True
        for i, v in zip(idx.tolist(), values.tolist()):
            self.records.append(
                ImputationRecord(series.building_id, series.meter_type, str(series.timestamps[i]), method, float(v), detail)
            )

    def sorted(self) -> ImputationAudit:
        out = self.copy()
        out.records.sort(key=lambda r: (r.building_id, r.meter_type, r.timestamp))
        return out

    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(METHODS, 0)
        for r in self.records:
            out[r.method] += 1
        return out

    def write_jsonl(self, path) -> None:
        with Path(path).open("w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_dict()) + "\n")


def originally_observed(series: MeterSeries, audit: ImputationAudit) -> np.ndarray:
    return series.mask & ~audit.filled_mask(series)


def _fill(series: MeterSeries, idx: np.ndarray, values: np.ndarray) -> MeterSeries:
    new_values = series.values.copy()
    new_mask = series.mask.copy()
    new_values[idx] = values
    new_mask[idx] = True
    return series.with_values(new_values, new_mask)


# ---------------------------------------------------------------------------
# features


def _lagged(x: np.ndarray, k: int) -> np.ndarray:
    idx = np.maximum(np.arange(len(x)) - k, 0)
    return x[idx]


def feature_matrix(ds: EnergyDataset, building_id: str, config: ImputationConfig = DEFAULT_CONFIG):
    """Feature rows for every grid hour of one building. Returns (X, names).

    Weather gaps propagate as NaN; callers drop non-finite rows.
    """
    b = ds.building(building_id)
    grid = ds.grid
    cal = local_calendar(grid, b.timezone)
    temp = np.asarray(ds.weather_for(building_id).air_temperature, float)
    hour, dow, month = cal["hour"], cal["dow"], cal["month"]
    cols = {
        "intercept": np.ones(len(grid)),
        "hour_sin": np.sin(2 * np.pi * hour / 24),
        "hour_cos": np.cos(2 * np.pi * hour / 24),
        "dow_sin": np.sin(2 * np.pi * dow / 7),
        "dow_cos": np.cos(2 * np.pi * dow / 7),
        "month_sin": np.sin(2 * np.pi * (month - 1) / 12),
        "month_cos": np.cos(2 * np.pi * (month - 1) / 12),
        "is_weekend": (dow >= 5).astype(float),
        "temp": temp,
        "temp_lag1": _lagged(temp, 1),
        "temp_lag24": _lagged(temp, 24),
        "hdd18": np.maximum(0.0, 18.0 - temp),
        "cdd18": np.maximum(0.0, temp - 18.0),
        "sqft": np.full(len(grid), np.nan if b.sqft is None else float(b.sqft)),
    }
    if config.holidays:
        days = {np.datetime64(d, "D") for d in config.holidays}
        cols["is_holiday"] = np.array([d in days for d in cal["date"]], dtype=float)
    for usage in sorted({x.primary_space_usage for x in ds.buildings}):
        cols[f"usage={usage}"] = np.full(len(grid), float(b.primary_space_usage == usage))
    names = list(cols)
    return np.column_stack([cols[n] for n in names]), names


@dataclass
class LinearModel:
    """Ridge-damped least squares over a subset of linearly independent features."""

    feature_names: list[str]
    coef: np.ndarray
    kept: np.ndarray
    n_train: int

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.feature_names.index(name)])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X[:, self.kept] @ self.coef[self.kept]


def _independent_columns(X: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Greedy left-to-right selection of columns not spanned by earlier kept ones."""
    keep = np.zeros(X.shape[1], dtype=bool)
    basis: list[np.ndarray] = []
    for j in range(X.shape[1]):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if not np.isfinite(norm) or norm == 0:
            continue
        r = col.copy()
        for _ in range(2):  # re-orthogonalise once for stability
            for q in basis:
                r -= (q @ r) * q
        rn = np.linalg.norm(r)
        if rn > rtol * norm:
            basis.append(r / rn)
            keep[j] = True
    return keep


def fit_linear(X: np.ndarray, y: np.ndarray, names: list[str], ridge: float = 1e-6) -> LinearModel:
    """Solve min ||Xb - y||^2 + ridge * ||b_{-intercept}||^2 on independent columns.

    Uses the augmented least-squares form of the ridge normal equations for accuracy.
    """
    kept = _independent_columns(X)
    Xk = X[:, kept]
    damp = np.sqrt(ridge) * np.eye(Xk.shape[1])
    kept_names = [n for n, k in zip(names, kept) if k]
    if "intercept" in kept_names:
        i = kept_names.index("intercept")
        damp[i, i] = 0.0
    A = np.vstack([Xk, damp])
    rhs = np.concatenate([y, np.zeros(Xk.shape[1])])
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    coef = np.zeros(X.shape[1])
    coef[kept] = sol
    return LinearModel(list(names), coef, kept, len(y))


def fit_imputation_model(
    ds: EnergyDataset,
    target: tuple[str, str],
    config: ImputationConfig = DEFAULT_CONFIG,
    audit: ImputationAudit | None = None,
) -> LinearModel:
    """Fit the regression tier's model on the target series' observed hours.

    Slots already filled by an earlier tier (per ``audit``) are not training data.
    """
    series = ds.series(*target)
    X, names = feature_matrix(ds, series.building_id, config)
    usable_cols = np.isfinite(X).any(axis=0)
    X = np.where(usable_cols, X, 0.0)
    observed = series.mask if audit is None else originally_observed(series, audit)
    rows = observed & np.isfinite(X).all(axis=1)
    count = int(rows.sum())
    if count < config.min_observed:
        raise InsufficientData(count, config.min_observed)
    return fit_linear(X[rows], series.values[rows], names, config.ridge)


# ---------------------------------------------------------------------------
# tiers


def impute_rules(ds: EnergyDataset, audit: ImputationAudit | None = None, config: ImputationConfig = DEFAULT_CONFIG):
    """Zero-fill slots that are physically zero; drop series with no observations at all."""
    audit = ImputationAudit() if audit is None else audit.copy()
    meters = []
    lo, hi = config.daylight_hours
    for s in ds.meters:
        if not s.mask.any():
            audit.dropped_series.append(s.key)
            audit.warnings.append(f"dropped {s.building_id}/{s.meter_type}: no observations")
            continue
        missing = ~s.mask
        fill = np.zeros_like(missing)
        if s.meter_type in ("solar", "irrigation") and missing.any():
            cal = local_calendar(s.timestamps, ds.building(s.building_id).timezone)
            if s.meter_type == "solar":
                irr = np.asarray(ds.weather_for(s.building_id).solar_irradiance, float)
                known = np.isfinite(irr)
                night = (cal["hour"] < lo) | (cal["hour"] >= hi)
                dark = np.where(known, np.where(known, irr, 1.0) <= 0, night)
                fill = missing & dark
            elif config.irrigation_winter_rule:
                fill = missing & np.isin(cal["month"], (12, 1, 2))
        idx = np.flatnonzero(fill)
        if len(idx):
            zeros = np.zeros(len(idx))
            audit.record(s, idx, zeros, "rule")
            s = _fill(s, idx, zeros)
        meters.append(s)
    return ds.with_meters(meters), audit


def fill_weather_gaps(ds: EnergyDataset) -> EnergyDataset:
    """Linearly interpolate weather gaps in time (nearest value at the edges).

    Columns with no observation at all stay missing.
    """
    weather = {}
    for site, w in ds.weather.items():
        cols = {}
        for f in WEATHER_FIELDS:
            x = np.asarray(w.column(f), float)
            ok = np.isfinite(x)
            if ok.any() and not ok.all():
                pos = np.arange(len(x))
                x = np.interp(pos, pos[ok], x[ok])
            cols[f] = x
        weather[site] = WeatherGrid(site_id=site, timestamps=w.timestamps, **cols)
    return ds.with_weather(weather)


def impute_model(ds: EnergyDataset, audit: ImputationAudit, config: ImputationConfig = DEFAULT_CONFIG):
    """Fill remaining gaps with the series' regression model, clamped to [0, 3 x observed max]."""
    audit = audit.copy()
    meters = []
    for s in ds.meters:
        if s.mask.all():
            meters.append(s)
            continue
        try:
            model = fit_imputation_model(ds, s.key, config, audit)
        except InsufficientData as exc:
            audit.warnings.append(f"model tier skipped {s.building_id}/{s.meter_type}: {exc}")
            meters.append(s)
            continue
        X, _ = feature_matrix(ds, s.building_id, config)
        observed = originally_observed(s, audit)
        ceiling = config.clamp_factor * float(s.values[observed].max())
        missing = ~s.mask
        with np.errstate(invalid="ignore"):
            pred = model.predict(np.where(np.isfinite(X).any(axis=0), X, 0.0))
        idx = np.flatnonzero(missing & np.isfinite(pred))
        if len(idx):
            vals = np.clip(pred[idx], 0.0, max(ceiling, 0.0))
            audit.record(s, idx, vals, "model")
            s = _fill(s, idx, vals)
        meters.append(s)
    return ds.with_meters(meters), audit


def _sqft_distance(a, b) -> float:
    if a.sqft is None or b.sqft is None:
        return math.inf
    return abs(math.log(a.sqft / b.sqft))


def impute_donor(ds: EnergyDataset, audit: ImputationAudit, config: ImputationConfig = DEFAULT_CONFIG):
    """Copy scaled readings from the most similar building on the same site and usage."""
    audit = audit.copy()
    by_type: dict[str, list[MeterSeries]] = {}
    for s in ds.meters:
        by_type.setdefault(s.meter_type, []).append(s)
    meters = []
    for s in ds.meters:
        if s.mask.all():
            meters.append(s)
            continue
        me = ds.building(s.building_id)
        target_obs = originally_observed(s, audit)
        candidates = []
        for d in by_type[s.meter_type]:
            other = ds.building(d.building_id)
            if d.building_id == s.building_id or other.site_id != me.site_id:
                continue
            if other.primary_space_usage != me.primary_space_usage:
                continue
            donor_obs = originally_observed(d, audit)
            joint = target_obs & donor_obs
            if not joint.any():
                continue
            donor_mean = d.values[joint].mean()
            if donor_mean == 0:
                continue
            scale = s.values[joint].mean() / donor_mean
            candidates.append((_sqft_distance(me, other), d.building_id, d, donor_obs, scale))
        candidates.sort(key=lambda c: (c[0], c[1]))
        remaining = ~s.mask
        for *_, d, donor_obs, scale in candidates:
            idx = np.flatnonzero(remaining & donor_obs)
            if not len(idx):
                continue
            vals = d.values[idx] * scale
            audit.record(s, idx, vals, "donor", detail=d.building_id)
            s = _fill(s, idx, vals)
            remaining = ~s.mask
        meters.append(s)
    return ds.with_meters(meters), audit


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) runs of True."""
    padded = np.concatenate([[False], flags, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def impute_interpolate(ds: EnergyDataset, audit: ImputationAudit, config: ImputationConfig = DEFAULT_CONFIG):
    """Linear fill for short interior gaps; hour-of-week means for the rest."""
    audit = audit.copy()
    meters = []
    for s in ds.meters:
        if s.mask.all():
            meters.append(s)
            continue
        known = s.mask
        n = len(known)
        cal = local_calendar(s.timestamps, ds.building(s.building_id).timezone)
        how = cal["dow"] * 24 + cal["hour"]
        sums = np.bincount(how[known], weights=s.values[known], minlength=168)
        counts = np.bincount(how[known], minlength=168)
        overall = s.values[known].mean()
        how_mean = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
        linear_idx, linear_vals, how_idx = [], [], []
        for a, b in _runs(~known):
            if a > 0 and b < n and b - a <= config.interp_max_gap:
                left, right = s.values[a - 1], s.values[b]
                for i in range(a, b):
                    linear_idx.append(i)
                    linear_vals.append(left + (right - left) * (i - (a - 1)) / (b - (a - 1)))
            else:
                how_idx.extend(range(a, b))
        if linear_idx:
            idx = np.array(linear_idx)
            vals = np.array(linear_vals)
            audit.record(s, idx, vals, "interpolation", detail="linear")
            s = _fill(s, idx, vals)
        if how_idx:
            idx = np.array(how_idx)
            vals = how_mean[how[idx]]
            audit.record(s, idx, vals, "interpolation", detail="hour_of_week")
            s = _fill(s, idx, vals)
        meters.append(s)
    return ds.with_meters(meters), audit


def impute_all(ds: EnergyDataset, config: ImputationConfig = DEFAULT_CONFIG):
    """Run every tier in order. The result has no missing meter slots on retained series."""
    ds, audit = impute_rules(ds, None, config)
    ds = fill_weather_gaps(ds)
    ds, audit = impute_model(ds, audit, config)
    ds, audit = impute_donor(ds, audit, config)
    ds, audit = impute_interpolate(ds, audit, config)
    audit = audit.sorted()
    counts = audit.counts()
    logger.info("imputed %d slots %s, dropped %d series", len(audit.records), counts, len(audit.dropped_series))
    return ds, audit
