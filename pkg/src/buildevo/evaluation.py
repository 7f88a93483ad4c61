"""Forecast task construction, error metrics, heuristic scoring and reference baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from buildevo.data import EnergyDataset, local_calendar
from buildevo.dsl import HeuristicProgram, Lineage, run_batch
from buildevo.dsl.interpreter import NODE_BUDGET, group_by_shape
from buildevo.imputation import LinearModel, feature_matrix, fit_linear

OBJECTIVES = ("rmse", "mae", "mape")
MAPE_EPS = 1e-6
MAX_FAIL_FRAC = 0.1


class EvaluationError(ValueError):
    pass


class SeriesTooShort(EvaluationError):
    def __init__(self, building_id: str, meter_type: str):
        self.building_id = building_id
        self.meter_type = meter_type
        super().__init__(f"series {building_id}/{meter_type} too short for one window in each split")


class LengthMismatch(EvaluationError):
    pass


class UnknownBaseline(EvaluationError):
    pass


@dataclass(frozen=True, eq=False)
class ForecastWindow:
    """One forecasting instance: T_obs hours of history, T_pred hours to predict."""

    building_id: str
    meter_type: str
    start: int
    history: np.ndarray
    history_exog: Mapping[str, np.ndarray]
    truth: np.ndarray
    future_exog: Mapping[str, np.ndarray]

    @property
    def t_obs(self) -> int:
        return len(self.history)

    @property
    def t_pred(self) -> int:
        return len(self.truth)

    @property
    def window_id(self) -> str:
        return f"{self.building_id}|{self.meter_type}|{self.start:08d}"


@dataclass
class WindowSplit:
    train: list[ForecastWindow]
    test: list[ForecastWindow]


def _exogenous(ds: EnergyDataset, building_id: str) -> dict[str, np.ndarray]:
    w = ds.weather_for(building_id)
    cal = local_calendar(ds.grid, ds.building(building_id).timezone)
    return {
        "temp": np.asarray(w.air_temperature, float),
        "humidity": np.asarray(w.humidity, float),
        "wind": np.asarray(w.wind_speed, float),
        "irradiance": np.asarray(w.solar_irradiance, float),
        "hour": cal["hour"].astype(float),
        "dow": cal["dow"].astype(float),
        "month": cal["month"].astype(float),
        "is_weekend": (cal["dow"] >= 5).astype(float),
    }


def window_starts(length: int, t_obs: int, t_pred: int, stride: int) -> range:
    return range(0, length - (t_obs + t_pred) + 1, stride)


def make_windows(
    ds: EnergyDataset,
    train_frac: float = 0.8,
    t_obs: int = 168,
    t_pred: int = 24,
    stride: int = 24,
    buildings: Iterable[str] | None = None,
    meter_types: Iterable[str] | None = None,
) -> WindowSplit:
    """Chronological train/test split per series, then sliding windows inside each part.

    Future exogenous rows are the recorded weather (perfect foresight). Windows that touch
    an unobserved meter hour are skipped.
    """
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must be in (0, 1)")
    if t_obs < 1 or t_pred < 1 or stride < 1:
        raise ValueError("t_obs, t_pred and stride must be positive")
    wanted_b = set(buildings) if buildings is not None else None
    wanted_m = set(meter_types) if meter_types is not None else None
    exog_cache: dict[str, dict] = {}
    split = WindowSplit([], [])
    for s in ds.meters:
        if (wanted_b is not None and s.building_id not in wanted_b) or (wanted_m is not None and s.meter_type not in wanted_m):
            continue
        exog = exog_cache.setdefault(s.building_id, _exogenous(ds, s.building_id))
        n = len(s.values)
        cut = math.floor(train_frac * n)
        for lo, hi, bucket in ((0, cut, split.train), (cut, n, split.test)):
            if hi - lo < t_obs + t_pred:
                raise SeriesTooShort(s.building_id, s.meter_type)
            for off in window_starts(hi - lo, t_obs, t_pred, stride):
                a = lo + off
                mid, end = a + t_obs, a + t_obs + t_pred
                if not s.mask[a:end].all():
                    continue
                bucket.append(
                    ForecastWindow(
                        building_id=s.building_id,
                        meter_type=s.meter_type,
                        start=a,
                        history=s.values[a:mid],
                        history_exog={k: v[a:mid] for k, v in exog.items()},
                        truth=s.values[mid:end],
                        future_exog={k: v[mid:end] for k, v in exog.items()},
                    )
                )
    return split


# ---------------------------------------------------------------------------
# metrics


def _pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth has {truth.size} values, prediction {pred.size}")
    if truth.size == 0:
        raise EvaluationError("metrics need at least one value")
    return truth, pred


def rmse(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    return float(np.sqrt(np.mean((truth - pred) ** 2)))


def mae(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    return float(np.mean(np.abs(truth - pred)))


def mape(truth, pred) -> float:
    """Percent error over actuals with |truth| > 1e-6; 0 when none qualify."""
    truth, pred = _pair(truth, pred)
    keep = np.abs(truth) > MAPE_EPS
    if not keep.any():
        return 0.0
    return float(100.0 * np.mean(np.abs(truth[keep] - pred[keep]) / np.abs(truth[keep])))


METRICS = {"rmse": rmse, "mae": mae, "mape": mape}


def format_triple(mape_v: float, rmse_v: float, mae_v: float) -> str:
    """``MAPE / RMSE / MAE`` with two decimals."""
    return " / ".join("n/a" if not np.isfinite(v) else f"{v:.2f}" for v in (mape_v, rmse_v, mae_v))


@dataclass
class EvaluationResult:
    J: float
    rmse: float
    mae: float
    mape: float
    windows_total: int
    windows_failed: int
    per_building: dict[str, dict[str, float]] = field(default_factory=dict)
    objective: str = "rmse"
    failure_kinds: dict[str, int] = field(default_factory=dict)

    @property
    def executable(self) -> bool:
        return math.isfinite(self.J)

    def triple(self) -> str:
        return format_triple(self.mape, self.rmse, self.mae)

    def to_dict(self) -> dict:
        def num(v):
            return float(v) if math.isfinite(v) else None

        return {
            "J": num(self.J),
            "objective": self.objective,
            "rmse": num(self.rmse),
            "mae": num(self.mae),
            "mape": num(self.mape),
            "windows_total": self.windows_total,
            "windows_failed": self.windows_failed,
            "failure_kinds": dict(sorted(self.failure_kinds.items())),
            "per_building": {b: {k: num(v) for k, v in m.items()} for b, m in sorted(self.per_building.items())},
        }


def _triple(truth: np.ndarray, pred: np.ndarray) -> dict[str, float]:
    return {"rmse": rmse(truth, pred), "mae": mae(truth, pred), "mape": mape(truth, pred)}


def score_predictions(
    windows: Sequence[ForecastWindow],
    predictions: Sequence[np.ndarray | None],
    objective: str = "rmse",
    failure_kinds: Sequence[str | None] | None = None,
    max_fail_frac: float = MAX_FAIL_FRAC,
) -> EvaluationResult:
    """Pool (truth, prediction) pairs of successful windows in window-id order."""
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if not windows:
        raise EvaluationError("no windows to score")
    order = sorted(range(len(windows)), key=lambda i: windows[i].window_id)
    kinds: dict[str, int] = {}
    truths, preds, owners = [], [], []
    failed = 0
    for i in order:
        p = predictions[i]
        if p is None:
            failed += 1
            if failure_kinds is not None and failure_kinds[i]:
                kinds[failure_kinds[i]] = kinds.get(failure_kinds[i], 0) + 1
            continue
        truths.append(windows[i].truth)
        preds.append(p)
        owners.append(windows[i].building_id)
    total = len(windows)
    nan = float("nan")
    if not truths:
        return EvaluationResult(math.inf, nan, nan, nan, total, failed, {}, objective, kinds)
    t_all = np.concatenate(truths)
    p_all = np.concatenate(preds)
    pooled = _triple(t_all, p_all)
    per_building = {}
    for b in sorted(set(owners)):
        sel = [j for j, o in enumerate(owners) if o == b]
        per_building[b] = _triple(np.concatenate([truths[j] for j in sel]), np.concatenate([preds[j] for j in sel]))
    J = pooled[objective] if failed / total <= max_fail_frac else math.inf
    return EvaluationResult(J, pooled["rmse"], pooled["mae"], pooled["mape"], total, failed, per_building, objective, kinds)


def predict_windows(program, windows: Sequence[ForecastWindow], metadata: Mapping, budget: int = NODE_BUDGET):
    """Predictions (or None) and failure kinds (or None) per window."""
    preds: list = [None] * len(windows)
    kinds: list = [None] * len(windows)
    for idx in group_by_shape(windows).values():
        res = run_batch(program, [windows[i] for i in idx], metadata, budget)
        for j, i in enumerate(idx):
            if res.failures[j] is None:
                preds[i] = res.predictions[j]
            else:
                kinds[i] = res.failures[j].kind
    return preds, kinds


def score_heuristic(
    program,
    windows: Sequence[ForecastWindow],
    metadata: Mapping,
    objective: str = "rmse",
    max_fail_frac: float = MAX_FAIL_FRAC,
) -> EvaluationResult:
    """Score a heuristic over windows. More than 10% failed windows makes J infinite."""
    preds, kinds = predict_windows(program, windows, metadata)
    return score_predictions(windows, preds, objective, kinds, max_fail_frac)


# ---------------------------------------------------------------------------
# baselines

BASELINES = ("persistence", "seasonal_naive_24", "seasonal_naive_168", "global_mean", "linear_regression")


def baseline(name: str, t_obs: int = 168):
    """DSL program for the naive baselines; a LinearRegressionBaseline for ``linear_regression``."""
    sources = {
        "persistence": "segment base { lag(1) }",
        "seasonal_naive_24": "segment base { lag(24) }",
        "seasonal_naive_168": "segment base { lag(168) }",
        "global_mean": f"segment base {{ roll_mean({t_obs}) }}",
    }
    if name in sources:
        return HeuristicProgram.from_source(sources[name], id=name, lineage=Lineage("seed"))
    if name == "linear_regression":
        return LinearRegressionBaseline()
    raise UnknownBaseline(f"unknown baseline {name!r}; choose from {', '.join(BASELINES)}")


class LinearRegressionBaseline:
    """Per-series least squares on calendar/weather/metadata features, fitted on training hours."""

    def __init__(self, ridge: float = 1e-6):
        self.ridge = ridge
        self.models: dict[tuple[str, str], LinearModel] = {}
        self._features: dict[str, np.ndarray] = {}
        self._ds: EnergyDataset | None = None

    def _X(self, building_id: str) -> np.ndarray:
        if building_id not in self._features:
            X, self._names = feature_matrix(self._ds, building_id)
            self._features[building_id] = np.where(np.isfinite(X).any(axis=0), X, 0.0)
        return self._features[building_id]

    def fit(self, ds: EnergyDataset, windows: Sequence[ForecastWindow]) -> LinearRegressionBaseline:
        self._ds = ds
        self._features.clear()
        rows: dict[tuple[str, str], set[int]] = {}
        for w in windows:
            rows.setdefault((w.building_id, w.meter_type), set()).update(range(w.start, w.start + w.t_obs + w.t_pred))
        for key, idx in sorted(rows.items()):
            idx = np.array(sorted(idx))
            X = self._X(key[0])[idx]
            y = ds.series(*key).values[idx]
            ok = np.isfinite(X).all(axis=1) & np.isfinite(y)
            self.models[key] = fit_linear(X[ok], y[ok], self._names, self.ridge)
        return self

    def predict(self, window: ForecastWindow) -> np.ndarray | None:
        model = self.models.get((window.building_id, window.meter_type))
        if model is None:
            return None
        a = window.start + window.t_obs
        pred = model.predict(self._X(window.building_id)[a : a + window.t_pred])
        return pred if np.all(np.isfinite(pred)) else None

    def score(self, windows: Sequence[ForecastWindow], objective: str = "rmse") -> EvaluationResult:
        preds = [self.predict(w) for w in windows]
        return score_predictions(windows, preds, objective, ["unfitted" if p is None else None for p in preds])
