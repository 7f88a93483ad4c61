import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fixtures import TZ, grid, series, weather, window
from buildevo.data import BuildingMetadata, EnergyDataset
from buildevo.dsl import HeuristicProgram
from buildevo.evaluation import (
    BASELINES,
    LengthMismatch,
    LinearRegressionBaseline,
    SeriesTooShort,
    UnknownBaseline,
    baseline,
    format_triple,
    make_windows,
    mae,
    mape,
    rmse,
    score_heuristic,
    score_predictions,
    window_starts,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)


def test_metric_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert mae([0, 0], [3, -4]) == 3.5
    assert mape([100, 0, 50], [110, 7, 50]) == pytest.approx(5.0)  # zero actual is excluded
    assert mape([0, 0], [1, 2]) == 0.0


def test_metric_input_errors():
    with pytest.raises(LengthMismatch):
        rmse([1, 2], [1])


@settings(max_examples=200)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=60))
def test_metrics_match_oracle(pairs):
    t, p = [a for a, _ in pairs], [b for _, b in pairs]
    assert rmse(t, p) == pytest.approx(oracles.rmse(t, p), rel=1e-9, abs=1e-9)
    assert mae(t, p) == pytest.approx(oracles.mae(t, p), rel=1e-9, abs=1e-9)
    ref = oracles.mape(t, p)
    assert mape(t, p) == (0.0 if math.isnan(ref) else pytest.approx(ref, rel=1e-9))
    assert mae(t, p) <= rmse(t, p) + 1e-9


def test_format_triple():
    assert format_triple(12.345, 1.0, float("nan")) == "12.35 / 1.00 / n/a"


def test_window_counts():
    assert list(window_starts(200, 168, 24, 24)) == [0]
    assert len(window_starts(10, 3, 2, 1)) == 6


def _one_series(values, missing=()):
    ts = grid(len(values))
    b = BuildingMetadata("A", "S1", 1000.0, None, "Office", TZ)
    return EnergyDataset((b,), {"S1": weather("S1", ts)}, (series("A", "electricity", ts, values, missing),), (ts[0], ts[-1]), aligned=True)


def test_windows_chronological_split():
    ds = _one_series(np.arange(100.0))
    split = make_windows(ds, train_frac=0.8, t_obs=10, t_pred=5, stride=5)
    assert [w.start for w in split.train] == list(range(0, 66, 5))
    assert [w.start for w in split.test] == [80, 85]
    w = split.train[1]
    assert list(w.history) == list(range(5, 15)) and list(w.truth) == list(range(15, 20))
    assert set(w.future_exog) >= {"temp", "hour", "is_weekend"}


def test_windows_touching_gaps_are_skipped():
    ds = _one_series(np.arange(100.0), missing=[12])
    starts = [w.start for w in make_windows(ds, t_obs=10, t_pred=5, stride=5).train]
    assert 0 not in starts and 5 not in starts and 10 not in starts and 15 in starts


def test_series_too_short():
    with pytest.raises(SeriesTooShort):
        make_windows(_one_series(np.ones(100)), t_obs=168, t_pred=24)


def test_persistence_matches_oracle(windows, metadata):
    res = score_heuristic(baseline("persistence"), windows, metadata)
    truth, pred = oracles.pooled(windows, oracles.persistence_predictions)
    assert res.J == pytest.approx(oracles.rmse(truth, pred), rel=1e-12)
    assert res.windows_failed == 0 and res.windows_total == len(windows)
    assert set(res.per_building) == {w.building_id for w in windows}


@pytest.mark.parametrize("period", [24, 168])
def test_seasonal_matches_oracle(windows, metadata, period):
    res = score_heuristic(baseline(f"seasonal_naive_{period}"), windows, metadata, objective="mae")
    truth, pred = oracles.pooled(windows, lambda w: oracles.seasonal_predictions(w, period))
    assert res.J == pytest.approx(oracles.mae(truth, pred), rel=1e-12)


def test_score_order_independent(windows, metadata):
    prog = baseline("seasonal_naive_24")
    a = score_heuristic(prog, windows, metadata)
    b = score_heuristic(prog, list(reversed(windows)), metadata)
    assert a.to_dict() == b.to_dict()


def test_failing_share_controls_executability():
    ws = [window([1, 2], [1, 1], start=i) for i in range(10)]
    preds = [np.ones(2)] * 9 + [None]
    assert score_predictions(ws, preds).J == 0.0  # exactly 10% failed is allowed
    preds[0] = None
    res = score_predictions(ws, preds, failure_kinds=["div_zero"] + [None] * 8 + ["domain_error"])
    assert res.J == math.inf and not res.executable
    assert res.failure_kinds == {"div_zero": 1, "domain_error": 1}
    assert res.to_dict()["J"] is None


def test_failed_program_reports_kinds(windows, metadata):
    res = score_heuristic(HeuristicProgram.from_source("segment a { 1 / (hour() - hour()) }"), windows, metadata)
    assert res.J == math.inf and res.failure_kinds == {"div_zero": len(windows)}


def test_baseline_registry():
    assert "roll_mean(48)" in baseline("global_mean", t_obs=48).source
    assert isinstance(baseline("linear_regression"), LinearRegressionBaseline)
    assert len(BASELINES) == 5
    with pytest.raises(UnknownBaseline):
        baseline("prophet")


def test_linear_regression_recovers_linear_series():
    ts = grid(24 * 30)
    w = weather("S1", ts)
    ds = _one_series(5 + 2 * w.air_temperature)
    split = make_windows(ds, t_obs=24, t_pred=24)
    model = LinearRegressionBaseline().fit(ds, split.train)
    assert model.score(split.test).J < 1e-6


def test_better_predictions_lower_error():
    rng = np.random.default_rng(0)
    truth = rng.uniform(10, 20, 50)
    noise = rng.normal(0, 1, 50)
    assert rmse(truth, truth + 0.5 * noise) < rmse(truth, truth + noise)
