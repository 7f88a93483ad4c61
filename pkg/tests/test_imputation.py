import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import TZ, grid, imputation_fixture, series, weather
from buildevo.data import BuildingMetadata, EnergyDataset, local_calendar
from buildevo.imputation import (
    ImputationAudit,
    ImputationConfig,
    InsufficientData,
    feature_matrix,
    fill_weather_gaps,
    fit_imputation_model,
    impute_all,
    impute_donor,
    impute_interpolate,
    impute_model,
    impute_rules,
)


def dataset(meters, buildings=None, n=None, **wx):
    n = n or len(meters[0].timestamps)
    ts = meters[0].timestamps
    buildings = buildings or [BuildingMetadata(m.building_id, "S1", 1000.0, None, "Office", TZ) for m in meters]
    uniq = {b.building_id: b for b in buildings}
    return EnergyDataset(tuple(uniq.values()), {"S1": weather("S1", ts, **wx)}, tuple(meters), (ts[0], ts[-1]), aligned=True)


def hour_index(ts, local_hour):
    return int(np.flatnonzero(local_calendar(ts, TZ)["hour"] == local_hour)[0])


def test_solar_night_gap_is_zero_rule():
    ts = grid(48)
    i2 = hour_index(ts, 2)
    i13 = hour_index(ts, 13)
    ds = dataset([series("A", "solar", ts, np.full(48, 5.0), [i2, i13]), series("A", "electricity", ts, np.ones(48), [i2])])
    out, audit = impute_rules(ds)
    solar = out.series("A", "solar")
    assert solar.mask[i2] and solar.values[i2] == 0.0
    assert not solar.mask[i13]  # daylight gap is left to the model tier
    assert not out.series("A", "electricity").mask[i2]
    assert [(r.method, r.value) for r in audit.records] == [("rule", 0.0)]


def test_solar_rule_uses_daylight_proxy_without_irradiance():
    ts = grid(48)
    i3, i12 = hour_index(ts, 3), hour_index(ts, 12)
    ds = dataset([series("A", "solar", ts, np.full(48, 5.0), [i3, i12])], solar_irradiance=np.full(48, np.nan))
    out, _ = impute_rules(ds)
    s = out.series("A", "solar")
    assert s.mask[i3] and not s.mask[i12]


def test_irrigation_rule_only_when_enabled():
    ts = grid(48, "2017-01-10T06:00:00")
    ds = dataset([series("A", "irrigation", ts, np.ones(48), [4, 5])])
    assert impute_rules(ds)[0].series("A", "irrigation").n_missing == 2
    out, _ = impute_rules(ds, None, ImputationConfig(irrigation_winter_rule=True))
    assert out.series("A", "irrigation").n_missing == 0


def test_all_missing_series_dropped():
    ts = grid(24)
    ds = dataset([series("A", "electricity", ts, np.ones(24), range(24)), series("A", "gas", ts, np.ones(24))])
    out, audit = impute_all(ds)
    assert [m.key for m in out.meters] == [("A", "gas")]
    assert audit.dropped_series == [("A", "electricity")]
    assert audit.warnings


def test_feature_cyclical_pairs_on_unit_circle(synth):
    X, names = feature_matrix(synth, "B1")
    for base in ("hour", "dow", "month"):
        s, c = X[:, names.index(f"{base}_sin")], X[:, names.index(f"{base}_cos")]
        assert np.allclose(s**2 + c**2, 1.0, atol=1e-9)
    assert names[0] == "intercept"
    assert "usage=Office" in names


def _linear_ds(values, gaps=()):
    ts = grid(len(values))
    return dataset([series("A", "electricity", ts, values, gaps)])


def test_model_recovers_linear_generator():
    ts = grid(400)
    temp = weather("S1", ts).air_temperature
    ds = _linear_ds(5 + 2 * temp)
    model = fit_imputation_model(ds, ("A", "electricity"))
    assert model.coefficient("intercept") == pytest.approx(5, abs=1e-6)
    assert model.coefficient("temp") == pytest.approx(2, abs=1e-6)


def test_model_on_constant_series():
    ds = _linear_ds(np.full(300, 7.0))
    model = fit_imputation_model(ds, ("A", "electricity"))
    assert model.coefficient("intercept") == pytest.approx(7, abs=1e-6)
    others = np.delete(model.coef, model.feature_names.index("intercept"))
    assert np.abs(others).max() <= 1e-6


def test_model_needs_enough_observations():
    ds = _linear_ds(np.ones(200), gaps=range(10, 200))
    with pytest.raises(InsufficientData) as err:
        fit_imputation_model(ds, ("A", "electricity"))
    assert err.value.observed_count == 10


def test_model_fills_twenty_percent_gaps():
    ts = grid(500)
    temp = weather("S1", ts).air_temperature
    truth = 40 + 3 * temp
    gaps = np.random.default_rng(0).choice(500, 100, replace=False)
    ds = _linear_ds(truth, gaps)
    out, audit = impute_model(ds, ImputationAudit())
    s = out.series("A", "electricity")
    assert s.n_missing == 0
    assert np.abs(s.values - truth).max() < 1e-6
    assert {r.method for r in audit.records} == {"model"}


def test_model_clamps_to_floor_and_ceiling():
    ts = grid(400)
    temp = weather("S1", ts).air_temperature
    y = 20 * (temp - temp.mean())
    lo, hi = int(np.argmin(y)), int(np.argmax(y))
    observed_max_if_hidden = np.delete(y, [lo, hi]).max()
    ds = _linear_ds(y, [lo, hi])
    assert y[lo] < 0
    out, _ = impute_model(ds, ImputationAudit(), ImputationConfig(clamp_factor=0.5))
    s = out.series("A", "electricity")
    assert s.values[lo] == 0.0
    assert s.values[hi] == pytest.approx(0.5 * observed_max_if_hidden)


def _donor_ds(target, donor, gaps, usage_b="Office", sqft=(1000.0, 1100.0)):
    ts = grid(len(target))
    meters = [series("A", "steam", ts, target, gaps), series("B", "steam", ts, donor)]
    buildings = [
        BuildingMetadata("A", "S1", sqft[0], None, "Office", TZ),
        BuildingMetadata("B", "S1", sqft[1], None, usage_b, TZ),
    ]
    return dataset(meters, buildings)


def test_donor_scaling_by_hand():
    # target mean 10 over joint hours, donor mean 20; donor reads 8 at the gap
    target = np.array([5.0, 15.0, 0.0, 10.0])
    donor = np.array([10.0, 30.0, 8.0, 20.0])
    out, audit = impute_donor(_donor_ds(target, donor, [2]), ImputationAudit())
    assert out.series("A", "steam").values[2] == 4.0
    (rec,) = audit.records
    assert rec.method == "donor" and rec.detail == "B"


def test_donor_twin_is_exact():
    rng = np.random.default_rng(3)
    x = rng.uniform(10, 20, 50)
    out, _ = impute_donor(_donor_ds(x, x, [5, 6, 40]), ImputationAudit())
    assert np.array_equal(out.series("A", "steam").values, x)


def test_no_donor_with_other_usage():
    x = np.arange(1.0, 11.0)
    out, audit = impute_donor(_donor_ds(x, x, [4], usage_b="Retail"), ImputationAudit())
    assert out.series("A", "steam").n_missing == 1
    assert not audit.records


def test_donor_prefers_nearest_floor_area():
    ts = grid(6)
    meters = [
        series("A", "gas", ts, np.ones(6), [3]),
        series("B", "gas", ts, np.full(6, 2.0)),
        series("C", "gas", ts, np.full(6, 5.0)),
    ]
    buildings = [
        BuildingMetadata("A", "S1", 1000.0, None, "Office", TZ),
        BuildingMetadata("B", "S1", 9000.0, None, "Office", TZ),
        BuildingMetadata("C", "S1", 1200.0, None, "Office", TZ),
    ]
    _, audit = impute_donor(dataset(meters, buildings), ImputationAudit())
    assert audit.records[0].detail == "C"


def test_interpolation_examples():
    ts = grid(4)
    ds = dataset([series("A", "water", ts[:3], [1.0, 0, 3.0], [1]), series("A", "gas", ts[:3], [1.0, 1.0, 1.0])])
    out, _ = impute_interpolate(ds, ImputationAudit())
    assert out.series("A", "water").values[1] == 2.0
    ds = dataset([series("A", "water", ts, [5.0, 0, 0, 11.0], [1, 2])])
    out, audit = impute_interpolate(ds, ImputationAudit())
    assert list(out.series("A", "water").values) == [5.0, 7.0, 9.0, 11.0]
    assert {r.detail for r in audit.records} == {"linear"}


def test_leading_gap_uses_hour_of_week_means():
    n = 24 * 14
    ts = grid(n, "2017-06-05T05:00:00")  # Monday local midnight, no DST change inside the window
    how = (local_calendar(ts, TZ)["dow"] * 24 + local_calendar(ts, TZ)["hour"]).astype(float)
    values = how + np.repeat([0.0, 10.0], n // 2)  # second week is offset by 10
    ds = dataset([series("A", "water", ts, values, range(30))])
    out, audit = impute_interpolate(ds, ImputationAudit())
    s = out.series("A", "water")
    # only the second week observes those hours of week
    assert np.allclose(s.values[:30], how[:30] + 10.0)
    assert {r.detail for r in audit.records} == {"hour_of_week"}


def test_fully_observed_is_noop(synth):
    out, audit = impute_all(synth)
    assert not audit.records
    assert out.meters == synth.meters


def test_weather_gaps_interpolated():
    ts = grid(5)
    temp = np.array([1.0, np.nan, 3.0, np.nan, np.nan])
    ds = dataset([series("A", "gas", ts, np.ones(5))], air_temperature=temp)
    w = fill_weather_gaps(ds).weather["S1"]
    assert list(w.air_temperature) == [1.0, 2.0, 3.0, 3.0, 3.0]


def test_pipeline_audit_invariants(tmp_path):
    ds, _ = imputation_fixture()
    out, audit = impute_all(ds)
    keys = [(r.building_id, r.meter_type, r.timestamp) for r in audit.records]
    assert len(keys) == len(set(keys))  # each flipped slot recorded once
    assert keys == sorted(keys)
    flipped = sum(int((~a.mask & b.mask).sum()) for a, b in zip(ds.meters, out.meters))
    assert flipped == len(keys)
    for before, after in zip(ds.meters, out.meters):
        assert np.array_equal(after.values[before.mask], before.values[before.mask])
    path = tmp_path / "audit.jsonl"
    audit.write_jsonl(path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == len(keys)
    assert set(rows[0]) >= {"building_id", "meter_type", "timestamp", "method", "value"}


def test_pipeline_is_deterministic():
    ds, _ = imputation_fixture()
    a, audit_a = impute_all(ds)
    b, audit_b = impute_all(ds)
    assert a.meters == b.meters
    assert [r.to_dict() for r in audit_a.records] == [r.to_dict() for r in audit_b.records]


def test_tiers_never_increase_missing():
    ds, _ = imputation_fixture()
    counts = [sum(m.n_missing for m in ds.meters)]
    ds1, audit = impute_rules(ds)
    counts.append(sum(m.n_missing for m in ds1.meters))
    ds1 = fill_weather_gaps(ds1)
    for tier in (impute_model, impute_donor, impute_interpolate):
        ds1, audit = tier(ds1, audit)
        counts.append(sum(m.n_missing for m in ds1.meters))
    assert counts == sorted(counts, reverse=True)
    assert counts[-1] == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), min_size=200, max_size=200), st.integers(0, 2**31))
def test_observed_values_never_change(gap_flags, seed):
    rng = np.random.default_rng(seed)
    ts = grid(200)
    values = rng.uniform(0, 50, 200)
    gaps = [i for i, g in enumerate(gap_flags) if g]
    if len(gaps) == 200:
        gaps = gaps[1:]
    ds = dataset([series("A", "electricity", ts, values, gaps)])
    out, _ = impute_all(ds)
    s = out.series("A", "electricity")
    observed = ds.meters[0].mask
    assert np.array_equal(s.values[observed], values[observed])
    assert s.n_missing == 0
