import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from loadshift.errors import CatalogError, ReadingsError
from loadshift.ingest import (DeviceCatalog, DeviceSpec, HourlyDataset, HourlyEnergy, RawReadings,
                              engineer_features, load_catalog, load_readings, resample_hourly, shift)

T0 = 1_400_000_400 - 1_400_000_400 % 3600  # an hour boundary


def write(tmp_path, text, name="r.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def catalog(*ids, avail=("A",), **kw):
    return DeviceCatalog([DeviceSpec(d, availability=d in avail, **kw) for d in ids])


def energy_of(wh: np.ndarray, ids=("A", "B")) -> HourlyEnergy:
    wh = np.asarray(wh, dtype=float)
    hours = T0 + 3600 * np.arange(len(wh), dtype=np.int64)
    return HourlyEnergy(hours, list(ids), wh, np.zeros(wh.shape, dtype=bool))


# -- load_readings -----------------------------------------------------------------

def test_two_rows_two_devices(tmp_path):
    p = write(tmp_path, "Time,Aggregate,Appliance1,Appliance2\n"
                        f"{T0},30,10,20\n{T0 + 8},31,11,20\n")
    loaded = load_readings(p)
    assert [r.device_id for r in loaded.readings] == ["Appliance1", "Appliance2"]
    assert all(len(r.timestamps) == 2 for r in loaded.readings)
    assert loaded.malformed_rows == 0


def test_empty_file(tmp_path):
    with pytest.raises(ReadingsError, match="no parseable rows"):
        load_readings(write(tmp_path, ""))


def test_header_only_file(tmp_path):
    with pytest.raises(ReadingsError, match="no parseable rows"):
        load_readings(write(tmp_path, "Time,Aggregate,Appliance1\n"))


def test_one_malformed_row_among_100(tmp_path):
    lines = ["Time,Aggregate,Appliance1,Appliance2"]
    for i in range(100):
        a = "oops" if i == 37 else str(5 + i % 3)
        lines.append(f"{T0 + 8 * i},10,{a},4")
    p = write(tmp_path, "\n".join(lines) + "\n")
    # oracle: count rows pandas cannot turn into numbers, independently of the loader
    raw = pd.read_csv(p, dtype=str)
    bad = raw[["Appliance1", "Appliance2"]].apply(pd.to_numeric, errors="coerce").isna().any(axis=1)
    loaded = load_readings(p)
    assert loaded.malformed_rows == int(bad.sum()) == 1
    assert all(len(r.timestamps) == 99 for r in loaded.readings)


def test_negative_and_nonfinite_rows_are_malformed(tmp_path):
    p = write(tmp_path, "Time,Appliance1\n"
                        f"{T0},5\n{T0 + 8},-1\n{T0 + 16},inf\n{T0 + 24},7\n")
    loaded = load_readings(p)
    assert loaded.malformed_rows == 2
    np.testing.assert_array_equal(loaded.readings[0].power, [5, 7])


def test_iso_timestamps(tmp_path):
    p = write(tmp_path, "Time,Appliance1\n2014-03-05 10:00:00,5\n2014-03-05 10:00:08,6\n")
    r = load_readings(p).readings[0]
    assert r.timestamps[0] == pd.Timestamp("2014-03-05 10:00", tz="UTC").value // 10**9
    assert r.timestamps[1] - r.timestamps[0] == 8


def test_unix_column_preferred(tmp_path):
    p = write(tmp_path, f"Time,Unix,Aggregate,Appliance1\n2000-01-01 00:00:00,{T0},1,1\n")
    assert load_readings(p).readings[0].timestamps[0] == T0


def test_small_disorder_is_resorted(tmp_path):
    p = write(tmp_path, f"Time,Appliance1\n{T0},1\n{T0 + 16},3\n{T0 + 8},2\n{T0 + 24},4\n")
    loaded = load_readings(p)
    np.testing.assert_array_equal(loaded.readings[0].power, [1, 2, 3, 4])
    assert loaded.reordered_rows == 2


def test_large_backward_jump_rejected(tmp_path):
    p = write(tmp_path, f"Time,Appliance1\n{T0 + 1000},1\n{T0},2\n")
    with pytest.raises(ReadingsError, match="not monotone"):
        load_readings(p, reorder_window=60)


def test_duplicate_timestamps_dropped(tmp_path):
    p = write(tmp_path, f"Time,Appliance1\n{T0},1\n{T0},2\n{T0 + 8},3\n")
    loaded = load_readings(p)
    assert loaded.malformed_rows == 1
    assert np.all(np.diff(loaded.readings[0].timestamps) > 0)


def test_missing_file(tmp_path):
    with pytest.raises(ReadingsError):
        load_readings(tmp_path / "absent.csv")


# -- resample_hourly -----------------------------------------------------------------

def raw(device, t, p):
    return RawReadings(device, np.asarray(t, dtype=np.int64), np.asarray(p, dtype=float))


def test_constant_1000w_hour():
    t = T0 + np.arange(0, 3600, 60)
    e = resample_hourly([raw("A", t, np.full(len(t), 1000.0))])
    assert e.energy[0, 0] == 1000.0


def test_450_samples_8s_at_500w():
    t = T0 + 8 * np.arange(450)
    e = resample_hourly([raw("A", t, np.full(450, 500.0))])
    assert len(e.hours) == 1
    assert e.energy[0, 0] == 500.0


def test_half_off_half_2000w():
    t = T0 + 8 * np.arange(450)
    p = np.where(t - T0 < 1800, 0.0, 2000.0)
    e = resample_hourly([raw("A", t, p)])
    # oracle: mean of the samples in the hour times one hour
    assert e.energy[0, 0] == pytest.approx(p.mean() * 1.0, abs=1e-9)
    assert e.energy[0, 0] == pytest.approx(1000.0, abs=1e-9)


def test_empty_hours_flagged_as_gaps():
    t = np.array([T0, T0 + 10, T0 + 3 * 3600 + 5])
    e = resample_hourly([raw("A", t, [100, 300, 50])])
    np.testing.assert_array_equal(e.hours, T0 + 3600 * np.arange(4))
    np.testing.assert_array_equal(e.energy[:, 0], [200, 0, 0, 50])
    np.testing.assert_array_equal(e.gaps[:, 0], [False, True, True, False])


def test_truncated_bucketing():
    # 59:59 belongs to the earlier hour, never rounded into the next one
    e = resample_hourly([raw("A", [T0 + 3599, T0 + 3600], [10, 20])])
    np.testing.assert_array_equal(e.energy[:, 0], [10, 20])


@given(st.floats(0, 5000, allow_nan=False), st.integers(1, 400))
@settings(max_examples=60, deadline=None)
def test_constant_power_conserved(power, n):
    t = T0 + np.sort(np.random.default_rng(n).choice(3600, size=min(n, 3600), replace=False))
    e = resample_hourly([raw("A", t, np.full(len(t), power))])
    assert e.energy[0, 0] == pytest.approx(power, rel=1e-12, abs=1e-9)


# -- engineer_features -----------------------------------------------------------------

def test_device_on_at_hour_10_lags():
    wh = np.zeros((200, 2))
    wh[10, 0] = 500
    ds = engineer_features(energy_of(wh), catalog("A", "B"))
    assert ds.usage[10, 0] == 1 and ds.usage[:, 0].sum() == 1
    assert ds.lag("A", 1)[11] == 1 and ds.lag("A", 1).sum() == 1
    assert ds.lag("A", 168)[178] == 1 and ds.lag("A", 168).sum() == 1


def test_all_below_threshold():
    wh = np.full((30, 2), 9.99)
    ds = engineer_features(energy_of(wh), catalog("A", "B"))
    assert ds.usage.sum() == 0 and ds.availability.sum() == 0


def test_kettle_at_7_sets_availability():
    wh = np.zeros((24, 2))
    wh[7, 0] = 300  # kettle, availability-indicating
    ds = engineer_features(energy_of(wh, ("Kettle", "TV")), catalog("Kettle", "TV", avail=("Kettle", "TV")))
    expected = (ds.usage[:, 0] == 1) | (ds.usage[:, 1] == 1)  # OR over indicator devices
    np.testing.assert_array_equal(ds.availability, expected.astype(int))
    assert ds.availability[7] == 1


def test_non_indicator_device_does_not_set_availability():
    wh = np.zeros((24, 2))
    wh[5, 1] = 300
    ds = engineer_features(energy_of(wh), catalog("A", "B"))
    assert ds.availability.sum() == 0


def test_threshold_is_strict_and_per_device():
    cat = DeviceCatalog([DeviceSpec("A", availability=True, threshold_wh=10.0),
                         DeviceSpec("B", threshold_wh=50.0)])
    wh = np.array([[10.0, 50.0], [10.01, 50.01]])
    ds = engineer_features(energy_of(wh), cat)
    np.testing.assert_array_equal(ds.usage, [[0, 0], [1, 1]])


def test_avg_kwh_estimate_and_override():
    wh = np.array([[0, 0], [200, 0], [400, 0]], dtype=float)
    ds = engineer_features(energy_of(wh), catalog("A", "B"))
    assert ds.avg_kwh["A"] == pytest.approx(0.3)
    assert ds.avg_kwh["B"] == 0.0
    cat = DeviceCatalog([DeviceSpec("A", availability=True, avg_kwh=1.5), DeviceSpec("B")])
    assert engineer_features(energy_of(wh), cat).avg_kwh["A"] == 1.5


def test_gap_hours_flagged():
    e = energy_of(np.ones((5, 2)) * 20)
    e.gaps[2, 1] = True
    ds = engineer_features(e, catalog("A", "B"))
    np.testing.assert_array_equal(ds.gap, [0, 0, 1, 0, 0])


def test_time_features():
    hours = pd.Timestamp("2014-03-05 22:00", tz="UTC").value // 10**9 + 3600 * np.arange(3)
    e = HourlyEnergy(hours, ["A"], np.zeros((3, 1)), np.zeros((3, 1), bool))
    ds = engineer_features(e, catalog("A"))
    np.testing.assert_array_equal(ds.hour_of_day, [22, 23, 0])
    np.testing.assert_array_equal(ds.day_of_week, [2, 2, 3])  # Wednesday, Thursday
    np.testing.assert_array_equal(ds.month, [3, 3, 3])


def test_no_hours_rejected():
    e = HourlyEnergy(np.zeros(0, np.int64), ["A"], np.zeros((0, 1)), np.zeros((0, 1), bool))
    with pytest.raises(ReadingsError):
        engineer_features(e, catalog("A"))


@given(st.lists(st.integers(0, 1), min_size=1, max_size=400), st.sampled_from([1, 168]))
def test_shift_identity(col, k):
    col = np.array(col)
    s = shift(col, k)
    assert np.all(s[:k] == 0)
    np.testing.assert_array_equal(s[k:], col[:len(col) - k] if k < len(col) else [])


@given(st.lists(st.floats(0, 1000), min_size=24, max_size=24),
       st.lists(st.floats(-0.49, 0.49), min_size=24, max_size=24))
def test_usage_invariant_to_same_side_noise(base, noise):
    base = np.array(base)
    th = 10.0
    noisy = base + np.array(noise)
    # only keep perturbations that stay on the same side of the threshold
    same = (base > th) == (noisy > th)
    noisy = np.where(same, noisy, base).clip(min=0)
    a = engineer_features(energy_of(np.column_stack([base, base])), catalog("A", "B"))
    b = engineer_features(energy_of(np.column_stack([noisy, noisy])), catalog("A", "B"))
    np.testing.assert_array_equal(a.usage, b.usage)


@given(st.lists(st.lists(st.sampled_from([0.0, 5.0, 50.0]), min_size=3, max_size=3),
                min_size=1, max_size=48))
def test_availability_is_or_over_indicators(rows):
    wh = np.array(rows)
    cat = DeviceCatalog([DeviceSpec("A", availability=True), DeviceSpec("B", availability=True),
                         DeviceSpec("C")])
    ds = engineer_features(energy_of(wh, ("A", "B", "C")), cat)
    for h in range(len(wh)):
        assert ds.availability[h] == int(ds.usage[h, 0] == 1 or ds.usage[h, 1] == 1)


# -- catalog and persistence ---------------------------------------------------------------

def test_catalog_validation():
    with pytest.raises(CatalogError):
        DeviceCatalog([DeviceSpec("A")])  # no availability device
    with pytest.raises(CatalogError):
        DeviceCatalog([DeviceSpec("A", availability=True, threshold_wh=0)])
    with pytest.raises(CatalogError):
        DeviceCatalog([DeviceSpec("A", availability=True, avg_kwh=-1)])


def test_catalog_yaml_roundtrip(tmp_path):
    cat = DeviceCatalog([DeviceSpec("A", availability=True, name="Kettle"),
                         DeviceSpec("B", threshold_wh=20, avg_kwh=0.4, shiftable=False)])
    import yaml
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(cat.to_dict()))
    assert load_catalog(p) == cat


def test_hourly_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    wh = rng.uniform(0, 40, size=(200, 2))
    ds = engineer_features(energy_of(wh), catalog("A", "B"))
    ds.save(tmp_path / "h.csv")
    back = HourlyDataset.load(tmp_path / "h.csv")
    np.testing.assert_array_equal(back.energy, ds.energy)
    np.testing.assert_array_equal(back.usage, ds.usage)
    np.testing.assert_array_equal(back.availability, ds.availability)
    assert back.avg_kwh == ds.avg_kwh
    frame = pd.read_csv(tmp_path / "h.csv", comment="#")
    np.testing.assert_array_equal(frame["usage:A:lag168"], shift(ds.usage[:, 0], 168))
