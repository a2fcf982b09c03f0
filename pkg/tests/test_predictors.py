import numpy as np
import pytest

from helpers import daily_pattern, dataset_from_usage
from loadshift.errors import InsufficientHistoryError
from loadshift.models import build_features
from loadshift.predictors import (AVAILABILITY, Forecaster, export_forecasts, forecast_availability,
                                  forecast_usage, load_forecasts)

DAYS = 42


def household():
    """A: availability device used 18-22 daily; W: weekly Monday 10:00; N: never used."""
    n = DAYS * 24
    u = np.zeros((n, 3), dtype=np.int8)
    u[:, 0] = daily_pattern(DAYS, range(18, 23))[:, 0]
    for d in range(DAYS):  # 2014-01-06 is a Monday
        if d % 7 == 0:
            u[d * 24 + 10, 1] = 1
    return dataset_from_usage(u, ["A", "W", "N"], ["A"])


@pytest.fixture(scope="module")
def ds():
    return household()


def test_availability_peaks_in_presence_band(ds):
    fc = forecast_availability(ds, "mlp", day=35)
    band = np.arange(18, 23)
    assert np.all(fc.probs[band] > 0.5)
    assert fc.probs[band].min() > np.delete(fc.probs, band).max()
    assert fc.horizon_start == ds.hours[ds.day_slice(35).start]


def test_never_present_is_low():
    u = np.zeros((DAYS * 24, 2), dtype=np.int8)
    u[::5, 1] = 1
    ds = dataset_from_usage(u, ["A", "B"], ["A"])
    assert np.all(forecast_availability(ds, "mlp", day=30).probs < 0.1)


def test_insufficient_history(ds):
    with pytest.raises(InsufficientHistoryError, match="insufficient history"):
        forecast_availability(ds, "logreg", day=27)


@pytest.mark.parametrize("family", ["logreg", "mlp", "forest"])
def test_weekly_device_peaks_on_monday(ds, family):
    fc = forecast_usage(ds, "W", family, day=35)  # day 35 is a Monday
    assert int(np.argmax(fc.probs)) == 10


def test_unused_device_is_low(ds):
    assert np.all(forecast_usage(ds, "N", "mlp", day=30).probs < 0.1)


def test_independent_devices_differ(ds):
    a = forecast_usage(ds, "A", "logreg", day=35).probs
    w = forecast_usage(ds, "W", "logreg", day=35).probs
    assert a.tobytes() != w.tobytes()


def test_feature_hygiene(ds):
    schema = build_features(ds, AVAILABILITY).schema
    lags = [c for c in schema if "lag" in c]
    assert lags == ["availability:lag1", "availability:lag168"]
    for dev in ds.device_ids:
        lags = [c for c in build_features(ds, dev).schema if "lag" in c]
        assert lags == [f"{dev}:lag1", f"{dev}:lag168"]


def test_forecaster_deterministic_and_export_roundtrip(ds, tmp_path):
    a = Forecaster(ds, ["W", "N"], "logreg", seed=3).days([30, 31])
    b = Forecaster(ds, ["W", "N"], "logreg", seed=3).days([30, 31])
    for d in (30, 31):
        assert a[d].availability.probs.tobytes() == b[d].availability.probs.tobytes()
        assert a[d].usage["W"].probs.tobytes() == b[d].usage["W"].probs.tobytes()
    paths = export_forecasts(a, tmp_path)
    assert sorted(p.name for p in paths) == ["forecast_N.csv", "forecast_W.csv", "forecast_availability.csv"]
    assert paths[0].read_text().splitlines()[0] == "day,hour,prob"
    back = load_forecasts(tmp_path, ds, ["W", "N"])
    for d in (30, 31):
        assert back[d].usage["W"].probs.tobytes() == a[d].usage["W"].probs.tobytes()
        assert back[d].availability.probs.tobytes() == a[d].availability.probs.tobytes()


def test_post_headstart_days(ds):
    assert list(Forecaster(ds, ["W"], "logreg").post_headstart_days()) == list(range(28, DAYS))
