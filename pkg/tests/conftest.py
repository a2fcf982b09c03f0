import numpy as np
import pandas as pd
import pytest

from loadshift.evaluation import all_forecasts
from loadshift.ingest import engineer_features, load_readings, resample_hourly
from loadshift.models import TrainingSchedule
from loadshift.synthetic import carbon_source, make_household, price_source


def dataset_from_frame(frame, catalog, tmp_path, name="readings.csv"):
    path = tmp_path / name
    frame.to_csv(path, index=False)
    loaded = load_readings(path)
    return engineer_features(resample_hourly(loaded.readings), catalog)


def household_dataset(tmp_path_factory, days, seed=0, extra=0.005, skip=0.03):
    hh = make_household(days=days, seed=seed, extra=extra, skip=skip)
    ds = dataset_from_frame(hh.readings, hh.catalog, tmp_path_factory.mktemp("hh"))
    return hh, ds


class SyntheticSignals:
    """(carbon, price) per day index for a synthetic household dataset."""

    def __init__(self, dataset, seed=0):
        self.dataset = dataset
        self.carbon = carbon_source(seed + 1)
        self.price = price_source(seed + 2)

    def __call__(self, day):
        start = pd.Timestamp(self.dataset.date_of(day), tz="UTC")
        return self.carbon.fetch("carbon", start).values, self.price.fetch("price", start).values


@pytest.fixture(scope="session")
def year(tmp_path_factory):
    """A simulated year with logreg forecasts for every post-headstart day."""
    hh, ds = household_dataset(tmp_path_factory, 365)
    forecasts = all_forecasts(ds, hh.mapping, "logreg", TrainingSchedule(), seed=0)
    signals = SyntheticSignals(ds)
    cache = {d: signals(d) for d in forecasts}
    return {"household": hh, "dataset": ds, "forecasts": forecasts, "signals": cache}


@pytest.fixture(scope="session")
def periodic(tmp_path_factory):
    """Strictly weekly-periodic household: no skipped habits, no random extra use."""
    hh, ds = household_dataset(tmp_path_factory, 88, extra=0.0, skip=0.0)
    return {"household": hh, "dataset": ds}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def pytest_collection_modifyitems(items):
    for item in items:
        if "year" in getattr(item, "fixturenames", ()):
            item.add_marker(pytest.mark.slow)
