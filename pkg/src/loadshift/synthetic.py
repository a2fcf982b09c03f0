"""Seeded synthetic household with weekly-periodic appliance habits.

Produces REFIT-layout readings, a device catalog, an activity mapping and
day-ahead carbon/price fixtures, so the whole pipeline can run offline.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .activity import Activity, ActivityMapping
from .ingest import DeviceCatalog, DeviceSpec
from .signals import DayAheadSignal, SyntheticSource, write_fixture

WEEKDAYS = (0, 1, 2, 3, 4)
WEEKEND = (5, 6)
ALL_DAYS = WEEKDAYS + WEEKEND


@dataclass(frozen=True)
class Habit:
    days: tuple[int, ...]  # day_of_week values, Monday = 0
    start: int
    hours: int


@dataclass(frozen=True)
class SyntheticDevice:
    device_id: str
    name: str
    watts: float
    duty: float  # fraction of each active hour the device draws power
    habits: tuple[Habit, ...]
    availability: bool = False
    shiftable: bool = True


DEFAULT_DEVICES = (
    SyntheticDevice("Appliance1", "Kettle", 2000, 1 / 6,
                    (Habit(ALL_DAYS, 7, 1), Habit(ALL_DAYS, 17, 1)), availability=True),
    SyntheticDevice("Appliance2", "Oven", 1500, 0.5, (Habit(ALL_DAYS, 18, 2),), availability=True),
    SyntheticDevice("Appliance3", "Television", 120, 1.0,
                    (Habit(WEEKDAYS, 19, 4), Habit(WEEKEND, 10, 2), Habit(WEEKEND, 19, 5)),
                    availability=True),
    SyntheticDevice("Appliance4", "Washing Machine", 500, 0.5,
                    (Habit((2,), 19, 2), Habit((5,), 10, 2))),
    SyntheticDevice("Appliance5", "Dishwasher", 1200, 0.5, (Habit(ALL_DAYS, 20, 2),)),
    SyntheticDevice("Appliance6", "Desktop Computer", 150, 1.0, (Habit(WEEKDAYS, 17, 3),)),
    SyntheticDevice("Appliance7", "Fridge", 60, 1.0, (Habit(ALL_DAYS, 0, 24),), shiftable=False),
)

DEFAULT_ACTIVITIES = (
    ("Cooking", "inflexible", ("Appliance1", "Appliance2")),
    ("Entertainment", "slightly_flexible", ("Appliance3",)),
    ("Laundering", "flexible", ("Appliance4",)),
    ("Cleaning", "flexible", ("Appliance5",)),
    ("Working", "inflexible", ("Appliance6",)),
)


@dataclass
class SyntheticHousehold:
    readings: pd.DataFrame
    catalog: DeviceCatalog
    mapping: ActivityMapping
    schedule: np.ndarray  # [day, hour, device] ground-truth on/off


def _activity_grid(devices, n_days: int, first_dow: int, rng, skip: float, extra: float) -> np.ndarray:
    on = np.zeros((n_days, 24, len(devices)), dtype=bool)
    dows = (first_dow + np.arange(n_days)) % 7
    for j, dev in enumerate(devices):
        for habit in dev.habits:
            days = np.flatnonzero(np.isin(dows, habit.days))
            keep = days[rng.random(len(days)) >= skip] if dev.shiftable else days
            for h in range(habit.start, min(habit.start + habit.hours, 24)):
                on[keep, h, j] = True
        if dev.shiftable and extra > 0:
            on[:, :, j] |= rng.random((n_days, 24)) < extra
    return on


def make_household(days: int = 365, start: str = "2014-01-06", seed: int = 0,
                   interval: int = 600, skip: float = 0.03, extra: float = 0.005,
                   devices=DEFAULT_DEVICES, activities=DEFAULT_ACTIVITIES) -> SyntheticHousehold:
    """Sampled readings every ``interval`` seconds starting at midnight UTC of ``start``.

    Each habit occurrence is dropped with probability ``skip``; every hour a
    shiftable device additionally switches on with probability ``extra``.
    Standby draw stays well below the 10 Wh usage threshold.
    """
    rng = np.random.default_rng(seed)
    t0 = pd.Timestamp(start, tz="UTC")
    on = _activity_grid(devices, days, t0.dayofweek, rng, skip, extra)
    per_hour = 3600 // interval
    n = days * 24 * per_hour
    unix = t0.value // 10**9 + np.arange(n, dtype=np.int64) * interval
    slot = np.tile(np.arange(per_hour), days * 24)
    cols = {}
    for j, dev in enumerate(devices):
        active_hour = np.repeat(on[:, :, j].reshape(-1), per_hour)
        drawing = active_hour & (slot < max(1, round(dev.duty * per_hour)))
        standby = rng.uniform(0.0, 2.0, size=n)
        cols[dev.device_id] = np.round(np.where(drawing, dev.watts, standby), 1)
    frame = pd.DataFrame(cols)
    frame.insert(0, "Aggregate", frame.sum(axis=1).round(1))
    frame.insert(0, "Unix", unix)
    frame.insert(0, "Time", pd.to_datetime(unix, unit="s", utc=True).strftime("%Y-%m-%d %H:%M:%S"))
    catalog = DeviceCatalog([
        DeviceSpec(d.device_id, availability=d.availability, shiftable=d.shiftable, name=d.name)
        for d in devices
    ])
    mapping = ActivityMapping([Activity(a, tuple(ds), f) for a, f, ds in activities])
    return SyntheticHousehold(frame, catalog, mapping, on)


def carbon_source(seed: int = 1, start=None, end=None) -> SyntheticSource:
    # trough near 05:30, peak near 17:30
    return SyntheticSource("carbon", base=210.0, amplitude=70.0, phase=11.5, noise=0.25,
                           seed=seed, start=start, end=end)


def price_source(seed: int = 2, start=None, end=None) -> SyntheticSource:
    # evening peak near 19:00, morning shoulder, cheapest around 03:00
    return SyntheticSource("price", base=110.0, amplitude=25.0, phase=12.0, noise=0.35,
                           seed=seed, start=start, end=end, semi_amplitude=12.0, semi_phase=5.0)


def signal_year(source: SyntheticSource, year: int) -> list[DayAheadSignal]:
    first = dt.date(year, 1, 1)
    n = (dt.date(year + 1, 1, 1) - first).days
    return [source.fetch(source.kind, pd.Timestamp(first + dt.timedelta(days=i), tz="UTC"))
            for i in range(n)]


def write_bundle(out_dir: str | Path, days: int = 365, start: str = "2014-01-06",
                 seed: int = 0, signal_year_: int = 2021) -> dict[str, Path]:
    """Write readings, catalog, mapping, signal fixtures and a run config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hh = make_household(days=days, start=start, seed=seed)
    paths = {
        "consumption": out / "consumption.csv",
        "catalog": out / "catalog.yaml",
        "mapping": out / "mapping.yaml",
        "price": out / "price.csv",
        "carbon": out / "carbon.csv",
        "config": out / "config.yaml",
    }
    hh.readings.to_csv(paths["consumption"], index=False, lineterminator="\n")
    paths["catalog"].write_text(yaml.safe_dump(hh.catalog.to_dict(), sort_keys=False))
    paths["mapping"].write_text(yaml.safe_dump(hh.mapping.to_dict(), sort_keys=False))
    write_fixture(paths["price"], signal_year(price_source(seed + 2), signal_year_))
    write_fixture(paths["carbon"], signal_year(carbon_source(seed + 1), signal_year_))
    config = {
        "paths": {
            "consumption": "consumption.csv",
            "catalog": "catalog.yaml",
            "mapping": "mapping.yaml",
            "price": "price.csv",
            "carbon": "carbon.csv",
            "model_store": "models",
            "output_dir": "out",
        },
        "model": {"family": "logreg", "seed": seed},
        "recommendation": {"aval_off": True, "emissions_ratio": 1.0,
                           "availability_threshold": 0.15, "activity_threshold": 0.15},
    }
    paths["config"].write_text(yaml.safe_dump(config, sort_keys=False))
    return paths
