"""Availability and per-device usage forecasts for one 24-hour horizon."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import LoadshiftError
from .ingest import HourlyDataset
from .models import RollingFitter, TrainingSchedule

AVAILABILITY = "availability"


@dataclass(frozen=True)
class AvailabilityForecast:
    horizon_start: int
    probs: np.ndarray


@dataclass(frozen=True)
class UsageForecast:
    device_id: str
    horizon_start: int
    probs: np.ndarray


@dataclass
class DayForecast:
    day: int
    availability: AvailabilityForecast
    usage: dict[str, UsageForecast]

    def usage_matrix(self, device_ids: list[str]) -> np.ndarray:
        """[hour, device] usage probabilities in the given device order."""
        return np.column_stack([self.usage[d].probs for d in device_ids])


def forecast_availability(dataset: HourlyDataset, family: str = "mlp",
                          schedule: TrainingSchedule | None = None, day: int = 0,
                          seed: int = 0) -> AvailabilityForecast:
    fitter = RollingFitter(dataset, AVAILABILITY, family, schedule or TrainingSchedule(), seed)
    probs = fitter.fit_predict(day)
    return AvailabilityForecast(int(dataset.hours[dataset.day_slice(day).start]), probs)


def forecast_usage(dataset: HourlyDataset, device_id: str, family: str = "mlp",
                   schedule: TrainingSchedule | None = None, day: int = 0,
                   seed: int = 0) -> UsageForecast:
    dataset.device_index(device_id)
    fitter = RollingFitter(dataset, device_id, family, schedule or TrainingSchedule(), seed)
    probs = fitter.fit_predict(day)
    return UsageForecast(device_id, int(dataset.hours[dataset.day_slice(day).start]), probs)


@dataclass
class Forecaster:
    """Rolling fitters for availability plus each usage device, shared across days."""

    dataset: HourlyDataset
    device_ids: list[str]
    family: str = "mlp"
    schedule: TrainingSchedule = field(default_factory=TrainingSchedule)
    seed: int = 0

    def __post_init__(self):
        for d in self.device_ids:
            self.dataset.device_index(d)
        self.fitters = {
            t: RollingFitter(self.dataset, t, self.family, self.schedule, self.seed)
            for t in [AVAILABILITY, *self.device_ids]
        }

    def day(self, day: int) -> DayForecast:
        start = int(self.dataset.hours[self.dataset.day_slice(day).start])
        av = AvailabilityForecast(start, self.fitters[AVAILABILITY].fit_predict(day))
        usage = {d: UsageForecast(d, start, self.fitters[d].fit_predict(day)) for d in self.device_ids}
        return DayForecast(day, av, usage)

    def days(self, days) -> dict[int, DayForecast]:
        return {int(d): self.day(int(d)) for d in days}

    def post_headstart_days(self) -> range:
        return range(self.schedule.headstart_days, len(self.dataset.day_starts))


def forecasts_frame(forecasts: dict[int, DayForecast]) -> pd.DataFrame:
    """Long table ``target,day,hour,prob``."""
    rows = []
    for day, fc in sorted(forecasts.items()):
        targets = {AVAILABILITY: fc.availability.probs}
        targets.update({d: u.probs for d, u in fc.usage.items()})
        for name, probs in targets.items():
            for h, p in enumerate(probs):
                rows.append((name, day, h, float(p)))
    return pd.DataFrame(rows, columns=["target", "day", "hour", "prob"])


def export_forecasts(forecasts: dict[int, DayForecast], out_dir: str | Path) -> list[Path]:
    """One ``day,hour,prob`` CSV per target."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = forecasts_frame(forecasts)
    paths = []
    for name, part in frame.groupby("target", sort=False):
        path = out_dir / f"forecast_{name}.csv"
        part[["day", "hour", "prob"]].to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
    return paths


def load_forecasts(in_dir: str | Path, dataset: HourlyDataset,
                   device_ids: list[str]) -> dict[int, DayForecast]:
    """Inverse of :func:`export_forecasts` for the days present in every file."""
    in_dir = Path(in_dir)
    tables = {}
    for name in [AVAILABILITY, *device_ids]:
        path = in_dir / f"forecast_{name}.csv"
        if not path.is_file():
            raise LoadshiftError(f"forecast file not found: {path}")
        frame = pd.read_csv(path, float_precision="round_trip").sort_values(["day", "hour"])
        tables[name] = {int(d): g["prob"].to_numpy(dtype=float) for d, g in frame.groupby("day")}
    days = sorted(set.intersection(*(set(t) for t in tables.values())))
    out = {}
    for day in days:
        start = int(dataset.hours[dataset.day_slice(day).start])
        usage = {d: UsageForecast(d, start, tables[d][day]) for d in device_ids}
        out[day] = DayForecast(day, AvailabilityForecast(start, tables[AVAILABILITY][day]), usage)
    return out
