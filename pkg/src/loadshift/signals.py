"""Day-ahead price and carbon-intensity vectors from pluggable sources."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import pandas as pd

from .errors import CoverageError, LoadshiftError

HORIZON = 24
KINDS = ("price", "carbon")


@dataclass(frozen=True)
class DayAheadSignal:
    kind: str
    horizon_start: pd.Timestamp
    values: np.ndarray  # price: currency/MWh, carbon: gCO2/kWh

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LoadshiftError(f"unknown signal kind {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (HORIZON,):
            raise LoadshiftError(f"{self.kind} signal must have exactly 24 values, got {values.shape}")
        if not np.isfinite(values).all():
            raise LoadshiftError(f"{self.kind} signal has non-finite values")
        if self.kind == "carbon" and (values < 0).any():
            raise LoadshiftError("carbon intensity cannot be negative")
        object.__setattr__(self, "values", values)


class SignalSource(Protocol):
    def fetch(self, kind: str, horizon_start: pd.Timestamp) -> DayAheadSignal: ...

    def calendar(self) -> list[dt.date]: ...


def _hour_boundary(ts) -> pd.Timestamp:
    ts = pd.Timestamp(ts)
    ts = ts.tz_localize("UTC") if ts.tzinfo is None else ts.tz_convert("UTC")
    if ts != ts.floor("h"):
        raise LoadshiftError(f"horizon start {ts} is not an exact hour boundary")
    return ts


class FixtureSource:
    """Hourly ``datetime,value`` CSV for one signal kind.

    The whole file is read at construction; gaps anywhere inside a requested
    horizon are a coverage error, never padded.
    """

    def __init__(self, path: str | Path, kind: str):
        if kind not in KINDS:
            raise LoadshiftError(f"unknown signal kind {kind!r}")
        self.path = Path(path)
        self.kind = kind
        if not self.path.is_file():
            raise CoverageError(f"{kind} fixture not found: {self.path}")
        self._ingest(pd.read_csv(self.path, float_precision="round_trip"))

    def _ingest(self, frame: pd.DataFrame) -> None:
        if list(frame.columns[:2]) != ["datetime", "value"]:
            raise LoadshiftError(f"{self.path}: expected columns datetime,value")
        stamps = pd.to_datetime(frame["datetime"], utc=True, format="ISO8601")
        series = pd.Series(frame["value"].to_numpy(dtype=float), index=stamps)
        if series.index.has_duplicates:
            raise LoadshiftError(f"{self.path}: duplicate timestamps")
        self.series = series.sort_index()

    def fetch(self, kind: str, horizon_start) -> DayAheadSignal:
        if kind != self.kind:
            raise LoadshiftError(f"source holds {self.kind} data, not {kind}")
        start = _hour_boundary(horizon_start)
        want = pd.date_range(start, periods=HORIZON, freq="h")
        got = self.series.reindex(want)
        if got.isna().any():
            missing = int(got.isna().sum())
            raise CoverageError(
                f"{kind} horizon starting {start.isoformat()} not covered by {self.path.name} "
                f"({missing} of 24 hours missing)")
        return DayAheadSignal(kind, start, got.to_numpy())

    def calendar(self) -> list[dt.date]:
        return sorted(set(self.series.index.date))


class RemoteSource(FixtureSource):
    """Same ``datetime,value`` layout, downloaded once from a URL."""

    def __init__(self, url: str, kind: str):
        if kind not in KINDS:
            raise LoadshiftError(f"unknown signal kind {kind!r}")
        self.kind = kind
        self.path = Path(url.rsplit("/", 1)[-1] or url)
        try:
            frame = pd.read_csv(url, float_precision="round_trip")
        except Exception as exc:  # network and parse errors alike
            raise CoverageError(f"cannot fetch {kind} signal from {url}: {exc}") from exc
        self._ingest(frame)


def write_fixture(path: str | Path, signals: list[DayAheadSignal]) -> None:
    rows = []
    for s in signals:
        for h, v in enumerate(s.values):
            rows.append(((s.horizon_start + pd.Timedelta(hours=h)).isoformat(), repr(float(v))))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("datetime,value\n")
        for stamp, v in rows:
            fh.write(f"{stamp},{v}\n")


class SyntheticSource:
    """Daily sinusoid ``base + amplitude * sin(2*pi*(h - phase)/24)`` plus noise.

    With ``phase=6`` the daily maximum falls on hour 12 of a midnight horizon.
    An optional 12-hour harmonic (``semi_amplitude``, ``semi_phase``) gives
    morning and evening peaks.
    Noise is drawn per day from a generator seeded by (seed, date), so any
    horizon is reproducible independently of fetch order.
    """

    def __init__(self, kind: str, base: float, amplitude: float, phase: float = 6.0,
                 noise: float = 0.0, seed: int = 0,
                 start: dt.date | None = None, end: dt.date | None = None,
                 semi_amplitude: float = 0.0, semi_phase: float = 0.0):
        if kind not in KINDS:
            raise LoadshiftError(f"unknown signal kind {kind!r}")
        self.kind, self.base, self.amplitude, self.phase = kind, base, amplitude, phase
        self.noise, self.seed = noise, seed
        self.semi_amplitude, self.semi_phase = semi_amplitude, semi_phase
        self.start, self.end = start, end

    def profile(self, hours: np.ndarray) -> np.ndarray:
        daily = self.amplitude * np.sin(2 * math.pi * (hours - self.phase) / 24)
        semi = self.semi_amplitude * np.sin(2 * math.pi * (hours - self.semi_phase) / 12)
        return self.base + daily + semi

    def fetch(self, kind: str, horizon_start) -> DayAheadSignal:
        if kind != self.kind:
            raise LoadshiftError(f"source generates {self.kind} data, not {kind}")
        start = _hour_boundary(horizon_start)
        last = (start + pd.Timedelta(hours=HORIZON - 1)).date()
        if (self.start and start.date() < self.start) or (self.end and last > self.end):
            raise CoverageError(f"{kind} horizon {start.isoformat()} outside synthetic coverage")
        hours = np.arange(HORIZON) + start.hour
        values = self.profile(hours.astype(float))
        if self.noise:
            d = start.date()
            rng = np.random.default_rng([self.seed, d.year, d.month, d.day, start.hour])
            values = values * (1 + self.noise * rng.uniform(-1, 1)) + self.noise * self.amplitude * rng.normal(size=HORIZON)
        if kind == "carbon":
            values = np.maximum(values, 0.0)
        return DayAheadSignal(kind, start, values)

    def calendar(self) -> list[dt.date]:
        if self.start is None or self.end is None:
            raise LoadshiftError("unbounded synthetic source has no finite calendar")
        n = (self.end - self.start).days + 1
        return [self.start + dt.timedelta(days=i) for i in range(n)]


def fetch_signal(source: SignalSource, kind: str, horizon_start) -> DayAheadSignal:
    return source.fetch(kind, horizon_start)


def align_date(consumption_date: dt.date, signal_calendar) -> dt.date:
    """Signal date sharing day and month with ``consumption_date``.

    Years are ignored: the earliest calendar date with the same (month, day)
    wins, and Feb 29 falls back to Feb 28 when the calendar has no leap day.
    """
    cal = sorted(set(signal_calendar))
    if not cal:
        raise CoverageError("empty signal calendar")
    by_md: dict[tuple[int, int], dt.date] = {}
    for d in cal:
        by_md.setdefault((d.month, d.day), d)
    key = (consumption_date.month, consumption_date.day)
    if key not in by_md and key == (2, 29):
        key = (2, 28)
    if key not in by_md:
        raise CoverageError(f"no signal data for {consumption_date:%m-%d} in any year")
    return by_md[key]


class AlignedSignals:
    """Price and carbon sources looked up by consumption date (year-agnostic)."""

    def __init__(self, price: SignalSource, carbon: SignalSource, hour: int = 0):
        self.price, self.carbon, self.hour = price, carbon, hour
        self._cal = {"price": set(price.calendar()), "carbon": set(carbon.calendar())}

    def _start(self, kind: str, date: dt.date) -> pd.Timestamp:
        d = align_date(date, self._cal[kind])
        return pd.Timestamp(d, tz="UTC") + pd.Timedelta(hours=self.hour)

    def for_date(self, date) -> tuple[DayAheadSignal, DayAheadSignal]:
        """(carbon, price) for the horizon starting at ``date``."""
        date = pd.Timestamp(str(date)).date()
        carbon = fetch_signal(self.carbon, "carbon", self._start("carbon", date))
        price = fetch_signal(self.price, "price", self._start("price", date))
        return carbon, price
