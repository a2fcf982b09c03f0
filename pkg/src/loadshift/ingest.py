"""Raw appliance readings -> hourly energy -> feature-engineered dataset.

The input layout follows the REFIT processed CSVs: a ``Time`` column (ISO
timestamp or Unix seconds, optionally accompanied by ``Unix``), an
``Aggregate`` column and ``Appliance1`` .. ``ApplianceN`` in watts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import CatalogError, ReadingsError

log = logging.getLogger(__name__)

HOUR = 3600
WEEK_HOURS = 168
DEFAULT_THRESHOLD_WH = 10.0
TIME_COLUMNS = ("Time", "Unix")


@dataclass(frozen=True)
class RawReadings:
    device_id: str
    timestamps: np.ndarray  # int64 UTC seconds, strictly increasing
    power: np.ndarray  # watts


@dataclass
class LoadedReadings:
    readings: list[RawReadings]
    malformed_rows: int = 0
    reordered_rows: int = 0


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    availability: bool = False
    threshold_wh: float = DEFAULT_THRESHOLD_WH
    avg_kwh: float | None = None
    shiftable: bool = True
    name: str | None = None


@dataclass
class DeviceCatalog:
    devices: list[DeviceSpec]

    def __post_init__(self):
        if not self.devices:
            raise CatalogError("device catalog is empty")
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise CatalogError(f"duplicate device ids in catalog: {ids}")
        if not any(d.availability for d in self.devices):
            raise CatalogError("catalog needs at least one availability-indicating device")
        for d in self.devices:
            if not d.threshold_wh > 0:
                raise CatalogError(f"{d.device_id}: usage threshold must be > 0")
            if d.avg_kwh is not None and not d.avg_kwh >= 0:
                raise CatalogError(f"{d.device_id}: avg_kwh must be >= 0")

    @property
    def ids(self) -> list[str]:
        return [d.device_id for d in self.devices]

    def __getitem__(self, device_id: str) -> DeviceSpec:
        for d in self.devices:
            if d.device_id == device_id:
                return d
        raise KeyError(device_id)

    @property
    def availability_ids(self) -> list[str]:
        return [d.device_id for d in self.devices if d.availability]

    @property
    def shiftable_ids(self) -> list[str]:
        return [d.device_id for d in self.devices if d.shiftable]

    def label(self, device_id: str) -> str:
        spec = self[device_id]
        return spec.name or spec.device_id

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceCatalog":
        try:
            entries = data["devices"]
            devices = [
                DeviceSpec(
                    device_id=str(e["id"]),
                    availability=bool(e.get("availability", False)),
                    threshold_wh=float(e.get("threshold_wh", DEFAULT_THRESHOLD_WH)),
                    avg_kwh=None if e.get("avg_kwh") is None else float(e["avg_kwh"]),
                    shiftable=bool(e.get("shiftable", True)),
                    name=e.get("name"),
                )
                for e in entries
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogError(f"malformed device catalog: {exc!r}") from exc
        return cls(devices)

    def to_dict(self) -> dict:
        out = []
        for d in self.devices:
            entry = {"id": d.device_id, "availability": d.availability,
                     "threshold_wh": d.threshold_wh, "shiftable": d.shiftable}
            if d.name is not None:
                entry["name"] = d.name
            if d.avg_kwh is not None:
                entry["avg_kwh"] = d.avg_kwh
            out.append(entry)
        return {"devices": out}


def load_catalog(path: str | Path) -> DeviceCatalog:
    path = Path(path)
    if not path.is_file():
        raise CatalogError(f"catalog file not found: {path}")
    with open(path) as fh:
        return DeviceCatalog.from_dict(yaml.safe_load(fh) or {})


def _parse_time(frame: pd.DataFrame) -> pd.Series:
    if "Unix" in frame.columns:
        return pd.to_numeric(frame["Unix"], errors="coerce")
    raw = frame["Time"]
    numeric = pd.to_numeric(raw, errors="coerce")
    if numeric.notna().sum() >= raw.notna().sum() / 2:
        return numeric
    parsed = pd.to_datetime(raw, utc=True, errors="coerce", format="ISO8601")
    secs = parsed.astype("int64") // 10**9
    return secs.where(parsed.notna())


def load_readings(
    path: str | Path,
    fmt: str = "refit",
    reorder_window: float = 60.0,
    include_aggregate: bool = False,
) -> LoadedReadings:
    """Parse a REFIT-layout CSV into one ``RawReadings`` per device column.

    Rows whose timestamp or any device value fails to parse (or is negative /
    non-finite) are dropped and counted. Timestamps that step backwards by at
    most ``reorder_window`` seconds are re-sorted; larger regressions abort.
    """
    if fmt != "refit":
        raise ReadingsError(f"unsupported data format: {fmt}")
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except FileNotFoundError as exc:
        raise ReadingsError(f"cannot read {path}: file not found") from exc
    except pd.errors.EmptyDataError as exc:
        raise ReadingsError(f"no parseable rows in {path}") from exc
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ReadingsError(f"cannot read {path}: {exc}") from exc

    if not any(c in frame.columns for c in TIME_COLUMNS):
        raise ReadingsError(f"{path}: no Time/Unix column")
    skip = set(TIME_COLUMNS) | ({"Aggregate"} if not include_aggregate else set())
    device_cols = [c for c in frame.columns if c not in skip]
    if not device_cols:
        raise ReadingsError(f"{path}: no device columns")

    ts = _parse_time(frame)
    values = frame[device_cols].apply(pd.to_numeric, errors="coerce")
    arr = values.to_numpy(dtype=float)
    ok = ts.notna().to_numpy() & np.isfinite(arr).all(axis=1) & (arr >= 0).all(axis=1)
    malformed = int((~ok).sum())
    if not ok.any():
        raise ReadingsError(f"no parseable rows in {path}")

    t = ts.to_numpy()[ok].astype(np.int64)
    arr = arr[ok]
    steps = np.diff(t)
    reordered = 0
    if (steps < 0).any():
        # largest backward jump relative to the running maximum
        run_max = np.maximum.accumulate(t)
        lag = run_max - t
        if lag.max() > reorder_window:
            raise ReadingsError(
                f"{path}: timestamps not monotone (backward jump of {int(lag.max())} s "
                f"exceeds reorder window {reorder_window:g} s)")
        order = np.argsort(t, kind="stable")
        reordered = int((order != np.arange(len(t))).sum())
        t, arr = t[order], arr[order]
    dup = np.concatenate([[False], np.diff(t) == 0])
    if dup.any():
        malformed += int(dup.sum())
        t, arr = t[~dup], arr[~dup]

    if malformed:
        log.warning("%s: dropped %d malformed rows", path, malformed)
    readings = [RawReadings(col, t.copy(), arr[:, j].copy()) for j, col in enumerate(device_cols)]
    return LoadedReadings(readings, malformed_rows=malformed, reordered_rows=reordered)


@dataclass
class HourlyEnergy:
    hours: np.ndarray  # hour-start UTC seconds, contiguous
    device_ids: list[str]
    energy: np.ndarray  # [hour, device] watt-hours
    gaps: np.ndarray  # [hour, device] True where the hour had no samples


def resample_hourly(readings: list[RawReadings]) -> HourlyEnergy:
    """Mean power per UTC hour (truncated bucketing) times one hour."""
    if not readings:
        raise ReadingsError("no readings to resample")
    first = min(int(r.timestamps[0]) for r in readings if len(r.timestamps))
    last = max(int(r.timestamps[-1]) for r in readings if len(r.timestamps))
    h0, h1 = first // HOUR, last // HOUR
    n = h1 - h0 + 1
    energy = np.zeros((n, len(readings)))
    gaps = np.ones((n, len(readings)), dtype=bool)
    for j, r in enumerate(readings):
        if not len(r.timestamps):
            continue
        idx = r.timestamps // HOUR - h0
        counts = np.bincount(idx, minlength=n)
        sums = np.bincount(idx, weights=r.power, minlength=n)
        have = counts > 0
        energy[have, j] = sums[have] / counts[have]
        gaps[:, j] = ~have
    hours = (np.arange(n, dtype=np.int64) + h0) * HOUR
    return HourlyEnergy(hours, [r.device_id for r in readings], energy, gaps)


def shift(column: np.ndarray, k: int) -> np.ndarray:
    """Value at h is column[h - k]; positions before the start are 0."""
    out = np.zeros_like(column)
    if k < len(column):
        out[k:] = column[: len(column) - k]
    return out


@dataclass
class HourlyDataset:
    hours: np.ndarray
    device_ids: list[str]
    energy: np.ndarray  # [hour, device] Wh
    usage: np.ndarray  # [hour, device] 0/1
    availability: np.ndarray  # [hour] 0/1
    gap: np.ndarray  # [hour] bool, excluded from training targets
    availability_ids: list[str] = field(default_factory=list)
    avg_kwh: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        stamps = pd.to_datetime(self.hours, unit="s", utc=True)
        self.month = stamps.month.to_numpy()
        self.day_of_week = stamps.dayofweek.to_numpy()
        self.hour_of_day = stamps.hour.to_numpy()

    def __len__(self) -> int:
        return len(self.hours)

    def device_index(self, device_id: str) -> int:
        try:
            return self.device_ids.index(device_id)
        except ValueError:
            raise KeyError(f"unknown device {device_id!r}") from None

    def target(self, name: str) -> np.ndarray:
        """``availability`` or a device id."""
        if name == "availability":
            return self.availability
        return self.usage[:, self.device_index(name)]

    def lag(self, name: str, k: int) -> np.ndarray:
        return shift(self.target(name), k)

    @property
    def day_starts(self) -> np.ndarray:
        """Row indices of midnights that begin a complete 24-hour day."""
        mid = np.flatnonzero(self.hour_of_day == 0)
        return mid[mid + 24 <= len(self)]

    def day_slice(self, day: int) -> slice:
        starts = self.day_starts
        if not 0 <= day < len(starts):
            raise IndexError(f"day {day} outside dataset ({len(starts)} full days)")
        return slice(int(starts[day]), int(starts[day]) + 24)

    def day_of(self, date) -> int:
        """Day index for a calendar date (``datetime.date`` or ISO string)."""
        ts = pd.Timestamp(str(date), tz="UTC").normalize().value // 10**9
        hit = np.flatnonzero(self.hours[self.day_starts] == ts)
        if not len(hit):
            raise KeyError(f"date {date} is not a complete day of the dataset")
        return int(hit[0])

    def date_of(self, day: int) -> str:
        start = self.hours[self.day_slice(day).start]
        return pd.Timestamp(start, unit="s", tz="UTC").strftime("%Y-%m-%d")

    def to_frame(self) -> pd.DataFrame:
        cols = {
            "hour": self.hours,
            "month": self.month,
            "day_of_week": self.day_of_week,
            "hour_of_day": self.hour_of_day,
            "gap": self.gap.astype(int),
            "availability": self.availability,
            "availability_lag1": shift(self.availability, 1),
            "availability_lag168": shift(self.availability, WEEK_HOURS),
        }
        for j, d in enumerate(self.device_ids):
            cols[f"energy:{d}"] = self.energy[:, j]
            cols[f"usage:{d}"] = self.usage[:, j]
            cols[f"usage:{d}:lag1"] = shift(self.usage[:, j], 1)
            cols[f"usage:{d}:lag168"] = shift(self.usage[:, j], WEEK_HOURS)
        return pd.DataFrame(cols)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = self.to_frame()
        header = {"availability_ids": self.availability_ids,
                  "avg_kwh": {k: float(v) for k, v in self.avg_kwh.items()}}
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            frame.to_csv(fh, index=False, lineterminator="\n")

    @classmethod
    def load(cls, path: str | Path) -> "HourlyDataset":
        path = Path(path)
        if not path.is_file():
            raise ReadingsError(f"hourly dataset not found: {path}")
        with open(path) as fh:
            first = fh.readline()
            header = json.loads(first[2:]) if first.startswith("# ") else {}
            if not first.startswith("# "):
                fh.seek(0)
            frame = pd.read_csv(fh, float_precision="round_trip")
        devices = [c.split(":", 1)[1] for c in frame.columns if c.startswith("energy:")]
        return cls(
            hours=frame["hour"].to_numpy(dtype=np.int64),
            device_ids=devices,
            energy=frame[[f"energy:{d}" for d in devices]].to_numpy(dtype=float),
            usage=frame[[f"usage:{d}" for d in devices]].to_numpy(dtype=np.int8),
            availability=frame["availability"].to_numpy(dtype=np.int8),
            gap=frame["gap"].to_numpy().astype(bool),
            availability_ids=list(header.get("availability_ids", [])),
            avg_kwh=dict(header.get("avg_kwh", {})),
        )


def engineer_features(energy: HourlyEnergy, catalog: DeviceCatalog) -> HourlyDataset:
    """Threshold hourly energy into usage flags and derive availability.

    Lag features are not stored; ``HourlyDataset.lag`` derives them on demand
    from the flag columns so they can never drift out of sync.
    """
    if len(energy.hours) < 1:
        raise ReadingsError("fewer than 1 hour of data")
    missing = [d for d in catalog.ids if d not in energy.device_ids]
    if missing:
        raise CatalogError(f"catalog devices absent from readings: {missing}")
    cols = [energy.device_ids.index(d) for d in catalog.ids]
    wh = energy.energy[:, cols]
    gaps = energy.gaps[:, cols]
    thresholds = np.array([catalog[d].threshold_wh for d in catalog.ids])
    usage = (wh > thresholds).astype(np.int8)
    avail_cols = [catalog.ids.index(d) for d in catalog.availability_ids]
    availability = usage[:, avail_cols].max(axis=1).astype(np.int8)
    gap = gaps.any(axis=1)
    if len(energy.hours) < WEEK_HOURS + 1:
        log.warning("only %d hours of data; weekly lags are partly undefined", len(energy.hours))

    avg = {}
    for j, d in enumerate(catalog.ids):
        spec = catalog[d]
        if spec.avg_kwh is not None:
            avg[d] = spec.avg_kwh
        else:
            used = usage[:, j] == 1
            avg[d] = float(wh[used, j].mean() / 1000.0) if used.any() else 0.0
    return HourlyDataset(
        hours=energy.hours.copy(),
        device_ids=list(catalog.ids),
        energy=wh,
        usage=usage,
        availability=availability,
        gap=gap,
        availability_ids=list(catalog.availability_ids),
        avg_kwh=avg,
    )
