"""Activity probabilities from device-usage probabilities.

Each activity is a binary vector over devices. For every hour the predicted
usage vector is compared with each activity vector by cosine similarity and
the similarities are normalised to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import MappingError

FLEXIBILITY = ("flexible", "slightly_flexible", "inflexible")
DEFAULT_FLEXIBILITY = {
    "cleaning": "flexible",
    "laundering": "flexible",
    "entertainment": "slightly_flexible",
    "entertaining": "slightly_flexible",
    "cooking": "inflexible",
    "working": "inflexible",
}


@dataclass(frozen=True)
class Activity:
    activity_id: str
    devices: tuple[str, ...]
    flexibility: str


class ActivityMapping:
    """Exclusive activity-device relation: every device identifies one activity."""

    def __init__(self, activities: list[Activity], device_ids: list[str] | None = None):
        if not activities:
            raise MappingError("mapping defines no activities")
        ids = [a.activity_id for a in activities]
        if len(set(ids)) != len(ids):
            raise MappingError(f"duplicate activity ids: {ids}")
        if device_ids is None:
            device_ids = list(dict.fromkeys(d for a in activities for d in a.devices))
        self.device_ids = list(device_ids)
        self.activities = list(activities)
        for a in activities:
            if a.flexibility not in FLEXIBILITY:
                raise MappingError(f"{a.activity_id}: unknown flexibility {a.flexibility!r}")
            if not a.devices:
                raise MappingError(f"{a.activity_id}: activity has no devices")
            unknown = [d for d in a.devices if d not in self.device_ids]
            if unknown:
                raise MappingError(f"{a.activity_id}: devices not in device list: {unknown}")
        sums = self.matrix.sum(axis=0)
        if not (sums == 1).all():
            bad = [d for d, s in zip(self.device_ids, sums) if s != 1]
            raise MappingError(f"devices must map to exactly one activity: {bad}")

    @property
    def matrix(self) -> np.ndarray:
        """[activity, device] 0/1 relation matrix."""
        R = np.zeros((len(self.activities), len(self.device_ids)))
        for i, a in enumerate(self.activities):
            for d in a.devices:
                R[i, self.device_ids.index(d)] = 1.0
        return R

    @property
    def activity_ids(self) -> list[str]:
        return [a.activity_id for a in self.activities]

    def __getitem__(self, activity_id: str) -> Activity:
        for a in self.activities:
            if a.activity_id == activity_id:
                return a
        raise KeyError(activity_id)

    def activity_of(self, device_id: str) -> str:
        for a in self.activities:
            if device_id in a.devices:
                return a.activity_id
        raise KeyError(device_id)

    @classmethod
    def from_dict(cls, data: dict) -> "ActivityMapping":
        if not isinstance(data, dict) or "activities" not in data:
            raise MappingError("mapping file needs an 'activities' list")
        device_ids = data.get("devices")
        activities = []
        for entry in data["activities"]:
            try:
                aid = str(entry["id"])
            except (KeyError, TypeError) as exc:
                raise MappingError(f"activity entry without id: {entry!r}") from exc
            flex = entry.get("flexibility") or DEFAULT_FLEXIBILITY.get(aid.lower())
            if flex is None:
                raise MappingError(f"{aid}: flexibility must be declared")
            if "vector" in entry:
                if device_ids is None:
                    raise MappingError("vector-form activities need a top-level 'devices' list")
                vec = [float(v) for v in entry["vector"]]
                if len(vec) != len(device_ids):
                    raise MappingError(f"{aid}: vector length {len(vec)} != {len(device_ids)} devices")
                if any(v not in (0.0, 1.0) for v in vec):
                    raise MappingError(f"{aid}: graded relations are not supported, use 0 or 1")
                devices = tuple(d for d, v in zip(device_ids, vec) if v == 1.0)
            else:
                devices = tuple(str(d) for d in entry.get("devices", []))
            activities.append(Activity(aid, devices, flex))
        return cls(activities, device_ids)

    def to_dict(self) -> dict:
        return {
            "devices": list(self.device_ids),
            "activities": [
                {"id": a.activity_id, "flexibility": a.flexibility, "devices": list(a.devices)}
                for a in self.activities
            ],
        }


def load_mapping(path: str | Path) -> ActivityMapping:
    path = Path(path)
    if not path.is_file():
        raise MappingError(f"mapping file not found: {path}")
    with open(path) as fh:
        return ActivityMapping.from_dict(yaml.safe_load(fh))


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def activity_probs(usage_probs_hour, mapping: ActivityMapping) -> np.ndarray:
    """Normalised cosine similarities for one hour; all zeros if nothing matches."""
    sims = np.array([cosine_similarity(usage_probs_hour, row) for row in mapping.matrix])
    total = sims.sum()
    if total == 0.0:
        return np.zeros_like(sims)
    return sims / total


def activity_probs_day(usage: np.ndarray, mapping: ActivityMapping) -> np.ndarray:
    """[hour, activity] probabilities from a [hour, device] usage matrix."""
    return np.vstack([activity_probs(row, mapping) for row in usage])


@dataclass(frozen=True)
class ActivityInstance:
    activity_id: str
    predicted_start: int
    duration: int

    @property
    def hours(self) -> range:
        return range(self.predicted_start, self.predicted_start + self.duration)


def extract_instances(probs, act_th: float, activity_id: str = "") -> list[ActivityInstance]:
    """Maximal runs of hours with probability strictly above ``act_th``."""
    above = np.asarray(probs) > act_th
    out = []
    start = None
    for h, on in enumerate(above):
        if on and start is None:
            start = h
        elif not on and start is not None:
            out.append(ActivityInstance(activity_id, start, h - start))
            start = None
    if start is not None:
        out.append(ActivityInstance(activity_id, start, len(above) - start))
    return out


@dataclass(frozen=True)
class ActivityForecast:
    activity_id: str
    horizon_start: int
    probs: np.ndarray
    instances: tuple[ActivityInstance, ...]


def forecast_activities(usage: np.ndarray, mapping: ActivityMapping, act_th: float,
                        horizon_start: int = 0) -> list[ActivityForecast]:
    """``usage`` is [hour, device] in ``mapping.device_ids`` order."""
    probs = activity_probs_day(usage, mapping)
    return [
        ActivityForecast(a.activity_id, horizon_start, probs[:, i],
                         tuple(extract_instances(probs[:, i], act_th, a.activity_id)))
        for i, a in enumerate(mapping.activities)
    ]


def activity_frame(per_day: dict[int, list[ActivityForecast]]) -> pd.DataFrame:
    rows = [
        (day, h, fc.activity_id, float(p))
        for day, fcs in sorted(per_day.items())
        for fc in fcs
        for h, p in enumerate(fc.probs)
    ]
    return pd.DataFrame(rows, columns=["day", "hour", "activity", "prob"])
