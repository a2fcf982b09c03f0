"""Turn activity, availability and day-ahead signal forecasts into a schedule.

Carbon and price are min-max normalised over the horizon and blended with the
emissions ratio; every activity instance is moved to the start hour whose
window (same duration) has the lowest blended sum within the instance's
flexibility window.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .activity import ActivityInstance, ActivityMapping, extract_instances, activity_probs_day
from .errors import ConfigError

HORIZON = 24
# (hours before, hours after) the predicted start
SHIFT_WINDOWS = {"slightly_flexible": (1, 4), "inflexible": (1, 2)}


@dataclass(frozen=True)
class RecommendationConfig:
    aval_off: bool = True
    emissions_ratio: float = 1.0
    availability_threshold: float = 0.15
    activity_threshold: float = 0.15

    def __post_init__(self):
        for name in ("emissions_ratio", "availability_threshold", "activity_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")


def _values(signal) -> np.ndarray:
    return np.asarray(getattr(signal, "values", signal), dtype=float)


def greenest_cheapest(carbon, price) -> tuple[int, int]:
    # np.argmin returns the first occurrence, i.e. the earliest hour on ties
    return int(np.argmin(_values(carbon))), int(np.argmin(_values(price)))


def availability_hours(probs, th: float) -> list[int]:
    return [h for h, p in enumerate(np.asarray(probs)) if p >= th]


def candidate_starts(instance: ActivityInstance, flexibility: str, aval_off: bool,
                     avail_hours) -> list[int]:
    dur = instance.duration
    feasible = range(0, HORIZON - dur + 1)
    if flexibility == "flexible":
        if aval_off:
            return list(feasible)
        allowed = set(avail_hours)
        return [s for s in feasible if s in allowed]
    try:
        before, after = SHIFT_WINDOWS[flexibility]
    except KeyError:
        raise ValueError(f"unknown flexibility {flexibility!r}") from None
    pred = instance.predicted_start
    return [s for s in range(pred - before, pred + after + 1) if 0 <= s <= HORIZON - dur]


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def blended_score(carbon, price, r: float) -> np.ndarray:
    return r * _minmax(_values(carbon)) + (1.0 - r) * _minmax(_values(price))


def window_sum(values, start: int, duration: int) -> float:
    return math.fsum(values[start:start + duration])


def best_start(instance: ActivityInstance, candidates, score) -> int:
    """Lowest window sum; ties go to the start nearest the predicted one, then earliest."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate start hours")
    pred, dur = instance.predicted_start, instance.duration
    return min(candidates, key=lambda s: (window_sum(score, s, dur), abs(s - pred), s))


@dataclass(frozen=True)
class SlotAssignment:
    start: int | None
    flag: str | None = None


def assign_flexible_slots(instances: list[ActivityInstance], candidates: list[list[int]],
                          score) -> list[SlotAssignment]:
    """Greedy in predicted order; later instances may not reuse a start hour.

    If every remaining start would be worse than not shifting at all the
    instance stays at its predicted start, or, when that hour is already
    taken, gets no recommendation.
    """
    taken: set[int] = set()
    out = []
    for inst, cands in zip(instances, candidates):
        free = [s for s in cands if s not in taken]
        pred = inst.predicted_start
        choice, flag = None, None
        if free:
            choice = best_start(inst, free, score)
            if window_sum(score, choice, inst.duration) > window_sum(score, pred, inst.duration):
                choice, flag = None, "no_improving_slot"
        else:
            flag = "candidates_exhausted"
        if choice is None:
            if pred not in taken:
                choice = pred
            else:
                out.append(SlotAssignment(None, flag))
                continue
        taken.add(choice)
        out.append(SlotAssignment(choice, flag))
    return out


def activity_energy_kwh(instance: ActivityInstance, devices, avg_kwh: dict[str, float],
                        usage: dict[str, np.ndarray], threshold: float) -> float:
    """Hourly energy of the activity's devices predicted in use during the instance."""
    hours = list(instance.hours)
    total = 0.0
    for d in devices:
        if max(usage[d][h] for h in hours) > threshold:
            total += avg_kwh.get(d, 0.0)
    return total


def savings(instance: ActivityInstance, recommended_start: int, carbon, price,
            energy_kwh: float) -> tuple[float, float]:
    """(gCO2, currency) saved by moving ``instance`` to ``recommended_start``.

    Prices are per MWh and converted to per kWh.
    """
    c, p = _values(carbon), _values(price)
    dur, pred = instance.duration, instance.predicted_start
    dc = window_sum(c, pred, dur) - window_sum(c, recommended_start, dur)
    dp = window_sum(p, pred, dur) - window_sum(p, recommended_start, dur)
    return energy_kwh * dc, energy_kwh * dp / 1000.0


@dataclass
class Recommendation:
    activity_id: str
    flexibility: str
    predicted_start: int
    duration: int
    recommended_start: int
    energy_kwh: float
    emissions_saving: float
    price_saving: float
    baseline_emissions: float
    baseline_price: float
    flag: str | None = None

    @property
    def instance(self) -> ActivityInstance:
        return ActivityInstance(self.activity_id, self.predicted_start, self.duration)


@dataclass
class ScheduleReport:
    date: str
    config: dict
    greenest_hour: int
    cheapest_hour: int
    availability_hours: list[int]
    recommendations: list[Recommendation] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    @property
    def total_emissions_saving(self) -> float:
        return math.fsum(r.emissions_saving for r in self.recommendations)

    @property
    def total_price_saving(self) -> float:
        return math.fsum(r.price_saving for r in self.recommendations)

    @property
    def baseline_emissions(self) -> float:
        return math.fsum(r.baseline_emissions for r in self.recommendations)

    @property
    def baseline_price(self) -> float:
        return math.fsum(r.baseline_price for r in self.recommendations)

    @property
    def relative_emissions_saving(self) -> float:
        base = self.baseline_emissions
        return self.total_emissions_saving / base if base else 0.0

    @property
    def relative_price_saving(self) -> float:
        base = self.baseline_price
        return self.total_price_saving / base if base else 0.0

    def to_dict(self) -> dict:
        return {
            "date": self.date,
            "config": self.config,
            "greenest_hour": self.greenest_hour,
            "cheapest_hour": self.cheapest_hour,
            "availability_hours": self.availability_hours,
            "recommendations": [asdict(r) for r in self.recommendations],
            "skipped": self.skipped,
            "total_emissions_saving": self.total_emissions_saving,
            "total_price_saving": self.total_price_saving,
            "relative_emissions_saving": self.relative_emissions_saving,
            "relative_price_saving": self.relative_price_saving,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        cfg = self.config
        lines = [
            f"Activity schedule for {self.date}",
            f"emissions ratio {cfg['emissions_ratio']:.2f} | aval_off {cfg['aval_off']} | "
            f"availability threshold {cfg['availability_threshold']:.2f} | "
            f"activity threshold {cfg['activity_threshold']:.2f}",
            "",
            f"{'Greenest hour':<22}{self.greenest_hour:02d}:00",
            f"{'Cheapest hour':<22}{self.cheapest_hour:02d}:00",
            "",
            f"{'Activity':<22}{'Best beginning hour':<22}{'Duration [h]'}",
        ]
        for r in sorted(self.recommendations, key=lambda r: (r.recommended_start, r.activity_id)):
            lines.append(f"{r.activity_id:<22}{r.recommended_start:02d}:00{'':<17}{r.duration}")
        if not self.recommendations:
            lines.append("(no recommendations)")
        lines += [
            "",
            f"{'Total emissions savings':<26}{self.total_emissions_saving:.2f} gCO2 "
            f"({100 * self.relative_emissions_saving:.1f} %)",
            f"{'Total price savings':<26}{self.total_price_saving:.4f} "
            f"({100 * self.relative_price_saving:.1f} %)",
        ]
        return "\n".join(lines) + "\n"


def build_schedule(usage: dict[str, np.ndarray], availability, carbon, price,
                   mapping: ActivityMapping, avg_kwh: dict[str, float],
                   config: RecommendationConfig, date: str = "") -> ScheduleReport:
    """Schedule one 24-hour horizon.

    ``usage`` maps every mapped device id to its 24 hourly usage probabilities;
    ``availability`` is the 24 hourly availability probabilities.
    """
    c, p = _values(carbon), _values(price)
    green, cheap = greenest_cheapest(c, p)
    avail = availability_hours(np.asarray(getattr(availability, "probs", availability)),
                               config.availability_threshold)
    avail_set = set(avail)
    score = blended_score(c, p, config.emissions_ratio)
    usage_mat = np.column_stack([np.asarray(usage[d], dtype=float) for d in mapping.device_ids])
    act_probs = activity_probs_day(usage_mat, mapping)
    report = ScheduleReport(date, asdict(config), green, cheap, avail)

    for i, act in enumerate(mapping.activities):
        instances = extract_instances(act_probs[:, i], config.activity_threshold, act.activity_id)
        gated = []
        for inst in instances:
            if inst.predicted_start in avail_set:
                gated.append(inst)
            else:
                report.skipped.append(_skip(inst, "not_available"))
        if not gated:
            continue
        cands = [candidate_starts(inst, act.flexibility, config.aval_off, avail) for inst in gated]
        if act.flexibility == "flexible":
            slots = assign_flexible_slots(gated, cands, score)
        else:
            slots = [SlotAssignment(best_start(inst, cs, score)) if cs
                     else SlotAssignment(None, "no_candidates")
                     for inst, cs in zip(gated, cands)]
        for inst, slot in zip(gated, slots):
            if slot.start is None:
                report.skipped.append(_skip(inst, slot.flag))
                continue
            energy = activity_energy_kwh(inst, act.devices, avg_kwh, usage, config.activity_threshold)
            dc, dp = savings(inst, slot.start, c, p, energy)
            report.recommendations.append(Recommendation(
                activity_id=act.activity_id,
                flexibility=act.flexibility,
                predicted_start=inst.predicted_start,
                duration=inst.duration,
                recommended_start=slot.start,
                energy_kwh=energy,
                emissions_saving=dc,
                price_saving=dp,
                baseline_emissions=energy * window_sum(c, inst.predicted_start, inst.duration),
                baseline_price=energy * window_sum(p, inst.predicted_start, inst.duration) / 1000.0,
                flag=slot.flag,
            ))
    return report


def _skip(inst: ActivityInstance, reason: str | None) -> dict:
    return {"activity_id": inst.activity_id, "predicted_start": inst.predicted_start,
            "duration": inst.duration, "reason": reason}
