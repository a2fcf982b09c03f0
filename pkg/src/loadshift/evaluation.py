"""Agent scores (AUC, EQUAL), cold-start curves, savings simulation, grid search."""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .activity import ActivityMapping, activity_probs_day
from .ingest import HourlyDataset
from .metrics import auc
from .models import RollingFitter, TrainingSchedule
from .predictors import AVAILABILITY, DayForecast, Forecaster
from .recommend import (RecommendationConfig, ScheduleReport, build_schedule, window_sum)


DEFAULT_GRIDS = {
    "aval_off": [True, False],
    "availability_threshold": [0.15, 0.3, 0.5],
    "activity_threshold": [0.15, 0.3, 0.5],
}
OBJECTIVE_RATIO = {"emissions": 1.0, "price": 0.0}


# -- AUC over days -------------------------------------------------------------

@dataclass
class AucSummary:
    per_day: dict[int, float | None]
    mean: float | None
    skipped: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "skipped_days": self.skipped,
                "per_day": {str(k): v for k, v in self.per_day.items()}}


def day_labels(dataset: HourlyDataset, target: str, day: int) -> tuple[np.ndarray, np.ndarray]:
    """(labels, valid mask) for one day; gap hours are masked out."""
    sl = dataset.day_slice(day)
    return dataset.target(target)[sl], ~dataset.gap[sl]


def summarize_auc(dataset: HourlyDataset, target: str, probs: dict[int, np.ndarray]) -> AucSummary:
    per_day = {}
    for day, p in sorted(probs.items()):
        y, ok = day_labels(dataset, target, day)
        per_day[day] = auc(np.asarray(p)[ok], y[ok])
    scored = [v for v in per_day.values() if v is not None]
    mean = float(np.mean(scored)) if scored else None
    return AucSummary(per_day, mean, len(per_day) - len(scored))


# -- EQUAL -------------------------------------------------------------------------

def identifying_devices(mapping: ActivityMapping) -> dict[str, frozenset[str]]:
    R = mapping.matrix
    return {
        a.activity_id: frozenset(d for d, r in zip(mapping.device_ids, R[i]) if r == 1)
        for i, a in enumerate(mapping.activities)
    }


def target_activity_set(usage_hour, use_th: float, mapping: ActivityMapping) -> frozenset[str]:
    """Activities with an identifying device whose usage probability exceeds ``use_th``."""
    used = {d for d, p in zip(mapping.device_ids, usage_hour) if p > use_th}
    return frozenset(a for a, ids in identifying_devices(mapping).items() if ids & used)


def predicted_activity_set(activity_probs_hour, act_th: float,
                           mapping: ActivityMapping) -> frozenset[str]:
    return frozenset(a for a, p in zip(mapping.activity_ids, activity_probs_hour) if p > act_th)


def equal_score(pairs) -> float:
    pairs = list(pairs)
    if len(pairs) != 24:
        raise ValueError(f"EQUAL needs 24 hourly set pairs, got {len(pairs)}")
    return sum(set(a) == set(b) for a, b in pairs) / 24


def day_equal(usage: np.ndarray, mapping: ActivityMapping, use_th: float, act_th: float) -> float:
    """EQUAL for one day from a [hour, device] usage-probability matrix."""
    act = activity_probs_day(usage, mapping)
    pairs = [(target_activity_set(usage[h], use_th, mapping),
              predicted_activity_set(act[h], act_th, mapping)) for h in range(24)]
    return equal_score(pairs)


@dataclass
class EqualScore:
    per_day: dict[int, float]
    mean: float | None
    use_th: float
    act_th: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "use_th": self.use_th, "act_th": self.act_th,
                "per_day": {str(k): v for k, v in self.per_day.items()}}


def summarize_equal(forecasts: dict[int, DayForecast], mapping: ActivityMapping,
                    use_th: float = 0.5, act_th: float = 0.5) -> EqualScore:
    per_day = {
        day: day_equal(fc.usage_matrix(mapping.device_ids), mapping, use_th, act_th)
        for day, fc in sorted(forecasts.items())
    }
    mean = float(np.mean(list(per_day.values()))) if per_day else None
    return EqualScore(per_day, mean, use_th, act_th)


@dataclass
class AgentReport:
    availability: AucSummary
    usage: dict[str, AucSummary]
    activity: EqualScore

    def to_dict(self) -> dict:
        return {"availability": self.availability.to_dict(),
                "usage": {d: s.to_dict() for d, s in self.usage.items()},
                "activity": self.activity.to_dict()}

    def summary_frame(self) -> pd.DataFrame:
        rows = [("availability", "auc", self.availability.mean, self.availability.skipped)]
        rows += [(f"usage:{d}", "auc", s.mean, s.skipped) for d, s in self.usage.items()]
        rows.append(("activity", "equal", self.activity.mean, 0))
        return pd.DataFrame(rows, columns=["agent", "metric", "mean", "skipped_days"])

    def daily_frame(self) -> pd.DataFrame:
        """Long table ``target,day,auc``; None marks single-class days."""
        summaries = {AVAILABILITY: self.availability, **self.usage}
        rows = [(t, day, v) for t, s in summaries.items() for day, v in s.per_day.items()]
        return pd.DataFrame(rows, columns=["target", "day", "auc"])


def evaluate_agents(dataset: HourlyDataset, mapping: ActivityMapping,
                    forecasts: dict[int, DayForecast], use_th: float = 0.5,
                    act_th: float = 0.5) -> AgentReport:
    av = summarize_auc(dataset, AVAILABILITY, {d: f.availability.probs for d, f in forecasts.items()})
    usage = {
        dev: summarize_auc(dataset, dev, {d: f.usage[dev].probs for d, f in forecasts.items()})
        for dev in mapping.device_ids
    }
    return AgentReport(av, usage, summarize_equal(forecasts, mapping, use_th, act_th))


# -- cold start ------------------------------------------------------------------

@dataclass
class ColdStartResult:
    agent: str
    threshold: float
    lengths: list[int]
    scores: list[float | None]
    test_days: list[int]
    test_hashes: list[str]
    days_to_threshold: int | None  # None means "not reached"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reached"] = self.days_to_threshold is not None
        return d

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"training_days": self.lengths, "score": self.scores})


def _test_hash(fitters: list[RollingFitter], days: list[int]) -> str:
    h = hashlib.sha256()
    for f in fitters:
        for day in days:
            sl = f.dataset.day_slice(day)
            h.update(np.ascontiguousarray(f.features.values[sl]).tobytes())
            h.update(np.ascontiguousarray(f.labels[sl]).tobytes())
    return h.hexdigest()


def cold_start(dataset: HourlyDataset, agent: str, threshold: float, test_days,
               family: str = "mlp", schedule: TrainingSchedule | None = None, seed: int = 0,
               mapping: ActivityMapping | None = None, lengths=None,
               use_th: float = 0.5, act_th: float = 0.5) -> ColdStartResult:
    """Score models trained on growing prefixes against one fixed test set.

    ``agent`` is ``availability``, a device id (usage agent) or ``activity``
    (EQUAL over all mapped devices). Prefix lengths default to daily steps
    from the headstart up to the first test day.
    """
    schedule = schedule or TrainingSchedule()
    test_days = sorted(int(d) for d in test_days)
    if not test_days:
        raise ValueError("empty test set")
    if lengths is None:
        lengths = range(schedule.headstart_days, test_days[0] + 1)
    lengths = [int(n) for n in lengths]
    if any(n > test_days[0] for n in lengths):
        raise ValueError("training prefixes overlap the test set")

    if agent == "activity":
        if mapping is None:
            raise ValueError("activity cold start needs a mapping")
        targets = list(mapping.device_ids)
    else:
        targets = [agent]
    fitters = [RollingFitter(dataset, t, family, schedule, seed) for t in targets]

    scores, hashes = [], []
    for n in lengths:
        models = [f.fit(n) for f in fitters]
        preds = {t: {d: f.predict(m, d) for d in test_days}
                 for t, f, m in zip(targets, fitters, models)}
        if agent == "activity":
            vals = [day_equal(np.column_stack([preds[t][d] for t in targets]), mapping, use_th, act_th)
                    for d in test_days]
            score = float(np.mean(vals))
        else:
            score = summarize_auc(dataset, agent, preds[agent]).mean
        scores.append(score)
        hashes.append(_test_hash(fitters, test_days))
    reached = next((n for n, s in zip(lengths, scores) if s is not None and s >= threshold), None)
    return ColdStartResult(agent, threshold, lengths, scores, test_days, hashes, reached)


# -- savings simulation ----------------------------------------------------------

@dataclass
class SavingsReport:
    days: int
    recommendations: int
    recommendations_per_year: float
    recommendations_per_day: float
    total_emissions_saving: float
    relative_emissions_saving: float
    total_price_saving: float
    relative_price_saving: float
    baseline_emissions: float
    baseline_price: float
    generated_recommendations: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SavingsResult:
    report: SavingsReport
    config: RecommendationConfig
    accepted: pd.DataFrame
    schedules: dict[int, ScheduleReport] = field(default_factory=dict)


ACCEPTED_COLUMNS = ["day", "activity_id", "flexibility", "predicted_start", "duration",
                    "recommended_start", "energy_kwh", "emissions_saving", "price_saving",
                    "baseline_emissions", "baseline_price"]


def accept(dataset: HourlyDataset, day: int, rec, mapping: ActivityMapping) -> list[str] | None:
    """Devices of the activity truly used in the instance window, or None if not acceptable.

    Acceptable means the resident was truly available at the predicted start
    and an identifying device really ran during the predicted window.
    """
    start = dataset.day_slice(day).start
    if not dataset.availability[start + rec.predicted_start]:
        return None
    rows = slice(start + rec.predicted_start, start + rec.predicted_start + rec.duration)
    used = [d for d in mapping[rec.activity_id].devices
            if dataset.usage[rows, dataset.device_index(d)].any()]
    return used or None


def simulate_savings(dataset: HourlyDataset, signals, mapping: ActivityMapping,
                     avg_kwh: dict[str, float], config: RecommendationConfig,
                     forecasts: dict[int, DayForecast], days=None,
                     keep_schedules: bool = False) -> SavingsResult:
    """Replay daily schedules and total the savings of acceptable recommendations.

    ``signals`` maps a day index to ``(carbon, price)`` (``dict`` or callable).
    Savings use the true mean hourly energy of the activity's devices that ran
    in the predicted window.
    """
    days = sorted(forecasts) if days is None else sorted(days)
    get = signals if callable(signals) else signals.__getitem__
    rows, schedules, generated = [], {}, 0
    for day in days:
        fc = forecasts[day]
        carbon, price = get(day)
        c, p = np.asarray(getattr(carbon, "values", carbon)), np.asarray(getattr(price, "values", price))
        usage = {d: fc.usage[d].probs for d in mapping.device_ids}
        sched = build_schedule(usage, fc.availability.probs, c, p, mapping, avg_kwh, config,
                               date=dataset.date_of(day))
        if keep_schedules:
            schedules[day] = sched
        generated += len(sched.recommendations)
        start = dataset.day_slice(day).start
        for rec in sched.recommendations:
            used = accept(dataset, day, rec, mapping)
            if used is None:
                continue
            window = slice(start + rec.predicted_start, start + rec.predicted_start + rec.duration)
            cols = [dataset.device_index(d) for d in used]
            energy = float(dataset.energy[window][:, cols].sum()) / rec.duration / 1000.0
            dc = window_sum(c, rec.predicted_start, rec.duration) - window_sum(c, rec.recommended_start, rec.duration)
            dp = window_sum(p, rec.predicted_start, rec.duration) - window_sum(p, rec.recommended_start, rec.duration)
            rows.append((day, rec.activity_id, rec.flexibility, rec.predicted_start, rec.duration,
                         rec.recommended_start, energy, energy * dc, energy * dp / 1000.0,
                         energy * window_sum(c, rec.predicted_start, rec.duration),
                         energy * window_sum(p, rec.predicted_start, rec.duration) / 1000.0))
    accepted = pd.DataFrame(rows, columns=ACCEPTED_COLUMNS)
    n_days = max(len(days), 1)
    tot_e = math.fsum(accepted["emissions_saving"])
    tot_p = math.fsum(accepted["price_saving"])
    base_e = math.fsum(accepted["baseline_emissions"])
    base_p = math.fsum(accepted["baseline_price"])
    report = SavingsReport(
        days=len(days),
        recommendations=len(accepted),
        recommendations_per_year=len(accepted) * 365.0 / n_days,
        recommendations_per_day=len(accepted) / n_days,
        total_emissions_saving=tot_e,
        relative_emissions_saving=tot_e / base_e if base_e else 0.0,
        total_price_saving=tot_p,
        relative_price_saving=tot_p / base_p if base_p else 0.0,
        baseline_emissions=base_e,
        baseline_price=base_p,
        generated_recommendations=generated,
    )
    return SavingsResult(report, config, accepted, schedules)


def timing_histogram(accepted: pd.DataFrame) -> pd.DataFrame:
    """Counts of predicted vs recommended start hours per activity (0-23)."""
    rows = []
    for act in sorted(accepted["activity_id"].unique()) if len(accepted) else []:
        part = accepted[accepted["activity_id"] == act]
        pred = np.bincount(part["predicted_start"], minlength=24)
        rec = np.bincount(part["recommended_start"], minlength=24)
        rows += [(act, h, int(pred[h]), int(rec[h])) for h in range(24)]
    return pd.DataFrame(rows, columns=["activity", "hour", "predicted", "recommended"])


# -- grid search -------------------------------------------------------------------

@dataclass
class GridSearchResult:
    objective: str
    best: dict
    table: pd.DataFrame


def grid_search(dataset: HourlyDataset, signals, mapping: ActivityMapping,
                avg_kwh: dict[str, float], forecasts: dict[int, DayForecast],
                grids: dict | None = None, objective: str = "emissions",
                emissions_ratio: float | None = None, days=None) -> GridSearchResult:
    """Exhaustive search over aval_off and both thresholds.

    The emissions ratio follows the objective (1.0 for emissions, 0.0 for
    price) unless given. Ties keep the earliest grid point.
    """
    if objective not in OBJECTIVE_RATIO:
        raise ValueError(f"objective must be one of {sorted(OBJECTIVE_RATIO)}")
    grids = {**DEFAULT_GRIDS, **(grids or {})}
    if any(len(v) == 0 for v in grids.values()):
        raise ValueError("empty hyperparameter grid")
    ratio = OBJECTIVE_RATIO[objective] if emissions_ratio is None else emissions_ratio
    key = "total_emissions_saving" if objective == "emissions" else "total_price_saving"
    rows, best, best_val = [], None, -math.inf
    for aval_off, av_th, act_th in itertools.product(
            grids["aval_off"], grids["availability_threshold"], grids["activity_threshold"]):
        cfg = RecommendationConfig(bool(aval_off), ratio, float(av_th), float(act_th))
        rep = simulate_savings(dataset, signals, mapping, avg_kwh, cfg, forecasts, days).report
        row = {**asdict(cfg), **rep.to_dict()}
        rows.append(row)
        if row[key] > best_val:
            best, best_val = asdict(cfg), row[key]
    return GridSearchResult(objective, best, pd.DataFrame(rows))


def all_forecasts(dataset: HourlyDataset, mapping: ActivityMapping, family: str = "mlp",
                  schedule: TrainingSchedule | None = None, seed: int = 0,
                  days=None) -> dict[int, DayForecast]:
    fc = Forecaster(dataset, list(mapping.device_ids), family, schedule or TrainingSchedule(), seed)
    return fc.days(fc.post_headstart_days() if days is None else days)
