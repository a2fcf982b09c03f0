"""PNG figures written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_PNG_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_cold_start(curve: pd.DataFrame, threshold: float, path, label: str = "score") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    scores = pd.to_numeric(curve["score"], errors="coerce")
    ax.plot(curve["training_days"], scores, marker=".", lw=1)
    ax.axhline(threshold, color="grey", ls="--", lw=1, label=f"threshold {threshold:g}")
    ax.set_xlabel("training days")
    ax.set_ylabel(label)
    ax.legend(loc="lower right")
    return _save(fig, path)


def plot_timing_histogram(hist: pd.DataFrame, path, title: str = "") -> Path:
    acts = list(dict.fromkeys(hist["activity"])) if len(hist) else []
    n = max(len(acts), 1)
    fig, axes = plt.subplots(n, 1, figsize=(6, 1.8 * n + 0.6), sharex=True, squeeze=False)
    for ax, act in zip(axes[:, 0], acts):
        part = hist[hist["activity"] == act]
        x = part["hour"].to_numpy()
        ax.bar(x - 0.2, part["predicted"], width=0.4, label="predicted")
        ax.bar(x + 0.2, part["recommended"], width=0.4, label="recommended")
        ax.set_ylabel(act, fontsize=8)
    if not acts:
        axes[0, 0].text(0.5, 0.5, "no accepted recommendations", ha="center", va="center")
    axes[-1, 0].set_xlabel("hour of day")
    axes[-1, 0].set_xticks(range(0, 24, 2))
    axes[0, 0].legend(fontsize=7, loc="upper left")
    if title:
        axes[0, 0].set_title(title)
    return _save(fig, path)


def plot_schedule(report, carbon, price, path) -> Path:
    """Both day-ahead signals with the recommended windows shaded."""
    hours = np.arange(24)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.step(hours, np.asarray(carbon, dtype=float), where="post", label="carbon [gCO2/kWh]")
    ax2 = ax.twinx()
    ax2.step(hours, np.asarray(price, dtype=float), where="post", color="tab:orange", label="price [/MWh]")
    stacked: dict[int, int] = {}
    for rec in report.recommendations:
        s = rec.recommended_start
        ax.axvspan(s, s + rec.duration, alpha=0.12, color="tab:green")
        k = stacked[s] = stacked.get(s, -1) + 1
        ax.text(s + 0.1 + 0.45 * k, ax.get_ylim()[1], rec.activity_id, rotation=90, va="top", fontsize=7)
    ax.set_xlim(0, 24)
    ax.set_xlabel("hour of day")
    ax.set_title(f"Recommendations for {report.date}")
    lines = ax.get_legend_handles_labels()
    lines2 = ax2.get_legend_handles_labels()
    ax.legend(lines[0] + lines2[0], lines[1] + lines2[1], fontsize=7, loc="lower right")
    return _save(fig, path)


def plot_daily_auc(frame: pd.DataFrame, path) -> Path:
    """``frame`` has columns target, day, auc."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for target, part in frame.groupby("target", sort=False):
        ax.plot(part["day"], pd.to_numeric(part["auc"], errors="coerce"), lw=1, label=target)
    ax.set_xlabel("day")
    ax.set_ylabel("daily AUC")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=6, ncol=2, loc="lower left")
    return _save(fig, path)
