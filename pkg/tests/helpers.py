import numpy as np
import pandas as pd

from loadshift.ingest import HourlyDataset


def dataset_from_usage(usage, device_ids=None, availability_ids=None, start="2014-01-06",
                       gap=None, watts=100.0) -> HourlyDataset:
    """Hourly dataset straight from a [hour, device] 0/1 usage matrix."""
    usage = np.asarray(usage, dtype=np.int8)
    if usage.ndim == 1:
        usage = usage[:, None]
    n, k = usage.shape
    device_ids = list(device_ids or [f"D{j}" for j in range(k)])
    availability_ids = list(availability_ids or device_ids[:1])
    cols = [device_ids.index(d) for d in availability_ids]
    hours = pd.Timestamp(start, tz="UTC").value // 10**9 + 3600 * np.arange(n, dtype=np.int64)
    return HourlyDataset(
        hours=hours,
        device_ids=device_ids,
        energy=usage * watts,
        usage=usage,
        availability=usage[:, cols].max(axis=1).astype(np.int8),
        gap=np.zeros(n, bool) if gap is None else np.asarray(gap, bool),
        availability_ids=availability_ids,
        avg_kwh={d: watts / 1000 for d in device_ids},
    )


def daily_pattern(days, hours, n_devices=1):
    """Same on-hours every day for every device."""
    u = np.zeros((days * 24, n_devices), dtype=np.int8)
    for d in range(days):
        for h in hours:
            u[d * 24 + h] = 1
    return u


# acceptance verdicts, echoed in the terminal summary by conftest
ACCEPTANCE: list[str] = []


def verdict(number: int, title: str, ok: bool | None, detail: str = "") -> None:
    """Record one criterion; ``ok=None`` marks a skipped criterion."""
    tag = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"[{tag}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
