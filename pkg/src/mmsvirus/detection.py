"""
Operator-side volume anomaly threshold.

The threshold for each weekly two-hour bin is the gap between the largest
and the average volume seen in that bin over the recorded weeks. Viral
traffic larger than the gap stands out from ordinary fluctuations.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .temporal import BINS_PER_DAY, BINS_PER_WEEK, DAY_NAMES, VolumeProfile

__all__ = [
    "REFERENCE_WEEKLY_VOLUME",
    "REFERENCE_USER_BASE",
    "VolumeHistory",
    "ThresholdProfile",
    "compute_threshold",
    "synthesize_history",
    "scaled_weekly_total",
    "detect",
    "write_threshold_csv",
    "write_detection_csv",
]

# average weekly MMS count and subscriber base of the operator dataset
REFERENCE_WEEKLY_VOLUME = 4.7e6
REFERENCE_USER_BASE = 6e6


@dataclass(frozen=True)
class VolumeHistory:
    weeks: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weeks, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != BINS_PER_WEEK:
            raise ValueError(f"history must be shaped (weeks, {BINS_PER_WEEK})")
        if (w < 0).any():
            raise ValueError("volumes must be non-negative")
        object.__setattr__(self, "weeks", w)


@dataclass(frozen=True)
class ThresholdProfile:
    delta_v: np.ndarray
    derived_from_weeks: int
    max_volume: np.ndarray | None = None
    mean_volume: np.ndarray | None = None


def compute_threshold(history: VolumeHistory) -> ThresholdProfile:
    """Per-bin max minus mean over the weeks of ``history``."""
    w = history.weeks
    if w.shape[0] == 0:
        raise ValueError("history has no weeks")
    if w.shape[0] == 1:
        warnings.warn("a single week gives delta-V = 0 everywhere", RuntimeWarning, stacklevel=2)
    mx = w.max(axis=0)
    mean = w.mean(axis=0)
    # max >= mean holds exactly; clip guards float round-off
    return ThresholdProfile(np.maximum(mx - mean, 0.0), int(w.shape[0]), mx, mean)


def scaled_weekly_total(n: int) -> float:
    """Weekly MMS volume of an ``n``-handset population at the dataset's per-user rate."""
    return REFERENCE_WEEKLY_VOLUME * n / REFERENCE_USER_BASE


def _unit_gamma(rng: np.random.Generator, sigma: float, size) -> np.ndarray:
    if sigma == 0:
        return np.ones(size)
    k = 1.0 / sigma ** 2
    return rng.gamma(k, 1.0 / k, size=size)


def synthesize_history(profile: VolumeProfile, weekly_total: float = REFERENCE_WEEKLY_VOLUME,
                       noise_sigma: float = 0.15, weeks: int = 12, seed=None,
                       week_sigma: float = 0.0) -> VolumeHistory:
    """Noisy weekly volumes around ``weekly_total * profile.bins``.

    Each bin of each week is scaled by an independent gamma factor with mean
    1 and standard deviation ``noise_sigma``, then rounded to a count.
    ``week_sigma`` > 0 adds a shared unit-mean factor per week (busy and
    quiet weeks), which makes the per-bin maxima come from the same weeks.
    """
    if not weekly_total > 0:
        raise ValueError("weekly_total must be > 0")
    if noise_sigma < 0 or week_sigma < 0:
        raise ValueError("noise spreads must be >= 0")
    if weeks < 1:
        raise ValueError("weeks must be >= 1")
    base = weekly_total * profile.bins
    rng = np.random.default_rng(seed)
    factor = _unit_gamma(rng, noise_sigma, (weeks, BINS_PER_WEEK))
    if week_sigma > 0:
        factor = factor * _unit_gamma(rng, week_sigma, (weeks, 1))
    return VolumeHistory(np.rint(base[None, :] * factor))


def detect(viral_per_bin, thresholds: ThresholdProfile, bin_offset: int = 0,
           background=None) -> int | None:
    """Earliest global bin index at which the viral volume exceeds delta-V.

    Entry ``i`` of ``viral_per_bin`` is global bin ``i + bin_offset``, which
    sits at weekly position ``(i + bin_offset) % 84``. With ``background``
    (same length), the test becomes background + viral > historical max.
    """
    v = np.asarray(viral_per_bin, dtype=np.float64)
    if v.size == 0:
        return None
    pos = (np.arange(v.size) + bin_offset) % BINS_PER_WEEK
    if background is None:
        over = v > thresholds.delta_v[pos]
    else:
        if thresholds.max_volume is None:
            raise ValueError("total-volume mode needs the historical maxima")
        over = np.asarray(background, dtype=np.float64) + v > thresholds.max_volume[pos]
    hits = np.flatnonzero(over)
    return int(hits[0]) + bin_offset if hits.size else None


def write_threshold_csv(thresholds: ThresholdProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_index", "delta_v"])
        for i, d in enumerate(thresholds.delta_v.tolist()):
            w.writerow([i, repr(float(d))])


def write_detection_csv(rows, path) -> None:
    """Rows of ``(run_id, first_bin or None)``; ``first_day`` counts days from the start."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "detected", "first_bin", "first_day"])
        for run_id, first in rows:
            if first is None:
                w.writerow([run_id, 0, "", ""])
            else:
                w.writerow([run_id, 1, first, first // BINS_PER_DAY])


def weekday_of_bin(global_bin: int) -> str:
    return DAY_NAMES[(global_bin % BINS_PER_WEEK) // BINS_PER_DAY]
