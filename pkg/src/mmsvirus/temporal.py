"""
Stealth spreading that follows the weekly MMS volume pattern.

The week is cut into 84 two-hour bins of 60 two-minute steps each. An
infected handset with average attack period ``T`` (days) sends 7/T viral
MMSs per week in expectation, distributed over the bins in proportion to the
normal traffic share of each bin.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .callgraph import CallGraph
from .epidemic import EpidemicTrace, SimParams, _as_rng, _Spread

__all__ = [
    "BINS_PER_DAY",
    "BINS_PER_WEEK",
    "STEPS_PER_BIN",
    "DAY_NAMES",
    "VolumeProfile",
    "TemporalParams",
    "per_step_attack_probability",
    "make_synthetic_profile",
    "run_temporal",
    "write_profile_csv",
    "read_profile_csv",
]

BINS_PER_DAY = 12
BINS_PER_WEEK = 7 * BINS_PER_DAY
STEPS_PER_BIN = 60
STEPS_PER_DAY = BINS_PER_DAY * STEPS_PER_BIN
DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
# 08:00-22:00
DEFAULT_DAYTIME_BINS = tuple(range(4, 11))


@dataclass(frozen=True)
class VolumeProfile:
    """Share of the weekly MMS volume in each two-hour bin, Monday 00:00 first."""

    bins: np.ndarray
    steps_per_bin: int = STEPS_PER_BIN

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.float64).copy()
        if b.shape != (BINS_PER_WEEK,):
            raise ValueError(f"profile needs {BINS_PER_WEEK} bins, got shape {b.shape}")
        if (b < 0).any():
            raise ValueError("bin fractions must be non-negative")
        if abs(b.sum() - 1.0) > 1e-9:
            raise ValueError(f"bin fractions sum to {b.sum()!r}, expected 1")
        b.setflags(write=False)
        object.__setattr__(self, "bins", b)

    def day_totals(self) -> np.ndarray:
        return self.bins.reshape(7, BINS_PER_DAY).sum(axis=1)


@dataclass(frozen=True)
class TemporalParams:
    base: SimParams
    T: float = 1.0
    horizon_days: float = 365.0
    week_offset_bins: int = 0
    daytime_only: bool = False
    daytime_bins: tuple[int, ...] = DEFAULT_DAYTIME_BINS

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("attack period T must be > 0")
        if self.horizon_days < 0:
            raise ValueError("horizon must be >= 0")

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon_days * STEPS_PER_DAY))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["daytime_bins"] = list(self.daytime_bins)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TemporalParams":
        d = dict(d)
        d["base"] = SimParams(**d["base"])
        if "daytime_bins" in d:
            d["daytime_bins"] = tuple(d["daytime_bins"])
        return cls(**d)


def per_step_attack_probability(T: float, bin_fraction: float, steps_per_bin: int = STEPS_PER_BIN,
                                warn: bool = True) -> float:
    """Chance that one infected handset sends in a given step of a bin.

    Weekly sends 7/T times the bin's traffic share, spread over its steps.
    Values above 1 are clamped (with a warning) since a handset sends at
    most once per step.
    """
    if not T > 0:
        raise ValueError("attack period T must be > 0")
    if not 0 <= bin_fraction <= 1:
        raise ValueError("bin_fraction must be in [0, 1]")
    q = (7.0 / T) * bin_fraction / steps_per_bin
    if q > 1.0:
        if warn:
            warnings.warn(f"per-step attack probability {q:.4g} clamped to 1 (T={T}, bin share={bin_fraction})",
                          RuntimeWarning, stacklevel=2)
        q = 1.0
    return q


def make_synthetic_profile(shape: str = "diurnal-weekly", peak_days: Sequence[str | int] = ("Sun", "Mon", "Tue"),
                           day_night_ratio: float = 8.0, peak_boost: float = 1.5,
                           daytime_bins: Sequence[int] = DEFAULT_DAYTIME_BINS,
                           jitter: float = 0.0, seed=None) -> VolumeProfile:
    """Build a normalized weekly profile.

    ``diurnal-weekly`` gives daytime bins ``day_night_ratio`` times the weight
    of night bins and multiplies every bin of a peak day by ``peak_boost``.
    ``jitter`` > 0 applies multiplicative lognormal noise per bin (this breaks
    the exact day/night ratio).
    """
    if shape == "uniform":
        w = np.ones(BINS_PER_WEEK)
    elif shape == "diurnal-weekly":
        if day_night_ratio < 0 or peak_boost < 0:
            raise ValueError("ratios must be non-negative")
        day = np.ones(BINS_PER_DAY)
        day[list(daytime_bins)] = day_night_ratio
        boost = np.ones(7)
        for d in peak_days:
            boost[d if isinstance(d, int) else DAY_NAMES.index(d)] = peak_boost
        w = (boost[:, None] * day[None, :]).ravel()
    else:
        raise ValueError(f"unknown profile shape {shape!r}")
    if jitter > 0:
        w = w * np.random.default_rng(seed).lognormal(0.0, jitter, size=w.size)
    total = w.sum()
    if not total > 0:
        raise ValueError("profile shape has zero total weight")
    return VolumeProfile(w / total)


def _bin_probabilities(tparams: TemporalParams, profile: VolumeProfile) -> np.ndarray:
    q = np.array([per_step_attack_probability(tparams.T, f, profile.steps_per_bin, warn=False)
                  for f in profile.bins])
    raw = (7.0 / tparams.T) * profile.bins / profile.steps_per_bin
    if (raw > 1.0).any():
        warnings.warn(f"{int((raw > 1).sum())} bins have per-step attack probability above 1; clamped",
                      RuntimeWarning, stacklevel=3)
    if tparams.daytime_only:
        gate = np.zeros(BINS_PER_DAY, dtype=bool)
        gate[list(tparams.daytime_bins)] = True
        q = np.where(np.tile(gate, 7), q, 0.0)
    return q


def _conditional_senders(n_active: int, q: float, p_any: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of senders among ``n_active`` Bernoulli(q) trials, given at least one.

    The first sender index follows a truncated geometric law; later trials
    are unconditioned.
    """
    u = rng.random()
    j = math.ceil(math.log1p(-u * p_any) / math.log1p(-q)) - 1
    j = min(max(j, 0), n_active - 1)
    rest = np.flatnonzero(rng.random(n_active - j - 1) < q) + j + 1
    return np.concatenate([[j], rest]).astype(np.int64)


def run_temporal(graph: CallGraph, tparams: TemporalParams, profile: VolumeProfile,
                 seed_node: int | None = None, seed=None, thresholds=None,
                 halt_on_detect: bool = False) -> EpidemicTrace:
    """Stealth run over ``tparams.horizon_days``; the trace is binned per two hours.

    In every step of weekly bin ``b`` each handset able to send does so
    independently with probability ``per_step_attack_probability(T, bins[b])``.
    Empty stretches are skipped by drawing the waiting time to the next step
    with any sender, which is exact because nothing changes in between.
    With ``thresholds`` (a ``ThresholdProfile``) the first bin whose viral
    volume exceeds its delta-V is recorded, and ``halt_on_detect`` stops
    the run there.
    """
    base = tparams.base
    rng = _as_rng(base.seed if seed is None else seed)
    sp = _Spread(graph, base, seed_node, rng)
    q_bin = _bin_probabilities(tparams, profile)
    spb = profile.steps_per_bin
    horizon = tparams.horizon_steps
    n_bins = -(-horizon // spb)
    volume = np.zeros(n_bins, dtype=np.int64)
    infected = np.zeros(n_bins, dtype=np.int64)
    offset = tparams.week_offset_bins
    detection = None

    t = 0
    for b in range(n_bins):
        bin_end = min((b + 1) * spb, horizon)
        q = q_bin[(b + offset) % BINS_PER_WEEK]
        while t < bin_end and not sp.exhausted:
            a = sp.active.size
            if q <= 0.0:
                t = bin_end
                break
            if q >= 1.0:
                senders = sp.active
            else:
                p_any = -math.expm1(a * math.log1p(-q))
                if p_any <= 0.0:
                    t = bin_end
                    break
                t += int(rng.geometric(p_any)) - 1
                if t >= bin_end:
                    # memoryless: redraw with the next bin's probability
                    t = bin_end
                    break
                senders = sp.active[_conditional_senders(a, q, p_any, rng)]
            sp.fire(senders, t)
            sp.promote()
            volume[b] += senders.size
            t += 1
        infected[b] = sp.n_infected
        if thresholds is not None and detection is None:
            if volume[b] > thresholds.delta_v[(b + offset) % BINS_PER_WEEK]:
                detection = b + offset
                if halt_on_detect:
                    volume, infected = volume[:b + 1], infected[:b + 1]
                    break
        if sp.exhausted:
            # nobody can ever send again
            infected[b:] = sp.n_infected
            t = horizon
    return EpidemicTrace(
        infected=infected,
        viral_sends=volume,
        susceptible_total=sp.susceptible_total,
        seed_node=sp.seed_node,
        state=sp.state,
        bin_ticks=spb,
        bin_offset=offset,
        detection_bin=detection,
        ticks_run=min(t, horizon),
    )


def write_profile_csv(profile: VolumeProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "bin_index", "fraction"])
        for i, f in enumerate(profile.bins.tolist()):
            w.writerow([DAY_NAMES[i // BINS_PER_DAY], i, repr(f)])


def read_profile_csv(path) -> VolumeProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    bins = np.zeros(BINS_PER_WEEK)
    for r in rows:
        bins[int(r["bin_index"])] = float(r["fraction"])
    return VolumeProfile(bins)
