"""
Replicated scenario runs, aggregation and plot-ready CSV output.

A :class:`Scenario` names a graph, the epidemic parameters, one sweep axis
(``rho`` by default) and optionally a series axis drawn as separate curves
(``s`` in the naive sweeps). Every replicate gets its own seed derived from
the master seed, and the same replicate seeds are reused at every sweep
point so curves differ only through the swept parameter.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .callgraph import CallGraph, DegreeModel, assign_os, generate_graph
from .detection import (
    REFERENCE_USER_BASE,
    compute_threshold,
    scaled_weekly_total,
    synthesize_history,
    write_detection_csv,
    write_threshold_csv,
)
from .epidemic import EpidemicTrace, SimParams, run_naive, write_summary_csv, write_trace_csv
from .percolation import ComponentReport, components, susceptible_subgraph, write_component_csv
from .temporal import TemporalParams, make_synthetic_profile, run_temporal, write_profile_csv

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "DESK_N",
    "DEFAULT_MODEL",
    "RHO_GRID",
    "GraphSpec",
    "ProfileSpec",
    "DetectionSpec",
    "Scenario",
    "RunRecord",
    "PointSummary",
    "SweepResult",
    "ScenarioError",
    "run_scenario",
    "builtin_scenarios",
    "get_scenario",
    "emit",
    "load_config",
    "load_manifest",
    "rerun_manifest",
    "default_out_dir",
]

DESK_N = 50_000
DEFAULT_MODEL = DegreeModel.powerlaw_cutoff(2.2, 30.0, 2)
RHO_GRID = tuple(round(i / 20, 2) for i in range(21))
OUT_ENV = "MMSVIRUS_OUT"
_SWEEPABLE = {"m", "s", "p", "rho", "T"}


class ScenarioError(RuntimeError):
    def __init__(self, label: str, exc: BaseException):
        super().__init__(f"scenario {label!r}: {type(exc).__name__}: {exc}")
        self.label = label


@dataclass(frozen=True)
class GraphSpec:
    n: int = DESK_N
    model: DegreeModel = DEFAULT_MODEL
    seed: int = 1
    os_seed: int = 2

    def to_dict(self) -> dict:
        return {"n": self.n, "model": self.model.to_dict(), "seed": self.seed, "os_seed": self.os_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSpec":
        d = dict(d)
        if "model" in d:
            d["model"] = DegreeModel.from_dict(d["model"])
        return cls(**d)


@lru_cache(maxsize=4)
def _base_graph(spec: GraphSpec) -> CallGraph:
    return generate_graph(spec.n, spec.model, seed=spec.seed)


@lru_cache(maxsize=16)
def _labeled_graph(spec: GraphSpec, m: float) -> CallGraph:
    return assign_os(_base_graph(spec), [m, 1.0 - m], seed=spec.os_seed)


@lru_cache(maxsize=16)
def _giant(spec: GraphSpec, m: float) -> tuple[ComponentReport, np.ndarray]:
    g = _labeled_graph(spec, m)
    rep = components(susceptible_subgraph(g, 0))
    return rep, np.flatnonzero(g.os_label == 0)[rep.member_of_largest]


@dataclass(frozen=True)
class ProfileSpec:
    shape: str = "diurnal-weekly"
    peak_days: tuple[str, ...] = ("Sun", "Mon", "Tue")
    day_night_ratio: float = 8.0
    peak_boost: float = 1.5

    def build(self):
        return make_synthetic_profile(self.shape, peak_days=self.peak_days,
                                      day_night_ratio=self.day_night_ratio, peak_boost=self.peak_boost)

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileSpec":
        d = dict(d)
        if "peak_days" in d:
            d["peak_days"] = tuple(d["peak_days"])
        return cls(**d)


@dataclass(frozen=True)
class DetectionSpec:
    """How the per-replicate threshold history is synthesized.

    ``weekly_total`` of ``None`` scales the operator volume to the graph size.
    """

    noise_sigma: float = 0.15
    week_sigma: float = 0.0
    weeks: int = 12
    weekly_total: float | None = None


@dataclass(frozen=True)
class Scenario:
    label: str
    kind: str = "naive"
    graph: GraphSpec = field(default_factory=GraphSpec)
    params: SimParams = field(default_factory=SimParams)
    T: float = 1.0
    horizon_days: float = 365.0
    profile: ProfileSpec | None = None
    detection: DetectionSpec | None = None
    axis: str = "rho"
    values: tuple = ()
    series_axis: str | None = None
    series_values: tuple = ()
    replicates: int = 10
    master_seed: int = 0
    seeds: tuple[int, ...] | None = None
    seed_node: str = "random"

    def __post_init__(self):
        if self.kind not in ("naive", "temporal"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for ax in (self.axis, self.series_axis):
            if ax is not None and ax not in _SWEEPABLE:
                raise ValueError(f"cannot sweep {ax!r}; choose from {sorted(_SWEEPABLE)}")
        if "T" in (self.axis, self.series_axis) and self.kind != "temporal":
            raise ValueError("T only applies to temporal scenarios")
        if self.seeds is not None and len(self.seeds) < self.replicates:
            raise ValueError("fewer fixed seeds than replicates")
        if self.seed_node not in ("random", "giant"):
            raise ValueError("seed_node must be 'random' or 'giant'")
        if self.kind == "temporal" and self.profile is None:
            object.__setattr__(self, "profile", ProfileSpec())
        if not self.values:
            object.__setattr__(self, "values", (self._base_value(self.axis),))
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "series_values", tuple(self.series_values))
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def _base_value(self, axis: str):
        return self.T if axis == "T" else getattr(self.params, axis)

    def replicate_seeds(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds[:self.replicates])
        return [int(x) for x in np.random.SeedSequence(self.master_seed).generate_state(self.replicates)]

    def points(self) -> list[tuple[object, object]]:
        """(series value or None, axis value) pairs in output order."""
        series = self.series_values if self.series_axis else (None,)
        return [(sv, v) for sv in series for v in self.values]

    def settings_at(self, series_value, value) -> tuple[SimParams, float]:
        changes = {}
        T = self.T
        for ax, v in ((self.series_axis, series_value), (self.axis, value)):
            if ax is None:
                continue
            if ax == "T":
                T = float(v)
            else:
                changes[ax] = int(v) if ax == "s" else float(v)
        return self.params.replace(**changes), T

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "kind": self.kind,
            "graph": self.graph.to_dict(),
            "params": self.params.to_dict(),
            "T": self.T,
            "horizon_days": self.horizon_days,
            "axis": self.axis,
            "values": list(self.values),
            "series_axis": self.series_axis,
            "series_values": list(self.series_values),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "seeds": list(self.seeds) if self.seeds is not None else None,
            "seed_node": self.seed_node,
            "profile": asdict(self.profile) if self.profile else None,
            "detection": asdict(self.detection) if self.detection else None,
        }
        if d["profile"]:
            d["profile"]["peak_days"] = list(d["profile"]["peak_days"])
        return d

    @classmethod
    def from_dict(cls, d: dict, label: str | None = None) -> "Scenario":
        d = {k: v for k, v in d.items() if v is not None}
        if label is not None:
            d["label"] = label
        if "graph" in d:
            d["graph"] = GraphSpec.from_dict(d["graph"])
        if "params" in d:
            d["params"] = SimParams(**d["params"])
        if "profile" in d:
            d["profile"] = ProfileSpec.from_dict(d["profile"])
        if "detection" in d:
            d["detection"] = DetectionSpec(**d["detection"])
        for k in ("values", "series_values", "seeds"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class RunRecord:
    run_id: int
    series_value: object
    value: object
    replicate: int
    seed: int
    params: SimParams
    final_fraction: float
    final_infected: int
    susceptible_total: int
    total_sends: int
    detection_bin: int | None = None
    trace: EpidemicTrace | None = None
    thresholds: object = None


@dataclass(frozen=True)
class PointSummary:
    series_value: object
    value: object
    avg: float
    min: float
    max: float
    g_m: float
    component_report: ComponentReport
    m: float
    detection_rate: float | None = None


@dataclass
class SweepResult:
    scenario: Scenario
    points: list[PointSummary]
    records: list[RunRecord]

    def point(self, value, series_value=None) -> PointSummary:
        for pt in self.points:
            if pt.value == value and pt.series_value == series_value:
                return pt
        raise KeyError((series_value, value))

    def curve(self, series_value=None) -> list[PointSummary]:
        return [pt for pt in self.points if pt.series_value == series_value]

    def fractions(self, value, series_value=None) -> np.ndarray:
        return np.array([r.final_fraction for r in self.records
                         if r.value == value and r.series_value == series_value])


def _one_run(sc: Scenario, series_value, value, replicate: int, seed: int, run_id: int) -> RunRecord:
    params, T = sc.settings_at(series_value, value)
    params = params.replace(seed=seed)
    g = _labeled_graph(sc.graph, params.m)
    seed_node = None
    if sc.seed_node == "giant":
        _, giant = _giant(sc.graph, params.m)
        seed_node = int(giant[np.random.default_rng(seed).integers(giant.size)])
    detection, thresholds = None, None
    if sc.kind == "naive":
        tr = run_naive(g, params, seed_node=seed_node)
    else:
        profile = sc.profile.build()
        if sc.detection is not None:
            det = sc.detection
            total = det.weekly_total if det.weekly_total is not None else scaled_weekly_total(g.n)
            hist_seed = int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])
            thresholds = compute_threshold(synthesize_history(
                profile, total, det.noise_sigma, det.weeks, seed=hist_seed, week_sigma=det.week_sigma))
        tparams = TemporalParams(params, T=T, horizon_days=sc.horizon_days)
        tr = run_temporal(g, tparams, profile, seed_node=seed_node, thresholds=thresholds)
        detection = tr.detection_bin
    tr.state = None
    return RunRecord(run_id, series_value, value, replicate, seed, params, tr.final_infected_fraction,
                     tr.final_infected, tr.susceptible_total, tr.total_sends, detection, tr, thresholds)


def _run_task(args) -> RunRecord:
    sc = args[0]
    try:
        with warnings.catch_warnings():
            # the clamp warning repeats for every replicate of a fast-attack scenario
            warnings.simplefilter("ignore", RuntimeWarning)
            return _one_run(*args)
    except Exception as exc:
        raise ScenarioError(sc.label, exc) from exc


def run_scenario(sc: Scenario, workers: int = 1, keep_traces: bool = True) -> SweepResult:
    """Run every (point, replicate) of ``sc`` and aggregate per point.

    ``workers`` > 1 runs replicates in separate processes; the reduction is
    always done in replicate order so the result does not depend on it.
    """
    seeds = sc.replicate_seeds()
    tasks = []
    for sv, v in sc.points():
        for r, seed in enumerate(seeds):
            tasks.append((sc, sv, v, r, seed, len(tasks)))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = [_run_task(t) for t in tasks]
    if not keep_traces:
        for rec in records:
            rec.trace = None

    points = []
    k = 0
    for sv, v in sc.points():
        recs = records[k:k + len(seeds)]
        k += len(seeds)
        frac = [r.final_fraction for r in recs]
        m = recs[0].params.m
        try:
            rep, _ = _giant(sc.graph, m)
        except Exception as exc:
            raise ScenarioError(sc.label, exc) from exc
        rate = None
        if sc.kind == "temporal" and sc.detection is not None:
            rate = sum(r.detection_bin is not None for r in recs) / len(recs)
        points.append(PointSummary(sv, v, sum(frac) / len(frac), min(frac), max(frac),
                                   rep.largest_fraction, rep, m, rate))
    return SweepResult(sc, points, records)


def builtin_scenarios(n: int = DESK_N) -> list[Scenario]:
    """Desk-scale rho sweeps, the giant-component bound and the two stealth scenarios."""
    graph = GraphSpec(n=n)
    stealth_detection = DetectionSpec(noise_sigma=0.15, week_sigma=0.6)
    return [
        Scenario("rho-sweep-m003", graph=graph, params=SimParams(m=0.03, p=0.06),
                 values=RHO_GRID, series_axis="s", series_values=(100, 500, 1000)),
        Scenario("rho-sweep-m003-p025", graph=graph, params=SimParams(m=0.03, p=0.25),
                 values=RHO_GRID, series_axis="s", series_values=(100, 500, 1000)),
        Scenario("rho-sweep-m030", graph=graph, params=SimParams(m=0.30, p=0.06),
                 values=RHO_GRID, series_axis="s", series_values=(10, 50, 100)),
        Scenario("rho-sweep-m030-p025", graph=graph, params=SimParams(m=0.30, p=0.25),
                 values=RHO_GRID, series_axis="s", series_values=(10, 50, 100)),
        Scenario("giant-bound-m003", kind="temporal", graph=graph, params=SimParams(m=0.03, s=1000, p=0.06),
                 T=1 / 12, values=(0.0, 0.1, 0.3, 0.5, 0.7, 1.0)),
        Scenario("stealth-m030", kind="temporal", graph=graph,
                 params=SimParams(m=0.30, s=50, rho=0.1, p=0.25), T=2.5, detection=stealth_detection),
        Scenario("detected-m003", kind="temporal", graph=graph,
                 params=SimParams(m=0.03, s=1000, rho=0.3, p=0.25), T=1 / 12, detection=stealth_detection),
    ]


def get_scenario(label: str, n: int = DESK_N) -> Scenario:
    for sc in builtin_scenarios(n):
        if sc.label == label:
            return sc
    raise KeyError(f"no built-in scenario {label!r}")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "out"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _series_tag(sc: Scenario, sv) -> str:
    return "" if sc.series_axis is None else f"_{sc.series_axis}{_fmt(sv)}"


def _manifest(results: Sequence[SweepResult]) -> dict:
    return {
        "format": "mmsvirus-manifest/1",
        "version": __version__,
        "reference_user_base": REFERENCE_USER_BASE,
        "note": "desk-scale runs; comparisons with operator-scale results are directional only",
        "scenarios": [r.scenario.to_dict() for r in results],
    }


def emit(results: Sequence[SweepResult], out_dir, traces: bool = True) -> Path:
    """Write CSVs for each result under ``out_dir/<label>/`` plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for res in results:
        sc = res.scenario
        d = out / sc.label
        d.mkdir(parents=True, exist_ok=True)
        series = sc.series_values if sc.series_axis else (None,)
        for sv in series:
            with open(d / f"sweep{_series_tag(sc, sv)}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([sc.axis, "avg", "min", "max"])
                for pt in res.curve(sv):
                    w.writerow([_fmt(pt.value), _fmt(pt.avg), _fmt(pt.min), _fmt(pt.max)])
        write_summary_csv([(r.run_id, r.params, r.final_fraction) for r in res.records], d / "summary.csv")
        by_m = {pt.m: pt.component_report for pt in res.points}
        write_component_csv(sorted(by_m.items(), key=lambda x: x[0]), d / "components.csv")
        if sc.kind == "temporal":
            write_profile_csv(sc.profile.build(), d / "profile.csv")
            if sc.detection is not None:
                write_detection_csv([(r.run_id, r.detection_bin) for r in res.records], d / "detection.csv")
                td = d / "thresholds"
                td.mkdir(exist_ok=True)
                for r in res.records:
                    if r.thresholds is not None and r.series_value == series[0] and r.value == sc.values[0]:
                        write_threshold_csv(r.thresholds, td / f"thresholds_rep{r.replicate}.csv")
        if traces:
            td = d / "traces"
            td.mkdir(exist_ok=True)
            for r in res.records:
                if r.trace is not None:
                    write_trace_csv(r.trace, td / f"run_{r.run_id}.csv")
    with open(out / "manifest.json", "w") as fh:
        json.dump(_manifest(results), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_manifest(path) -> list[Scenario]:
    with open(path) as fh:
        data = json.load(fh)
    return [Scenario.from_dict(d) for d in data["scenarios"]]


def rerun_manifest(path, out_dir, workers: int = 1, traces: bool = True) -> list[SweepResult]:
    results = [run_scenario(sc, workers=workers) for sc in load_manifest(path)]
    emit(results, out_dir, traces=traces)
    return results


def load_config(path) -> list[Scenario]:
    """Scenarios from a TOML file with one ``[scenario.<label>]`` table each.

    A table may name a built-in scenario with ``base = "<label>"`` and
    override any of its fields.
    """
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    out = []
    for label, body in data.get("scenario", {}).items():
        body = dict(body)
        base = body.pop("base", None)
        if base is not None:
            d = get_scenario(base).to_dict()
            for k, v in body.items():
                if isinstance(v, dict) and isinstance(d.get(k), dict):
                    d[k] = {**d[k], **v}
                else:
                    d[k] = v
            body = d
        out.append(Scenario.from_dict(body, label=label))
    return out
