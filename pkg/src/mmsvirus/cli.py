"""Command-line entry point: ``mmsvirus <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .callgraph import DegreeModel, assign_os, generate_graph, read_graph, write_graph
from .detection import (
    ThresholdProfile,
    compute_threshold,
    detect,
    scaled_weekly_total,
    synthesize_history,
    write_detection_csv,
    write_threshold_csv,
)
from .epidemic import SimParams, run_naive, write_summary_csv, write_trace_csv
from .experiments import (
    DEFAULT_MODEL,
    DESK_N,
    RHO_GRID,
    DetectionSpec,
    GraphSpec,
    Scenario,
    builtin_scenarios,
    default_out_dir,
    emit,
    get_scenario,
    load_config,
    load_manifest,
    run_scenario,
)
from .percolation import giant_fraction_curve, scan_augmentation_curve, write_component_csv
from .temporal import TemporalParams, make_synthetic_profile, run_temporal, write_profile_csv

log = logging.getLogger("mmsvirus")


def _add_graph_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("graph")
    g.add_argument("--graph", type=Path, help="edge-list file; overrides the generator options")
    g.add_argument("--n", type=int, default=DESK_N, help="number of handsets")
    g.add_argument("--gamma", type=float, default=DEFAULT_MODEL.gamma)
    g.add_argument("--kappa", type=float, default=DEFAULT_MODEL.kappa)
    g.add_argument("--k-min", type=int, default=DEFAULT_MODEL.k_min)
    g.add_argument("--fixed-k", type=int, help="regular degree instead of the power law")
    g.add_argument("--graph-seed", type=int, default=1)
    g.add_argument("--os-seed", type=int, default=2)


def _add_sim_args(p: argparse.ArgumentParser) -> None:
    s = p.add_argument_group("epidemic")
    s.add_argument("--m", type=float, default=0.30, help="market share of the target OS")
    s.add_argument("--s", type=int, default=100, help="maximum attack number")
    s.add_argument("--p", type=float, default=0.06, help="effective scanning probability")
    s.add_argument("--rho", type=float, default=0.0, help="random-attack probability")
    s.add_argument("--max-steps", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-repeat", action="store_true", help="never attack the same contact twice")


def _add_temporal_args(p: argparse.ArgumentParser) -> None:
    t = p.add_argument_group("temporal")
    t.add_argument("--T-days", dest="T_days", type=float, default=1.0, help="average attack period in days")
    t.add_argument("--horizon-days", type=float, default=365.0)
    t.add_argument("--daytime-only", action="store_true")
    t.add_argument("--noise-sigma", type=float, default=0.15)
    t.add_argument("--week-sigma", type=float, default=0.0)
    t.add_argument("--weeks", type=int, default=12)


def _model(args) -> DegreeModel:
    if args.fixed_k is not None:
        return DegreeModel.fixed(args.fixed_k)
    return DegreeModel.powerlaw_cutoff(args.gamma, args.kappa, args.k_min)


def _graph(args, m: float | None = None):
    if args.graph is not None:
        g = read_graph(args.graph)
        if m is not None and g.os_classes == 1:
            g = assign_os(g, [m, 1 - m], seed=args.os_seed)
        return g
    g = generate_graph(args.n, _model(args), seed=args.graph_seed)
    if m is not None:
        g = assign_os(g, [m, 1 - m], seed=args.os_seed)
    return g


def _params(args) -> SimParams:
    return SimParams(m=args.m, s=args.s, p=args.p, rho=args.rho, max_steps=args.max_steps,
                     seed=args.seed, no_repeat=args.no_repeat)


def _out(args) -> Path:
    out = Path(args.out) if args.out else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    g = _graph(args, args.m)
    out = Path(args.out) if args.out else default_out_dir() / "graph.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graph(g, out)
    print(f"wrote {g.n} handsets, {g.n_edges} edges to {out}")
    return 0


def cmd_percolate(args) -> int:
    out = _out(args)
    base = _graph(args)
    rows = giant_fraction_curve(base, args.m_values, seed=args.os_seed)
    write_component_csv(rows, out / "components.csv")
    for m, rep in rows:
        print(f"m={m:g}  components={rep.component_count}  G_m={rep.largest_fraction:.4f}")
    if args.links:
        g = assign_os(base, [args.m, 1 - args.m], seed=args.os_seed)
        curve = scan_augmentation_curve(g, 0, args.links, seed=args.seed)
        with open(out / "augmentation.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["extra_links", "component_count", "largest_size", "largest_fraction"])
            for k, rep in curve:
                w.writerow([k, rep.component_count, rep.largest_size, repr(rep.largest_fraction)])
        print(f"augmentation: largest fraction {curve[0][1].largest_fraction:.4f} -> "
              f"{curve[-1][1].largest_fraction:.4f} with {curve[-1][0]} extra links")
    return 0


def cmd_run_naive(args) -> int:
    out = _out(args)
    params = _params(args)
    g = _graph(args, args.m)
    tr = run_naive(g, params)
    write_trace_csv(tr, out / "trace.csv")
    write_summary_csv([(0, params, tr.final_infected_fraction)], out / "summary.csv")
    print(f"final I/N = {tr.final_infected_fraction:.6f} ({tr.final_infected}/{tr.susceptible_total}) "
          f"after {tr.ticks_run} ticks, {tr.total_sends} viral MMS")
    return 0


def cmd_run_temporal(args) -> int:
    out = _out(args)
    params = _params(args)
    g = _graph(args, args.m)
    profile = make_synthetic_profile()
    hist = synthesize_history(profile, scaled_weekly_total(g.n), args.noise_sigma, args.weeks,
                              seed=args.seed + 1, week_sigma=args.week_sigma)
    th = compute_threshold(hist)
    tparams = TemporalParams(params, T=args.T_days, horizon_days=args.horizon_days, daytime_only=args.daytime_only)
    tr = run_temporal(g, tparams, profile, thresholds=th)
    write_trace_csv(tr, out / "trace.csv")
    write_profile_csv(profile, out / "profile.csv")
    write_threshold_csv(th, out / "thresholds.csv")
    write_detection_csv([(0, tr.detection_bin)], out / "detection.csv")
    write_summary_csv([(0, params, tr.final_infected_fraction)], out / "summary.csv")
    status = "not detected" if tr.detection_bin is None else f"detected at bin {tr.detection_bin}"
    print(f"final I/N = {tr.final_infected_fraction:.6f}, peak bin volume {tr.viral_sends.max(initial=0)}, {status}")
    return 0


def cmd_sweep(args) -> int:
    values = tuple(args.values) if args.values else RHO_GRID
    params = _params(args)
    kind = "temporal" if args.temporal else "naive"
    graph = GraphSpec(n=args.n, model=_model(args), seed=args.graph_seed, os_seed=args.os_seed)
    sc = Scenario(args.label, kind=kind, graph=graph, params=params, T=args.T_days, horizon_days=args.horizon_days,
                  axis=args.axis, values=values, replicates=args.replicates, master_seed=args.seed,
                  detection=DetectionSpec(args.noise_sigma, args.week_sigma, args.weeks) if args.temporal else None)
    res = run_scenario(sc, workers=args.workers)
    emit([res], _out(args), traces=not args.no_traces)
    for pt in res.points:
        print(f"{sc.axis}={pt.value}: avg {pt.avg:.4f} min {pt.min:.4f} max {pt.max:.4f}")
    return 0


def _read_series(path: Path) -> tuple[np.ndarray, int]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros(0), 0
    col = "viral_volume" if "viral_volume" in rows[0] else "viral_sends"
    v = np.array([float(r[col]) for r in rows])
    offset = int(rows[0].get("bin_global_index") or 0)
    return v, offset


def _read_thresholds(path: Path) -> ThresholdProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    dv = np.zeros(84)
    for r in rows:
        dv[int(r["bin_index"])] = float(r["delta_v"])
    return ThresholdProfile(dv, 0)


def cmd_detect(args) -> int:
    v, offset = _read_series(args.trace)
    if args.thresholds is not None:
        th = _read_thresholds(args.thresholds)
    else:
        hist = synthesize_history(make_synthetic_profile(), scaled_weekly_total(args.n), args.noise_sigma,
                                  args.weeks, seed=args.seed, week_sigma=args.week_sigma)
        th = compute_threshold(hist)
    first = detect(v, th, bin_offset=offset)
    out = _out(args)
    write_detection_csv([(0, first)], out / "detection.csv")
    print("not detected" if first is None else f"detected at global bin {first} (day {first // 12})")
    return 0


def cmd_scenario(args) -> int:
    if args.list:
        for sc in builtin_scenarios(args.n):
            s = f"{{{','.join(map(str, sc.series_values))}}}" if sc.series_axis == "s" else sc.params.s
            rho = ",".join(map(str, sc.values)) if len(sc.values) < 7 else f"{len(sc.values)}-point grid"
            extra = f" T={sc.T:.4g}d" if sc.kind == "temporal" else ""
            print(f"{sc.label:22s} {sc.kind:8s} m={sc.params.m} s={s} p={sc.params.p} rho={rho}{extra}")
        return 0
    if args.manifest is not None:
        scenarios = load_manifest(args.manifest)
    elif args.config is not None:
        scenarios = load_config(args.config)
        if args.name:
            scenarios = [sc for sc in scenarios if sc.label == args.name]
    elif args.name:
        scenarios = [get_scenario(args.name, args.n)]
    else:
        raise SystemExit("scenario: give a name, --config, --manifest or --list")
    if not scenarios:
        raise SystemExit(f"no scenario named {args.name!r} in {args.config}")
    if args.replicates is not None:
        scenarios = [sc.with_overrides(replicates=args.replicates) for sc in scenarios]
    results = []
    for sc in scenarios:
        log.info("running %s (%d points x %d replicates)", sc.label, len(sc.points()), sc.replicates)
        res = run_scenario(sc, workers=args.workers)
        results.append(res)
        for pt in res.points:
            tag = "" if pt.series_value is None else f"{sc.series_axis}={pt.series_value} "
            det = "" if pt.detection_rate is None else f" detected {pt.detection_rate:.0%}"
            print(f"{sc.label}: {tag}{sc.axis}={pt.value} avg I/N {pt.avg:.4f} "
                  f"[{pt.min:.4f}, {pt.max:.4f}] G_m {pt.g_m:.4f}{det}")
    out = emit(results, _out(args), traces=not args.no_traces)
    print(f"outputs in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmsvirus", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate and label a synthetic call graph")
    _add_graph_args(p)
    p.add_argument("--m", type=float, default=0.30)
    p.add_argument("--out", help="graph file to write")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("percolate", help="giant component of the susceptible subgraph")
    _add_graph_args(p)
    p.add_argument("--m-values", type=float, nargs="+", default=[0.03, 0.1, 0.2, 0.3, 0.5, 1.0])
    p.add_argument("--m", type=float, default=0.25, help="share used for the augmentation curve")
    p.add_argument("--links", type=int, nargs="*", help="extra scan-link counts for augmentation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_percolate)

    p = sub.add_parser("run-naive", help="one worst-case run")
    _add_graph_args(p)
    _add_sim_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_naive)

    p = sub.add_parser("run-temporal", help="one stealth run with detection")
    _add_graph_args(p)
    _add_sim_args(p)
    _add_temporal_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_temporal)

    p = sub.add_parser("sweep", help="replicated sweep over one parameter")
    _add_graph_args(p)
    _add_sim_args(p)
    _add_temporal_args(p)
    p.add_argument("--axis", default="rho", choices=["rho", "s", "p", "m", "T"])
    p.add_argument("--values", type=float, nargs="+", help="axis values (default: 21-point grid on [0, 1])")
    p.add_argument("--temporal", action="store_true")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--label", default="sweep")
    p.add_argument("--no-traces", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("detect", help="check a binned viral series against delta-V")
    p.add_argument("trace", type=Path, help="temporal trace CSV")
    p.add_argument("--thresholds", type=Path, help="threshold CSV; synthesized when omitted")
    p.add_argument("--n", type=int, default=DESK_N, help="population used to scale the weekly volume")
    p.add_argument("--noise-sigma", type=float, default=0.15)
    p.add_argument("--week-sigma", type=float, default=0.0)
    p.add_argument("--weeks", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("scenario", help="run a built-in or configured scenario")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    p.add_argument("--config", type=Path, help="TOML file with [scenario.<label>] tables")
    p.add_argument("--manifest", type=Path, help="rerun every scenario recorded in a manifest")
    p.add_argument("--n", type=int, default=DESK_N)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-traces", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_scenario)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"mmsvirus: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
