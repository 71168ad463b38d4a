import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmsvirus.callgraph import CallGraph, DegreeModel, assign_os, generate_graph
from mmsvirus.detection import ThresholdProfile
from mmsvirus.epidemic import SimParams, write_trace_csv
from mmsvirus.percolation import UnionFind, components, susceptible_subgraph
from mmsvirus.temporal import (
    BINS_PER_WEEK,
    DEFAULT_DAYTIME_BINS,
    TemporalParams,
    VolumeProfile,
    make_synthetic_profile,
    per_step_attack_probability,
    read_profile_csv,
    run_temporal,
    write_profile_csv,
)

UNIFORM = make_synthetic_profile("uniform")


def test_attack_probability_formula():
    assert abs(per_step_attack_probability(1.0, 0.02) - 7 * 0.02 / 60) < 1e-12
    assert round(per_step_attack_probability(1.0, 0.02), 4) == 0.0023
    assert per_step_attack_probability(3.0, 0.0) == 0.0
    assert per_step_attack_probability(7.0, 1 / 84) == pytest.approx(1 / 5040, rel=1e-12)


def test_attack_probability_clamps_with_warning():
    with pytest.warns(RuntimeWarning):
        assert per_step_attack_probability(1 / 12, 0.9) == 1.0
    with pytest.raises(ValueError):
        per_step_attack_probability(0.0, 0.1)
    with pytest.raises(ValueError):
        per_step_attack_probability(1.0, 1.5)


@given(T=st.floats(0.5, 30.0), seed=st.integers(0, 10**6), jitter=st.floats(0.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_weekly_send_identity(T, seed, jitter):
    prof = make_synthetic_profile(jitter=jitter, seed=seed)
    total = sum(per_step_attack_probability(T, f) * prof.steps_per_bin for f in prof.bins)
    assert total == pytest.approx(7.0 / T, rel=1e-9)


def test_uniform_profile():
    assert np.allclose(UNIFORM.bins, 1 / 84)


def test_day_night_ratio_is_exact():
    prof = make_synthetic_profile(peak_boost=1.0, day_night_ratio=6.5)
    day = np.zeros(12, dtype=bool)
    day[list(DEFAULT_DAYTIME_BINS)] = True
    mask = np.tile(day, 7)
    assert abs(prof.bins[mask].mean() / prof.bins[~mask].mean() - 6.5) < 1e-9


def test_peak_days_carry_the_largest_totals():
    totals = make_synthetic_profile(peak_days=("Sun", "Mon", "Tue")).day_totals()
    peak = totals[[6, 0, 1]]
    rest = totals[[2, 3, 4, 5]]
    assert peak.min() > rest.max()


def test_profile_validation():
    with pytest.raises(ValueError):
        VolumeProfile(np.ones(83) / 83)
    with pytest.raises(ValueError):
        VolumeProfile(np.full(84, 0.5))
    with pytest.raises(ValueError):
        make_synthetic_profile("diurnal-weekly", day_night_ratio=0.0, daytime_bins=range(12))
    with pytest.raises(ValueError):
        make_synthetic_profile("sawtooth")
    with pytest.raises(ValueError):
        TemporalParams(SimParams(), T=0.0)


def test_profile_csv_roundtrip(tmp_path):
    prof = make_synthetic_profile(jitter=0.3, seed=2)
    p = tmp_path / "profile.csv"
    write_profile_csv(prof, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "day,bin_index,fraction" and len(lines) == 85
    assert lines[1].startswith("Mon,0,") and lines[-1].startswith("Sun,83,")
    assert np.array_equal(read_profile_csv(p).bins, prof.bins)


def test_sends_per_handset_week_match_period():
    # isolated handsets never infect anyone, so each run is one handset-week
    g = CallGraph.from_edges(1, [])
    prof = make_synthetic_profile()
    weeks = 10_000
    total = 0
    tp = TemporalParams(SimParams(s=10**6, rho=0.0), T=1.0, horizon_days=7)
    for r in range(weeks):
        total += run_temporal(g, tp, prof, seed=r).total_sends
    assert abs(total / weeks - 7.0) / 7.0 < 0.02


def test_sends_follow_the_profile_shape():
    g = CallGraph.from_edges(1, [])
    prof = make_synthetic_profile(day_night_ratio=8.0, peak_boost=1.0)
    tp = TemporalParams(SimParams(s=10**7, rho=0.0), T=0.05, horizon_days=7 * 40)
    tr = run_temporal(g, tp, prof, seed=1)
    day = np.isin(tr.bin_global_index % 12, DEFAULT_DAYTIME_BINS)
    # about 5600 sends; per-bin rates differ by the configured ratio
    ratio = tr.viral_sends[day].mean() / tr.viral_sends[~day].mean()
    assert abs(ratio / 8.0 - 1) < 0.15


def test_night_only_profile_with_huge_period_sends_nothing():
    w = np.zeros(84)
    w[np.tile(np.r_[np.ones(3), np.zeros(9)], 7).astype(bool)] = 1
    prof = VolumeProfile(w / w.sum())
    g = CallGraph.from_edges(50, [(i, i + 1) for i in range(49)])
    tp = TemporalParams(SimParams(s=100), T=1e7, horizon_days=14)
    assert run_temporal(g, tp, prof, seed=3).total_sends == 0


def test_daytime_gate_silences_night_bins():
    g = CallGraph.from_edges(1, [])
    tp = TemporalParams(SimParams(s=10**6), T=0.05, horizon_days=14, daytime_only=True)
    tr = run_temporal(g, tp, UNIFORM, seed=0)
    hour_bin = tr.bin_global_index % 12
    night = ~np.isin(hour_bin, DEFAULT_DAYTIME_BINS)
    assert tr.viral_sends[night].sum() == 0 and tr.viral_sends[~night].sum() > 0


def test_clamped_regime_warns():
    g = CallGraph.from_edges(2, [(0, 1)])
    tp = TemporalParams(SimParams(s=5), T=1 / 1000, horizon_days=1)
    with pytest.warns(RuntimeWarning, match="clamped"):
        run_temporal(g, tp, make_synthetic_profile(), seed=0)


def test_temporal_trace_shape(tmp_path):
    g = CallGraph.from_edges(3, [(0, 1), (1, 2)])
    tp = TemporalParams(SimParams(s=20), T=1.0, horizon_days=2, week_offset_bins=5)
    tr = run_temporal(g, tp, UNIFORM, seed=1)
    assert tr.viral_sends.size == 24 and tr.bin_global_index[0] == 5
    p = tmp_path / "t.csv"
    write_trace_csv(tr, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "tick,infected,viral_sends,bin_global_index,viral_volume"
    assert lines[2].startswith("60,") and lines[2].split(",")[3] == "6"


def test_detection_bin_and_halt():
    g = CallGraph.from_edges(2, [(0, 1)])
    zero = ThresholdProfile(np.zeros(BINS_PER_WEEK), 12)
    tp = TemporalParams(SimParams(s=1000), T=0.5, horizon_days=7)
    tr = run_temporal(g, tp, UNIFORM, seed=4, thresholds=zero)
    first = int(np.flatnonzero(tr.viral_sends)[0])
    assert tr.detection_bin == first
    halted = run_temporal(g, tp, UNIFORM, seed=4, thresholds=zero, halt_on_detect=True)
    assert halted.viral_sends.size == first + 1


@st.composite
def temporal_cases(draw):
    n = draw(st.integers(2, 40))
    gseed = draw(st.integers(0, 10**6))
    g = assign_os(generate_graph(n, DegreeModel.fixed(draw(st.integers(1, 4))), seed=gseed), [0.5, 0.5], seed=gseed)
    if not (g.os_label == 0).any():
        g = g.with_labels(np.zeros(n, dtype=np.int64), 2)
    base = SimParams(s=draw(st.integers(0, 15)), rho=draw(st.sampled_from([0.0, 0.4])), p=0.5,
                     seed=draw(st.integers(0, 10**6)))
    return g, TemporalParams(base, T=draw(st.sampled_from([0.1, 1.0, 3.0])), horizon_days=7)


@given(temporal_cases())
@settings(max_examples=80, deadline=None)
def test_temporal_invariants(case):
    g, tp = case
    tr = run_temporal(g, tp, make_synthetic_profile())
    st_ = tr.state
    assert (st_.sends <= tp.base.s).all()
    assert st_.sends.sum() == tr.total_sends
    assert (np.diff(tr.infected) >= 0).all()
    if tp.base.rho == 0.0:
        sub = susceptible_subgraph(g, 0)
        giant = components(sub).largest_size
        assert tr.final_infected <= giant
        # every infected handset shares the seed's component
        ids = np.flatnonzero(g.os_label == 0)
        lab = np.zeros(g.n, dtype=np.int64) - 1
        uf = UnionFind(sub.n)
        for u, v in sub.edges().tolist():
            uf.union(u, v)
        lab[ids] = uf.labels()
        assert (lab[st_.infected] == lab[tr.seed_node]).all()


def test_temporal_run_is_deterministic():
    g = assign_os(generate_graph(2000, DegreeModel.powerlaw_cutoff(2.2, 30, 2), seed=1), [0.3, 0.7], seed=1)
    tp = TemporalParams(SimParams(s=50, rho=0.1, p=0.25, seed=2), T=1.0, horizon_days=60)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = run_temporal(g, tp, make_synthetic_profile())
        b = run_temporal(g, tp, make_synthetic_profile())
    assert np.array_equal(a.viral_sends, b.viral_sends) and np.array_equal(a.infected, b.infected)
