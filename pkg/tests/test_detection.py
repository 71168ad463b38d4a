import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmsvirus.detection import (
    REFERENCE_WEEKLY_VOLUME,
    ThresholdProfile,
    VolumeHistory,
    compute_threshold,
    detect,
    scaled_weekly_total,
    synthesize_history,
    weekday_of_bin,
    write_detection_csv,
    write_threshold_csv,
)
from mmsvirus.temporal import make_synthetic_profile

PROFILE = make_synthetic_profile()


def test_identical_weeks_give_zero_threshold():
    w = np.tile(np.arange(84, dtype=float), (5, 1))
    assert np.all(compute_threshold(VolumeHistory(w)).delta_v == 0)


def test_two_week_arithmetic():
    w = np.vstack([np.full(84, 10.0), np.full(84, 30.0)])
    th = compute_threshold(VolumeHistory(w))
    assert np.all(th.delta_v == 10.0) and th.derived_from_weeks == 2


def test_history_validation():
    with pytest.raises(ValueError):
        compute_threshold(VolumeHistory(np.zeros((0, 84))))
    with pytest.raises(ValueError):
        VolumeHistory(np.zeros((2, 80)))
    with pytest.raises(ValueError):
        VolumeHistory(-np.ones((2, 84)))
    with pytest.warns(RuntimeWarning):
        assert np.all(compute_threshold(VolumeHistory(np.ones((1, 84)))).delta_v == 0)


def test_threshold_grows_with_noise():
    small = compute_threshold(synthesize_history(PROFILE, noise_sigma=0.1, seed=3)).delta_v
    large = compute_threshold(synthesize_history(PROFILE, noise_sigma=0.2, seed=3)).delta_v
    assert (small >= 0).all() and (large >= 0).all()
    assert np.median(large) > 1.5 * np.median(small)
    assert (large > small).mean() > 0.8


def test_noiseless_history_repeats_the_profile():
    h = synthesize_history(PROFILE, weekly_total=1e5, noise_sigma=0.0, weeks=4, seed=0)
    assert np.all(h.weeks == np.rint(1e5 * PROFILE.bins)[None, :])


def test_bin_means_stay_near_the_profile():
    sigma = 0.15
    h = synthesize_history(PROFILE, noise_sigma=sigma, weeks=12, seed=9)
    base = REFERENCE_WEEKLY_VOLUME * PROFILE.bins
    rel = np.abs(h.weeks.mean(axis=0) / base - 1)
    # 3-sigma bound on a mean of 12 draws; a handful of 84 bins may stray
    assert (rel <= 3 * sigma / np.sqrt(12)).mean() >= 0.97


def test_week_shocks_keep_unit_mean():
    h = synthesize_history(PROFILE, weekly_total=1e6, noise_sigma=0.1, weeks=4000, seed=2, week_sigma=0.6)
    assert abs(h.weeks.sum(axis=1).mean() / 1e6 - 1) < 0.03
    assert abs(h.weeks.sum(axis=1).std() / 1e6 - 0.6) < 0.05


def test_default_and_scaled_volume():
    assert REFERENCE_WEEKLY_VOLUME == 4.7e6
    h = synthesize_history(PROFILE, noise_sigma=0.0, weeks=2, seed=0)
    assert abs(h.weeks[0].sum() - 4.7e6) < 84
    assert scaled_weekly_total(6_000_000) == 4.7e6
    assert scaled_weekly_total(50_000) == pytest.approx(4.7e6 / 120)


def test_synthesize_validation():
    with pytest.raises(ValueError):
        synthesize_history(PROFILE, weekly_total=0)
    with pytest.raises(ValueError):
        synthesize_history(PROFILE, noise_sigma=-1)


THRESH = ThresholdProfile(np.full(84, 10.0), 12, np.full(84, 110.0), np.full(84, 100.0))


def test_detect_zero_series():
    assert detect(np.zeros(500), THRESH) is None
    assert detect([], THRESH) is None


def test_detect_constructed_first_exceedance():
    v = np.zeros(200)
    v[3] = 10.0  # equal to the threshold is not enough
    v[5] = 11.0
    v[90] = 50.0
    assert detect(v, THRESH) == 5
    assert detect(v[6:], THRESH, bin_offset=6) == 90


def test_detect_uses_the_weekly_position():
    dv = np.full(84, 100.0)
    dv[2] = 0.0
    th = ThresholdProfile(dv, 12)
    v = np.ones(200)
    assert detect(v, th) == 2
    assert detect(v, th, bin_offset=3) == 84 + 2
    assert weekday_of_bin(2) == "Mon" and weekday_of_bin(84 + 12 * 6) == "Sun"


def test_total_volume_mode():
    bg = np.full(10, 100.0)
    v = np.zeros(10)
    v[4] = 11.0
    assert detect(v, THRESH, background=bg) == 4
    with pytest.raises(ValueError):
        detect(v, ThresholdProfile(np.zeros(84), 2), background=bg)


@given(st.lists(st.floats(0, 50), min_size=1, max_size=300), st.lists(st.floats(0, 20), min_size=300, max_size=300))
@settings(max_examples=200, deadline=None)
def test_detect_is_monotone(series, extra):
    a = np.asarray(series)
    b = a + np.asarray(extra[:a.size])
    da, db = detect(a, THRESH), detect(b, THRESH)
    if da is not None:
        assert db is not None and db <= da


@given(st.integers(2, 20), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_threshold_is_permutation_invariant(weeks, seed):
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 1000, size=(weeks, 84)).astype(float)
    a = compute_threshold(VolumeHistory(w)).delta_v
    b = compute_threshold(VolumeHistory(w[rng.permutation(weeks)])).delta_v
    assert np.allclose(a, b, rtol=0, atol=1e-9)
    assert (a >= 0).all()


def test_zero_noise_detects_any_viral_traffic_at_once():
    th = compute_threshold(synthesize_history(PROFILE, noise_sigma=0.0, seed=1))
    v = np.zeros(40)
    v[17] = 1
    assert detect(v, th) == 17


def test_csv_writers(tmp_path):
    p = tmp_path / "th.csv"
    write_threshold_csv(THRESH, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "bin_index,delta_v" and lines[1] == "0,10.0" and len(lines) == 85
    q = tmp_path / "det.csv"
    write_detection_csv([(0, None), (1, 30)], q)
    assert q.read_text().splitlines() == ["run_id,detected,first_bin,first_day", "0,0,,", "1,1,30,2"]
