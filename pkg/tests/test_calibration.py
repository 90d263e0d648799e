import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from bayespc.calibration import (CalibrationResult, bootstrap_block_means, calibrate_paths,
                                 calibrate_region_radius, calibrate_threshold, count_false_episodes,
                                 default_grid, empirical_quantile, episode_counts,
                                 threshold_from_costs)
from bayespc.exceptions import DomainError
from bayespc.rng import stream


def test_count_false_episodes():
    assert count_false_episodes(np.ones(20), 0.9) == (0, 0)
    assert count_false_episodes([0.9, 0.3, 0.3, 0.9, 0.2], 0.5) == (2, 3)
    # signalling from the first observation is an episode
    assert count_false_episodes([0.1, 0.9], 0.5) == (1, 1)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=80))
def test_episode_bounds(path):
    grid = default_grid(0.05)
    eps, tps = episode_counts(np.asarray(path)[None, :], grid)
    assert np.all(eps <= tps) and np.all(tps <= len(path))
    # timepoints are monotone in delta for every path
    assert np.all(np.diff(tps[0]) >= 0)


def test_default_grid():
    g = default_grid()
    assert g[0] == 0.005 and g[-1] == 0.995 and g.size == 199
    assert 0.485 in g


def test_tie_break_takes_largest_delta():
    res = calibrate_paths(np.ones((1, 30)), target=1.0)
    assert res.delta == 0.995
    assert res.achieved_episodes == 0


def test_single_point_grid():
    res = calibrate_paths(stream(0, "g").random((5, 40)), grid=[0.3], target=1.0)
    assert res.delta == 0.3 and len(res.curve) == 1


def test_closest_selection_is_optimal():
    paths = stream(1, "closest").beta(5, 1, size=(200, 100))
    res = calibrate_paths(paths, target=1.0)
    dist = np.abs(np.asarray(res.mean_episodes) - 1.0)
    assert abs(res.achieved_episodes - 1.0) <= dist.min() + 1e-12
    assert res.delta in res.grid


def test_band_mode_and_unattainable():
    paths = stream(2, "band").beta(6, 1, size=(300, 150))
    res = calibrate_paths(paths, band=(0.75, 1.25))
    assert res.attained and 0.75 <= res.achieved_episodes <= 1.25
    feasible = [(tp, d) for d, e, tp in res.curve if 0.75 <= e <= 1.25]
    assert res.mean_timepoints[res.grid.index(res.delta)] == min(tp for tp, _ in feasible)
    miss = calibrate_paths(np.ones((3, 10)), band=(0.75, 1.25))
    assert not miss.attained and miss.delta == 0.995


def test_mcse_is_sd_over_root_b():
    paths = stream(3, "mcse").beta(5, 1, size=(100, 60))
    res = calibrate_paths(paths, grid=[0.4], target=1.0)
    eps, _ = episode_counts(paths, [0.4])
    assert res.mcse == pytest.approx(eps[:, 0].std(ddof=1) / 10)


def test_calibrate_threshold_generates_each_path_once():
    calls = []

    def gen(i):
        calls.append(i)
        return stream(9, "gen", i).random(50)

    a = calibrate_threshold(gen, 20, default_grid(0.05))
    assert calls == list(range(20))
    b = calibrate_threshold(gen, 20, default_grid(0.05))
    assert a == b
    with pytest.raises(DomainError):
        calibrate_threshold(gen, 0)


def test_record_round_trip(tmp_path):
    res = calibrate_paths(stream(4, "rec").random((10, 30)), grid=default_grid(0.1))
    res.meta = {"seed": 4}
    f = tmp_path / "rec.json"
    res.save(f)
    assert CalibrationResult.load(f) == res
    f.write_text(f.read_text().replace('"version": 1', '"version": 99'))
    with pytest.raises(ValueError):
        CalibrationResult.load(f)


def test_threshold_from_costs():
    assert threshold_from_costs(1, 1) == 0.5
    assert threshold_from_costs(1, 3) == 0.75
    assert threshold_from_costs(9, 1) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        threshold_from_costs(0, 1)


def test_radius_zero_when_means_at_center():
    assert calibrate_region_radius(np.zeros((50, 3)), np.zeros(3), np.eye(3)) == 0.0


def test_radius_chi_square_oracle():
    d, b, n_boot = 11, 10, 5000
    pool = stream(5, "chi").standard_normal((20000, d))
    means = bootstrap_block_means(pool, b, n_boot, stream(6, "chi"))
    c = calibrate_region_radius(means, np.zeros(d), np.eye(d) * b, 0.95)
    # distances are chi2_11 after rescaling by b; oracle quantile 19.675 / 10 in raw units
    expected = chi2.ppf(0.95, d)
    assert expected == pytest.approx(19.675, abs=1e-3)
    q = 0.95
    se = np.sqrt(q * (1 - q) / n_boot) / chi2.pdf(expected, d)
    assert abs(c - expected) < 3 * se
    unscaled = calibrate_region_radius(means, np.zeros(d), np.eye(d), 0.95)
    assert abs(unscaled - expected / b) < 3 * se / b


@settings(max_examples=100)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=200), st.floats(0.01, 0.99))
def test_empirical_quantile_definition(values, q):
    c = empirical_quantile(values, q)
    v = np.sort(values)
    assert np.mean(v <= c) >= q - 1e-12
    below = v[v < c]
    assert below.size / v.size < q + 1e-12


def test_radius_rejects_bad_quantile():
    with pytest.raises(DomainError):
        calibrate_region_radius(np.zeros((3, 2)), np.zeros(2), np.eye(2), 1.0)
