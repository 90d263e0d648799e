import numpy as np
import pytest

from bayespc import experiments as ex
from bayespc import scenarios as sc
from bayespc.rng import stream


def _square(i):
    return stream(0, "pm", i).random()


def test_parallel_map_matches_serial():
    assert ex.parallel_map(_square, 7, workers=2) == ex.parallel_map(_square, 7, workers=1)


def test_tracking_results_independent_of_worker_count(monkeypatch):
    design = ex.GaussianTrackingDesign(particles=300)
    monkeypatch.setenv("BAYESPC_WORKERS", "1")
    _, serial, e1, _ = ex.simulate(sc.GAUSSIAN_DRIFT, design, 4, 5)
    monkeypatch.setenv("BAYESPC_WORKERS", "2")
    _, forked, e2, _ = ex.simulate(sc.GAUSSIAN_DRIFT, design, 4, 5)
    assert np.array_equal(serial, forked) and e1 == e2


def test_replicate_streams_do_not_depend_on_count():
    design = ex.ExpGammaDesign()
    _, a, _, _ = ex.simulate(sc.RECOVERABLE, design, 3, 11)
    _, b, _, _ = ex.simulate(sc.RECOVERABLE, design, 5, 11)
    assert np.array_equal(a, b[:3])


def test_run_experiment_small():
    table, paths = ex.run_experiment(sc.RECOVERABLE, ex.ExpGammaDesign(), 20, 3, 0.485)
    assert paths.shape == (20, 200) and np.all((paths >= 0) & (paths <= 1))
    assert table.replicates == 20 and table.config == "ic=(10,3) ooc=(40,10) dur_p=0.005"
    again, _ = ex.run_experiment(sc.RECOVERABLE, ex.ExpGammaDesign(), 20, 3, 0.485)
    np.testing.assert_equal(again.row(), table.row())
    with pytest.raises(ValueError):
        ex.run_experiment(sc.RECOVERABLE, ex.ExpGammaDesign(), 0, 3, 0.485)


def test_calibration_paths_are_in_control_shaped():
    p = ex.exp_gamma_calibration_paths(ex.ExpGammaDesign(), 8, 1, horizon=60)
    assert p.shape == (8, 60)
    # mostly in control on all-in-control data
    assert np.median(p) > 0.5


def test_table1_scaled_down():
    rows = ex.table1(scale=0.02, seed=1)
    assert [r["scenario"] for r in rows] == ["single-change-exp", "recoverable-exp"]
    assert rows[0]["replicates"] == 20
    assert np.isnan(rows[0]["d2_mean"]) and rows[1]["d2_miss"] >= 0


def test_table2_row_columns():
    row = ex.table2_row(6, scale=0.02, seed=1)
    assert row["m"] == 5 and row["mu0"] == 15 and 0 < row["delta"] < 1
    assert {"F_cal", "F_cal_mcse", "d1_mean", "d3_miss"} <= set(row)


def test_table4_scaled_down():
    rows = ex.table4(scale=0.05, seed=2, particle_counts=(100, 400))
    assert [r["P"] for r in rows] == [100, 400]
    for r in rows:
        assert 0 < r["mean_ess"] <= r["P"] and 0 <= r["resample_fraction"] <= 1
        assert r["mae_pA"] <= r["q95_abs_err_pA"] + 1e-12 <= r["max_abs_err_pA"] + 2e-12


def test_fig1_single_replicate():
    rows = ex.fig1(seed=4)
    assert len(rows) == 200
    assert [r["regime"] for r in rows[45:55]] == [0] * 5 + [1] * 5
    assert all(r["signaled"] == (r["p_ic"] < 0.5) for r in rows)
