import io
import json

import numpy as np
import pytest

from mcarlab.errors import ConfigurationError
from mcarlab.mc import (
    ExperimentConfig,
    RunRecord,
    load_config,
    partitions_for,
    read_records,
    records_to_csv,
    run_monte_carlo,
    run_single,
    summarize,
    write_summary,
)

BASE = {
    "model": {"type": "mcar", "d": 1, "p": 2, "A": [1.0, 2.0]},
    "levy": {"b": 0.0, "Sigma": 1.0, "jumps": {"type": "none"}},
    "horizons": [2, 4],
    "reps": 2,
    "master_seed": 7,
}


def _cfg(**kw):
    spec = json.loads(json.dumps(BASE))
    spec.update(kw)
    return ExperimentConfig.from_dict(spec)


def _rec(est, z=None, rep=0, t=4.0, failed=False, sigma=None):
    est = np.asarray(est, dtype=float)
    return RunRecord(rep, t, "bm", est, np.zeros_like(est) if z is None else np.asarray(z, dtype=float),
                     sigma, 10, 1.0, failed)


def test_repeat_runs_are_identical():
    cfg = _cfg()
    a = records_to_csv(run_monte_carlo(cfg, workers=1))
    b = records_to_csv(run_monte_carlo(cfg, workers=1))
    assert a == b
    assert a.count("\n") == 1 + 2 * 2


def test_worker_count_does_not_change_output():
    cfg = _cfg(reps=3)
    assert records_to_csv(run_monte_carlo(cfg, workers=1)) == records_to_csv(run_monte_carlo(cfg, workers=2))


def test_seed_changes_output():
    assert records_to_csv(run_monte_carlo(_cfg())) != records_to_csv(run_monte_carlo(_cfg(master_seed=8)))


def test_records_ordered_by_rep_then_horizon():
    recs = run_monte_carlo(_cfg(reps=2))
    assert [(r.rep, r.t) for r in recs] == [(0, 2.0), (0, 4.0), (1, 2.0), (1, 4.0)]


def test_single_record_summary():
    rows = summarize([_rec([1.2, 1.8])], truth=[1.0, 2.0])
    np.testing.assert_allclose(rows[0]["mean"], [1.2, 1.8])
    np.testing.assert_allclose(rows[0]["bias"], [0.2, -0.2])


def test_exact_estimates_have_no_error():
    rows = summarize([_rec([1.0, 2.0], rep=r) for r in range(5)], truth=[1.0, 2.0])
    np.testing.assert_array_equal(rows[0]["bias"], 0.0)
    np.testing.assert_array_equal(rows[0]["rmse"], 0.0)
    assert rows[0]["coverage"] == 1.0


def test_rmse_by_hand():
    recs = [_rec([1.0]), _rec([2.0], rep=1), _rec([4.0], rep=2)]
    row = summarize(recs, truth=[2.0])[0]
    # errors -1, 0, 2
    assert row["rmse"][0] == pytest.approx(np.sqrt(5 / 3))
    assert row["bias"][0] == pytest.approx(1 / 3)
    assert row["mean"][0] == pytest.approx(7 / 3)


def test_summary_groups_by_horizon_and_skips_failures():
    recs = [_rec([1.0], t=2.0), _rec([3.0], t=4.0), _rec([np.nan], t=4.0, rep=1, failed=True)]
    rows = {r["t"]: r for r in summarize(recs, truth=[1.0])}
    assert rows[4.0]["n"] == 2 and rows[4.0]["failed"] == 1
    assert rows[4.0]["mean"][0] == 3.0


def test_summary_coverage_and_z_moments():
    z = [[0.0], [1.0], [3.0]]
    recs = [_rec([1.0], z=zz, rep=i) for i, zz in enumerate(z)]
    row = summarize(recs, truth=[1.0])[0]
    assert row["coverage"] == pytest.approx(2 / 3)
    assert row["z_mean"][0] == pytest.approx(4 / 3)
    assert row["z_std"][0] == pytest.approx(np.std([0, 1, 3], ddof=1))


def test_empty_summary_raises():
    with pytest.raises(ConfigurationError):
        summarize([])


def test_csv_roundtrip_with_sigma():
    recs = [_rec([1.0, 2.0], sigma=np.array([[1.0, 0.1], [0.2, 2.0]])), _rec([0.5, 0.25], rep=1,
                                                                            sigma=np.eye(2) / 3)]
    text = records_to_csv(recs)
    header = text.splitlines()[0].split(",")
    assert header[:3] == ["rep", "t", "regime"]
    assert header[-4:] == ["mt", "qv_cond", "failed", "wall_ms"]
    back = read_records(io.StringIO(text))
    for a, b in zip(recs, back):
        np.testing.assert_array_equal(a.est, b.est)
        np.testing.assert_array_equal(a.sigma_hat, b.sigma_hat)
    assert records_to_csv(back) == text
    # column-major order of the covariance entries
    assert text.splitlines()[1].split(",")[7:11] == ["1", "0.20000000000000001", "0.10000000000000001", "2"]


def test_summary_csv_has_one_row_per_group():
    buf = io.StringIO()
    write_summary(summarize(run_monte_carlo(_cfg()), truth=[1.0, 2.0]), buf)
    assert len(buf.getvalue().splitlines()) == 3


def test_wall_time_is_opt_in():
    cfg = _cfg(reps=1)
    assert run_single(cfg, 0, 0).wall_ms == 0.0
    assert run_single(_cfg(reps=1, record_wall_time=True), 0, 0).wall_ms > 0.0


def test_estimate_sigma_records_matrix():
    rec = run_single(_cfg(estimate_sigma=True), 0, 1)
    assert rec.sigma_hat.shape == (1, 1) and np.isfinite(rec.sigma_hat).all()


def test_failures_are_recorded_not_raised():
    cfg = _cfg(horizons=[0.5], grid={"k_P": 1, "k_Q": 1})
    rec = run_single(cfg, 0, 0)
    assert rec.failed and np.isnan(rec.est).all() and rec.error


@pytest.mark.parametrize("patch", [
    {"reps": 0},
    {"horizons": [-1]},
    {"model": {"type": "mcar", "d": 1, "p": 2, "A": [-3.0, 2.0]}},
    {"levy": {"b": 0.0, "Sigma": [[1.0, 0.0], [0.0, 1.0]], "jumps": {"type": "none"}}},
    {"threshold": {"type": "power", "beta": 0.6}},
    {"threshold": {"type": "magic"}},
    {"estimator": "bayes"},
    {"scheme": "exact", "levy": {"b": 0.0, "Sigma": 1.0, "jumps": {"type": "gamma", "shape": 1, "scale": 1}}},
    {"confidence_level": 1.0},
    {"grid": {"k_P": 1, "k_Q": 2}},
    {"colour": "blue"},
])
def test_invalid_configs(patch):
    with pytest.raises(ConfigurationError):
        _cfg(**patch)


def test_missing_sections(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"horizons": [1]})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(bad)


def test_grcar_config_and_truth():
    cfg = _cfg(model={"type": "grcar", "d": 3, "p": 1, "theta": [[2, 1]], "adjacency": "full"},
               levy={"b": 0.0, "Sigma": 1.0, "jumps": {"type": "none"}})
    assert cfg.mode == "grcar"
    np.testing.assert_array_equal(cfg.truth, [2.0, 1.0])
    assert cfg.mcar.d == 3


def test_partitions_are_nested():
    P, Q = partitions_for(_cfg(), 4.0)
    assert P.n_intervals == 4**5 and Q.n_intervals == 4**3
    np.testing.assert_array_equal(P.times[Q.fine_index], Q.times)


def test_shipped_configs_load():
    import glob
    import os

    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    files = sorted(glob.glob(os.path.join(root, "*.json")))
    assert files
    for f in files:
        load_config(f)
