"""End-to-end acceptance checks; each prints one PASS/FAIL line with the measured values."""
import math
import os
import time

import numpy as np

from mcarlab.estimate import drift_mle, mcar_score_stats, oracle_increments
from mcarlab.grid import coarsen, forward_differences, power_partition, uniform_partition
from mcarlab.levy import LevyTriplet, stream_seed
from mcarlab.mc import load_config, records_to_csv, run_monte_carlo, summarize
from mcarlab.model import McarParams, companion_matrix, selection_matrix
from mcarlab.numerics import ou_increment_covariance, spectral_abscissa, stationary_state_covariance
from mcarlab.simulate import simulate_euler, simulate_exact

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")
CAR2 = McarParams([1.0, 2.0])
TRUTH = np.array([1.0, 2.0])


def _config(name, **overrides):
    return load_config(os.path.join(CONFIGS, name)).with_overrides(**overrides)


def _fmt(v):
    return "(" + ", ".join(f"{x:.3f}" for x in np.ravel(v)) + ")"


def _mean_at(rows, t):
    return next(r for r in rows if r["t"] == t)


def _simpson_cov(A, Q, dt, n=2000):
    s = np.linspace(0.0, dt, n + 1)
    import scipy.linalg

    vals = np.array([scipy.linalg.expm(A * x) @ Q @ scipy.linalg.expm(A * x).T for x in s])
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return (dt / n / 3) * np.tensordot(w, vals, axes=1)


def test_finite_difference_exactness(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    uniform = np.arange(12) * 0.75
    steps = rng.uniform(0.5, 1.5, size=10)
    nonuniform = np.concatenate([[0.0], np.cumsum(steps)]) * 10.0 / steps.sum()
    worst = 0.0
    for grid, schemes in ((uniform, ("iterated", "divided")), (nonuniform, ("divided",))):
        for scheme in schemes:
            for k in range(7):
                for j in range(k + 1):
                    D = forward_differences(grid**j / math.factorial(j), grid, k, scheme=scheme)
                    worst = max(worst, np.max(np.abs(D - (1.0 if j == k else 0.0))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 1.0
    report(1, "finite-difference exactness", ok,
           f"max error {worst:.2e} (tol 1e-9), runtime {elapsed:.2f}s (limit 1s)")
    assert ok


def test_ou_covariance_against_quadrature(report):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(20):
        n = 1 + i % 6
        M = rng.standard_normal((n, n))
        A = M - (spectral_abscissa(M) + 0.5) * np.eye(n)
        B = rng.standard_normal((n, n))
        Q = B @ B.T
        dt = rng.uniform(0.1, 2.0)
        worst = max(worst, np.max(np.abs(ou_increment_covariance(A, Q, dt) - _simpson_cov(A, Q, dt))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 5.0
    report(2, "OU increment covariance vs Simpson", ok,
           f"max error {worst:.2e} (tol 1e-8), runtime {elapsed:.2f}s (limit 5s)")
    assert ok


def test_stationary_law(report):
    start = time.perf_counter()
    path = simulate_exact(CAR2, LevyTriplet(0.0, 1.0), uniform_partition(500.0, 50000), rng_seed=20240611)
    emp = np.cov(path.states.T)
    E = selection_matrix(1, 2)
    ref = stationary_state_covariance(companion_matrix(CAR2), E @ E.T)
    rel = np.linalg.norm(emp - ref) / np.linalg.norm(ref)
    elapsed = time.perf_counter() - start
    ok = rel <= 0.1 and elapsed < 30.0
    report(3, "stationary state covariance", ok,
           f"relative Frobenius error {rel:.3f} (tol 0.10), runtime {elapsed:.2f}s (limit 30s)")
    assert ok


def test_sigma_cancellation(report):
    worst = 0.0
    P = power_partition(4, 3)
    Q = coarsen(P, power_partition(4, 1).times)
    for r in range(20):
        path = simulate_exact(CAR2, LevyTriplet(0.0, 1.0), P, rng_seed=stream_seed(99, r))
        inc, _ = oracle_increments(path, Q)
        a = drift_mle(mcar_score_stats(path.obs, P, Q, inc, 1.0, 2)).vector
        b = drift_mle(mcar_score_stats(path.obs, P, Q, inc, 4.0, 2)).vector
        worst = max(worst, np.max(np.abs(a - b)))
    ok = worst <= 1e-10
    report(4, "Sigma cancellation in the MLE", ok, f"max difference {worst:.2e} over 20 datasets (tol 1e-10)")
    assert ok


def test_bm_consistency(report):
    start = time.perf_counter()
    cfg = _config("study_bm.json", horizons=[2, 4], reps=200)
    rows = summarize(run_monte_carlo(cfg), truth=TRUTH)
    err2 = np.abs(_mean_at(rows, 2.0)["mean"] - TRUTH)
    err4 = np.abs(_mean_at(rows, 4.0)["mean"] - TRUTH)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(err4 <= 0.25) and np.all(err4 < err2) and elapsed < 180)
    report(5, "BM consistency", ok,
           f"mean at t=4 {_fmt(_mean_at(rows, 4.0)['mean'])}, |error| t=4 {_fmt(err4)} (tol 0.25), "
           f"t=2 {_fmt(err2)} (must shrink), runtime {elapsed:.1f}s (limit 180s)")
    assert ok


def test_cp_consistency(report):
    start = time.perf_counter()
    cfg = _config("study_cp.json", horizons=[4], reps=200, estimate_sigma=False)
    row = summarize(run_monte_carlo(cfg), truth=TRUTH)[0]
    err = np.abs(row["mean"] - TRUTH)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(err <= 0.3) and elapsed < 300)
    report(6, "CP consistency with thresholding", ok,
           f"mean at t=4 {_fmt(row['mean'])}, |error| {_fmt(err)} (tol 0.30), runtime {elapsed:.1f}s (limit 300s)")
    assert ok


def test_gamma_consistency(report):
    start = time.perf_counter()
    cfg = _config("study_gamma.json", horizons=[4], reps=200)
    assert cfg.sim_scheme == "euler"
    row = summarize(run_monte_carlo(cfg), truth=TRUTH)[0]
    err = np.abs(row["mean"] - TRUTH)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(err <= 0.35) and elapsed < 600)
    report(7, "Gamma consistency with thresholding", ok,
           f"mean at t=4 {_fmt(row['mean'])}, |error| {_fmt(err)} (tol 0.35), runtime {elapsed:.1f}s (limit 600s)")
    assert ok


def test_feasible_clt(report):
    cfg = _config("study_bm.json", horizons=[4], reps=500)
    row = summarize(run_monte_carlo(cfg), truth=TRUTH, level=0.95)[0]
    zm, zs, cov = row["z_mean"], row["z_std"], row["coverage"]
    ok = bool(np.all(np.abs(zm) <= 0.2) and np.all((zs >= 0.75) & (zs <= 1.25)) and abs(cov - 0.95) <= 0.08)
    report(8, "feasible CLT", ok,
           f"z mean {_fmt(zm)} (tol 0.2), z std {_fmt(zs)} (range [0.75, 1.25]), "
           f"coverage {cov:.3f} (0.95 +/- 0.08)")
    assert ok


def test_grcar_consistency(report):
    start = time.perf_counter()
    cfg = _config("study_grcar.json", horizons=[4], reps=100)
    row = summarize(run_monte_carlo(cfg), truth=cfg.truth)[0]
    err = np.abs(row["mean"] - cfg.truth)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(err <= 0.3) and elapsed < 300)
    report(9, "GrCAR consistency", ok,
           f"mean theta at t=4 {_fmt(row['mean'])}, |error| {_fmt(err)} (tol 0.30), "
           f"runtime {elapsed:.1f}s (limit 300s)")
    assert ok


def test_sigma_estimation(report):
    cfg = _config("study_cp.json", horizons=[4], reps=100, estimate_sigma=True, sigma_gamma=2.0)
    row = summarize(run_monte_carlo(cfg), truth=TRUTH)[0]
    s = float(np.ravel(row["sigma_mean"])[0])
    ok = abs(s - 1.0) <= 0.2
    report(10, "Sigma estimation in the CP pipeline", ok, f"mean Sigma-hat {s:.3f} (target 1 +/- 0.2)")
    assert ok


def test_determinism(report):
    cfg = _config("study_cp.json", reps=6, estimate_sigma=True)
    outputs = [records_to_csv(run_monte_carlo(cfg, workers=w)) for w in (1, 1, 2, 3)]
    ok = all(o == outputs[0] for o in outputs)
    report(11, "determinism across runs and worker counts", ok,
           f"{len(set(outputs))} distinct CSV output(s) from 4 runs with workers 1, 1, 2, 3")
    assert ok


def test_euler_strong_error(report):
    tr = LevyTriplet(0.0, 1.0)
    fine = uniform_partition(1.0, 512)
    strides = (64, 32, 16, 8)
    errs = {s: [] for s in strides}
    for r in range(200):
        exact = simulate_exact(CAR2, tr, fine, init="zero", rng_seed=stream_seed(12, r))
        for s in strides:
            Q = coarsen(fine, s)
            eu = simulate_euler(CAR2, tr, Q, init="zero", increments=exact.increments.aggregate(Q.fine_index))
            errs[s].append(eu.states[-1] - exact.states[-1])
    rms = np.array([np.sqrt(np.mean(np.sum(np.square(errs[s]), axis=1))) for s in strides])
    ok = bool(np.all(np.diff(rms) < 0))
    report(12, "Euler strong error vs exact", ok,
           f"endpoint RMS at dt=1/8..1/64 {_fmt(rms)} (must decrease)")
    assert ok
