"""Reproducible Monte-Carlo harness: configuration, replication loop,
summaries and CSV persistence.

Every (replication, horizon) pair draws from its own stream seeded by
``SeedSequence([master_seed, rep, horizon_index])``, so results do not depend
on the worker count or on scheduling order.
"""
import copy
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mcarlab.errors import ConfigurationError, McarError
from mcarlab.estimate import (
    DataDrivenRule,
    NoThreshold,
    PowerRule,
    chi2_quantile,
    coarse_design,
    drift_mle,
    estimate_drift,
    estimate_sigma_iterative,
    oracle_increments,
    recover_levy_increments,
    score_stats_for,
    z_statistic,
)
from mcarlab.grid import DEFAULT_MAX_INTERVALS, coarsen, power_partition
from mcarlab.levy import LevyTriplet
from mcarlab.model import (
    GrcarParams,
    McarParams,
    full_graph,
    grcar_to_mcar,
    is_stationary,
    vec_drift,
    vec_theta,
)
from mcarlab.simulate import simulate_euler, simulate_exact

DEFAULTS = {
    "horizons": [4.0],
    "grid": {"k_P": 4, "k_Q": 2},
    "threshold": {"type": "none"},
    "estimator": "feasible",
    "estimate_sigma": False,
    "sigma_gamma": 2.0,
    "sigma_eps": 1e-8,
    "scheme": "auto",
    "fd_scheme": "iterated",
    "init": "stationary",
    "reps": 100,
    "master_seed": 0,
    "output": "results.csv",
    "confidence_level": 0.95,
    "regime": None,
    "record_wall_time": False,
    "stationarity_margin": 0.0,
    "max_intervals": DEFAULT_MAX_INTERVALS,
}


def _model_from_dict(spec):
    kind = spec.get("type", "mcar")
    if kind == "mcar":
        A = np.asarray(spec["A"], dtype=float)
        d = int(spec.get("d", 1 if A.ndim <= 1 else A.shape[-1]))
        p = int(spec.get("p", A.size // (d * d)))
        if A.size != p * d * d:
            raise ConfigurationError(f"A has {A.size} entries, expected p*d*d = {p * d * d}")
        return McarParams(A.reshape(p, d, d))
    if kind == "grcar":
        adj = spec.get("adjacency", "full")
        if isinstance(adj, str):
            if adj != "full":
                raise ConfigurationError(f"unknown adjacency shorthand {adj!r}")
            adj = full_graph(int(spec["d"]))
        return GrcarParams(spec["theta"], adj)
    raise ConfigurationError(f"unknown model type {kind!r}")


def _rule_from_dict(spec):
    kind = spec.get("type", "none")
    if kind == "none":
        return NoThreshold()
    if kind == "power":
        beta = spec.get("beta", 1 / 3)
        b = np.atleast_1d(np.asarray(beta, dtype=float))
        if np.any(b <= 0) or np.any(b >= 0.5):
            raise ConfigurationError("threshold powers must lie in (0, 1/2)")
        return PowerRule(beta if np.ndim(beta) == 0 else tuple(b.tolist()))
    if kind == "data_driven":
        gamma = float(spec.get("gamma", 2.0))
        if not gamma > 1:
            raise ConfigurationError("data-driven threshold needs gamma > 1")
        return DataDrivenRule(gamma, float(spec.get("eps", 1e-8)))
    raise ConfigurationError(f"unknown threshold type {kind!r}")


@dataclass(eq=False)
class ExperimentConfig:
    model: object  # McarParams or GrcarParams
    levy: LevyTriplet
    horizons: list
    k_P: float = 4
    k_Q: float = 2
    threshold: object = field(default_factory=NoThreshold)
    estimator: str = "feasible"
    estimate_sigma: bool = False
    sigma_gamma: float = 2.0
    sigma_eps: float = 1e-8
    scheme: str = "auto"
    fd_scheme: str = "iterated"
    init: object = "stationary"
    reps: int = 100
    master_seed: int = 0
    output: str = "results.csv"
    confidence_level: float = 0.95
    regime: Optional[str] = None
    record_wall_time: bool = False
    stationarity_margin: float = 0.0
    max_intervals: int = DEFAULT_MAX_INTERVALS
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mcar.d != self.levy.d:
            raise ConfigurationError(
                f"model dimension {self.mcar.d} differs from driver dimension {self.levy.d}"
            )
        if not is_stationary(self.mcar, self.stationarity_margin):
            raise ConfigurationError("model is not stationary")
        self.horizons = [float(t) for t in self.horizons]
        if not self.horizons or any(not t > 0 for t in self.horizons):
            raise ConfigurationError("horizons must be positive")
        self.reps = int(self.reps)
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if self.estimator not in ("feasible", "oracle"):
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.scheme not in ("auto", "exact", "euler"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "exact" and not self.levy.jumps.finite_activity:
            raise ConfigurationError("infinite-activity jumps require the euler scheme")
        if self.fd_scheme not in ("iterated", "divided"):
            raise ConfigurationError(f"unknown finite-difference scheme {self.fd_scheme!r}")
        if not 0 < self.confidence_level < 1:
            raise ConfigurationError("confidence_level must lie in (0, 1)")
        if not self.k_P >= self.k_Q:
            raise ConfigurationError("k_P must be at least k_Q")
        if self.regime is None:
            self.regime = {"none": "bm", "compound_poisson": "cp"}.get(self.levy.jumps.kind, "gamma")

    @property
    def mode(self):
        return "grcar" if isinstance(self.model, GrcarParams) else "mcar"

    @property
    def mcar(self):
        return grcar_to_mcar(self.model) if isinstance(self.model, GrcarParams) else self.model

    @property
    def truth(self):
        return vec_theta(self.model) if self.mode == "grcar" else vec_drift(self.model)

    @property
    def sim_scheme(self):
        if self.scheme != "auto":
            return self.scheme
        return "exact" if self.levy.jumps.finite_activity else "euler"

    @classmethod
    def from_dict(cls, spec):
        if not isinstance(spec, dict):
            raise ConfigurationError("configuration must be a JSON object")
        cfg = copy.deepcopy(DEFAULTS)
        unknown = set(spec) - set(cfg) - {"model", "levy"}
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        cfg.update(copy.deepcopy(spec))
        if "model" not in cfg or "levy" not in cfg:
            raise ConfigurationError("configuration needs 'model' and 'levy' sections")
        try:
            model = _model_from_dict(cfg["model"])
            d = model.d
            levy = LevyTriplet.from_dict(cfg["levy"], d=d)
            grid = cfg["grid"]
            return cls(
                model=model,
                levy=levy,
                horizons=list(np.atleast_1d(cfg["horizons"]).tolist()),
                k_P=float(grid.get("k_P", 4)),
                k_Q=float(grid.get("k_Q", 2)),
                threshold=_rule_from_dict(cfg["threshold"]),
                estimator=cfg["estimator"],
                estimate_sigma=bool(cfg["estimate_sigma"]),
                sigma_gamma=float(cfg["sigma_gamma"]),
                sigma_eps=float(cfg["sigma_eps"]),
                scheme=cfg["scheme"],
                fd_scheme=cfg["fd_scheme"],
                init=cfg["init"],
                reps=cfg["reps"],
                master_seed=int(cfg["master_seed"]),
                output=cfg["output"],
                confidence_level=float(cfg["confidence_level"]),
                regime=cfg["regime"],
                record_wall_time=bool(cfg["record_wall_time"]),
                stationarity_margin=float(cfg["stationarity_margin"]),
                max_intervals=int(cfg["max_intervals"]),
                raw=cfg,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed configuration: {exc!r}") from None

    def with_overrides(self, **kw):
        raw = copy.deepcopy(self.raw)
        for key, val in kw.items():
            if val is not None:
                raw[key] = val
        return ExperimentConfig.from_dict(raw)


def load_config(path):
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(spec)


def partitions_for(config, t):
    """Fine and nested coarse partitions for horizon ``t``."""
    P = power_partition(t, config.k_P, max_intervals=config.max_intervals)
    Qs = power_partition(t, config.k_Q, max_intervals=config.max_intervals)
    try:
        Q = coarsen(P, Qs.times)
    except McarError:
        raise ConfigurationError(
            f"coarse grid with exponent {config.k_Q} is not nested in the fine grid at t={t:g}"
        ) from None
    return P, Q


@dataclass(frozen=True, eq=False)
class RunRecord:
    rep: int
    t: float
    regime: str
    est: np.ndarray
    z: np.ndarray
    sigma_hat: Optional[np.ndarray]
    mt: int
    qv_cond: float
    failed: bool
    wall_ms: float = 0.0
    error: str = ""


def _simulate(config, P, seed):
    sim = simulate_exact if config.sim_scheme == "exact" else simulate_euler
    return sim(config.mcar, config.levy, P, init=config.init, rng_seed=seed)


def run_single(config, rep, t_index, partitions=None):
    """One replication at one horizon."""
    t = config.horizons[t_index]
    P, Q = partitions if partitions is not None else partitions_for(config, t)
    K = config.truth.size
    d = config.mcar.d
    start = time.perf_counter()
    seed = np.random.SeedSequence([config.master_seed, rep, t_index])
    adjacency = config.model.adjacency if config.mode == "grcar" else None
    try:
        path = _simulate(config, P, seed)
        if config.estimator == "oracle":
            incs, design = oracle_increments(path, Q, use_finite_differences=True, scheme=config.fd_scheme)
            stats = score_stats_for(design, incs, config.levy.Sigma, config.mode, adjacency, "finite-difference")
            est = drift_mle(stats)
        else:
            fit = estimate_drift(
                path.obs, P, Q, config.threshold, config.levy.b, config.levy.Sigma,
                config.mcar.p, config.mode, adjacency, config.fd_scheme,
            )
            design, incs, stats, est = fit.design, fit.increments, fit.stats, fit.estimate
        sigma_hat = None
        if config.estimate_sigma:
            a_hat = grcar_to_mcar(est.params) if config.mode == "grcar" else est.params
            L = recover_levy_increments(path.obs, a_hat, P, Q, scheme=config.fd_scheme)
            sigma_hat = estimate_sigma_iterative(L, design.steps, config.sigma_gamma, config.sigma_eps)
            stats = score_stats_for(design, incs, sigma_hat, config.mode, adjacency, stats.level)
        z = z_statistic(est.vector, config.truth, stats.QV)
        rec = dict(est=est.vector, z=z, sigma_hat=sigma_hat, mt=design.mt,
                   qv_cond=est.condition_number, failed=False, error="")
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        nan = np.full(K, np.nan)
        rec = dict(est=nan, z=nan.copy(),
                   sigma_hat=np.full((d, d), np.nan) if config.estimate_sigma else None,
                   mt=0, qv_cond=float(getattr(exc, "condition_number", None) or np.nan),
                   failed=True, error=f"{type(exc).__name__}: {exc}")
    wall = (time.perf_counter() - start) * 1e3 if config.record_wall_time else 0.0
    return RunRecord(rep, t, config.regime, wall_ms=wall, **rec)


def _run_reps(config, reps):
    grids = {i: partitions_for(config, t) for i, t in enumerate(config.horizons)}
    out = []
    for rep in reps:
        for i in range(len(config.horizons)):
            out.append(run_single(config, rep, i, grids[i]))
    return out


def _worker(args):
    raw, reps = args
    return _run_reps(ExperimentConfig.from_dict(raw), reps)


def default_workers():
    env = os.environ.get("MCARLAB_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"MCARLAB_WORKERS={env!r} is not an integer") from None
        if n < 1:
            raise ConfigurationError("MCARLAB_WORKERS must be >= 1")
        return n
    return 1


def run_monte_carlo(config, workers=None):
    """All (rep, horizon) records, ordered by replication then horizon."""
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    for t in config.horizons:
        partitions_for(config, t)  # surface grid errors before spawning
    reps = list(range(config.reps))
    if workers == 1 or config.reps == 1:
        records = _run_reps(config, reps)
    else:
        chunks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_worker, [(config.raw, c) for c in chunks if c])
            records = [r for part in parts for r in part]
    t_order = {t: i for i, t in enumerate(config.horizons)}
    return sorted(records, key=lambda r: (r.rep, t_order[r.t]))


# --------------------------------------------------------------------------
# summaries


def summarize(records, truth=None, level=0.95):
    """Per (t, regime): mean, bias, RMSE, z mean/std, ellipsoid coverage, mean sigma."""
    if not records:
        raise ConfigurationError("cannot summarize an empty record set")
    groups = {}
    for r in records:
        groups.setdefault((r.t, r.regime), []).append(r)
    rows = []
    for (t, regime), recs in groups.items():
        ok = [r for r in recs if not r.failed]
        K = recs[0].est.size
        row = {"t": t, "regime": regime, "n": len(recs), "failed": len(recs) - len(ok)}
        if ok:
            est = np.array([r.est for r in ok])
            z = np.array([r.z for r in ok])
            row["mean"] = est.mean(axis=0)
            if truth is not None:
                err = est - np.asarray(truth, dtype=float)[None, :]
                row["bias"] = err.mean(axis=0)
                row["rmse"] = np.sqrt((err**2).mean(axis=0))
            row["z_mean"] = z.mean(axis=0)
            row["z_std"] = z.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(K)
            row["coverage"] = float(np.mean((z**2).sum(axis=1) <= chi2_quantile(level, K)))
            sig = [r.sigma_hat for r in ok if r.sigma_hat is not None]
            if sig:
                row["sigma_mean"] = np.mean(sig, axis=0)
        rows.append(row)
    return rows


def _fmt(x):
    return format(float(x), ".17g")


def record_header(K, d=None):
    cols = ["rep", "t", "regime"] + [f"est_{k + 1}" for k in range(K)] + [f"z_{k + 1}" for k in range(K)]
    if d is not None:
        cols += [f"sigma_{k + 1}" for k in range(d * d)]
    return cols + ["mt", "qv_cond", "failed", "wall_ms"]


def write_records(records, fh):
    """CSV with 17 significant digits; Sigma entries are written column by column."""
    K = records[0].est.size
    sig = next((r.sigma_hat for r in records if r.sigma_hat is not None), None)
    d = None if sig is None else sig.shape[0]
    fh.write(",".join(record_header(K, d)) + "\n")
    for r in records:
        cells = [str(r.rep), _fmt(r.t), r.regime]
        cells += [_fmt(v) for v in r.est] + [_fmt(v) for v in r.z]
        if d is not None:
            cells += [_fmt(v) for v in np.asarray(r.sigma_hat).T.reshape(-1)]
        cells += [str(r.mt), _fmt(r.qv_cond), str(int(r.failed)), _fmt(r.wall_ms)]
        fh.write(",".join(cells) + "\n")


def records_to_csv(records):
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def read_records(fh):
    header = fh.readline().strip().split(",")
    K = sum(1 for c in header if c.startswith("est_"))
    S = sum(1 for c in header if c.startswith("sigma_"))
    d = int(round(math.sqrt(S))) if S else None
    out = []
    for line in fh:
        if not line.strip():
            continue
        cells = dict(zip(header, line.strip().split(",")))
        sig = None
        if d:
            sig = np.array([float(cells[f"sigma_{k + 1}"]) for k in range(S)]).reshape(d, d).T
        out.append(RunRecord(
            rep=int(cells["rep"]), t=float(cells["t"]), regime=cells["regime"],
            est=np.array([float(cells[f"est_{k + 1}"]) for k in range(K)]),
            z=np.array([float(cells[f"z_{k + 1}"]) for k in range(K)]),
            sigma_hat=sig, mt=int(cells["mt"]), qv_cond=float(cells["qv_cond"]),
            failed=bool(int(cells["failed"])), wall_ms=float(cells["wall_ms"]),
        ))
    return out


_VECTOR_FIELDS = ("mean", "bias", "rmse", "z_mean", "z_std")


def write_summary(rows, fh):
    K = next((len(r["mean"]) for r in rows if "mean" in r), 0)
    cols = ["t", "regime", "n", "failed"]
    for f in _VECTOR_FIELDS:
        cols += [f"{f}_{k + 1}" for k in range(K)]
    cols += ["coverage"]
    fh.write(",".join(cols) + "\n")
    for r in rows:
        cells = [_fmt(r["t"]), r["regime"], str(r["n"]), str(r["failed"])]
        for f in _VECTOR_FIELDS:
            vals = r.get(f)
            cells += [_fmt(v) for v in vals] if vals is not None else ["nan"] * K
        cells.append(_fmt(r.get("coverage", np.nan)))
        fh.write(",".join(cells) + "\n")


def format_summary(rows):
    lines = []
    for r in rows:
        lines.append(f"t={r['t']:g} regime={r['regime']} n={r['n']} failed={r['failed']}")
        for f in _VECTOR_FIELDS:
            if f in r:
                lines.append(f"  {f:<7}" + " ".join(f"{v:>10.4f}" for v in r[f]))
        if "coverage" in r:
            lines.append(f"  coverage {r['coverage']:.4f}")
        if "sigma_mean" in r:
            lines.append("  sigma  " + " ".join(f"{v:>10.4f}" for v in np.ravel(r["sigma_mean"])))
    return "\n".join(lines)
