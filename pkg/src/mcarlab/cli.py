"""Command-line entry point: simulate, estimate, mc, sigma and diagnose.

Exit status is 0 on success, 1 for configuration or input errors and 2 for
numeric failures.  Output files are written to a temporary file and renamed
into place, so a failed run never leaves a partial file behind.
"""
import argparse
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from mcarlab.errors import ConfigurationError
from mcarlab.estimate import PowerRule, estimate_drift, estimate_sigma_iterative
from mcarlab.grid import Partition, assumption_diagnostics, coarsen
from mcarlab.mc import (
    default_workers,
    format_summary,
    load_config,
    partitions_for,
    run_monte_carlo,
    summarize,
    write_records,
    write_summary,
)
from mcarlab.simulate import read_observations, simulate_euler, simulate_exact, write_path

log = logging.getLogger("mcarlab")


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _config(args):
    cfg = load_config(args.config)
    over = {}
    if getattr(args, "seed", None) is not None:
        over["master_seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        over["reps"] = args.reps
    if getattr(args, "t", None) is not None:
        over["horizons"] = [args.t]
    return cfg.with_overrides(**over) if over else cfg


def cmd_simulate(args):
    cfg = _config(args)
    t = cfg.horizons[0]
    P, _ = partitions_for(cfg, t)
    sim = simulate_exact if cfg.sim_scheme == "exact" else simulate_euler
    seed = np.random.SeedSequence([cfg.master_seed, 0, 0])
    path = sim(cfg.mcar, cfg.levy, P, init=cfg.init, rng_seed=seed)
    log.info("simulated %d grid points on [0, %g] with the %s scheme", P.n_intervals + 1, t, cfg.sim_scheme)
    buf = io.StringIO()
    write_path(path, buf)
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_estimate(args):
    cfg = _config(args)
    if not args.input:
        raise ConfigurationError("estimate needs --input")
    with open(args.input) as fh:
        times, values = read_observations(fh)
    d = cfg.mcar.d
    if values.shape[1] < d:
        raise ConfigurationError(f"input has {values.shape[1]} value columns, model needs {d}")
    P = Partition(times)
    t = P.horizon
    Qs = Partition(np.linspace(0.0, t, int(round(t ** (1 + cfg.k_Q))) + 1))
    Q = coarsen(P, Qs.times)
    adjacency = cfg.model.adjacency if cfg.mode == "grcar" else None
    fit = estimate_drift(values[:, :d], P, Q, cfg.threshold, cfg.levy.b, cfg.levy.Sigma,
                         cfg.mcar.p, cfg.mode, adjacency, cfg.fd_scheme)
    se = np.sqrt(np.diag(np.linalg.inv(fit.stats.QV)))
    K = fit.vector.size
    header = ["t", "mt", "qv_cond"] + [f"est_{k + 1}" for k in range(K)] + [f"se_{k + 1}" for k in range(K)]
    cells = [t, fit.design.mt, fit.estimate.condition_number, *fit.vector, *se]
    text = ",".join(header) + "\n" + ",".join(format(float(c), ".17g") for c in cells) + "\n"
    _emit(text, args.out)
    return 0


def cmd_mc(args):
    cfg = _config(args)
    workers = args.workers if args.workers is not None else default_workers()
    records = run_monte_carlo(cfg, workers=workers)
    buf = io.StringIO()
    write_records(records, buf)
    out = args.out or cfg.output
    atomic_write(out, buf.getvalue())
    rows = summarize(records, truth=cfg.truth, level=cfg.confidence_level)
    sbuf = io.StringIO()
    write_summary(rows, sbuf)
    root, _ = os.path.splitext(out)
    atomic_write(root + ".summary.csv", sbuf.getvalue())
    print(format_summary(rows))
    return 0


def cmd_sigma(args):
    cfg = _config(args) if args.config else None
    if not args.input:
        raise ConfigurationError("sigma needs --input (columns dt, inc_1..inc_d)")
    data = np.loadtxt(args.input, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise ConfigurationError("sigma input needs a dt column and at least one increment column")
    gamma = cfg.sigma_gamma if cfg else 2.0
    eps = cfg.sigma_eps if cfg else 1e-8
    S = estimate_sigma_iterative(data[:, 1:], data[:, 0], gamma, eps)
    header = ",".join(f"col_{j + 1}" for j in range(S.shape[0]))
    body = "\n".join(",".join(format(v, ".17g") for v in row) for row in S)
    _emit(header + "\n" + body + "\n", args.out)
    return 0


def cmd_diagnose(args):
    cfg = _config(args)
    betas = cfg.threshold.betas(cfg.mcar.d) if isinstance(cfg.threshold, PowerRule) else None
    reports = []
    for t in cfg.horizons:
        P, Q = partitions_for(cfg, t)
        rep = assumption_diagnostics(P, Q, t=t, betas=betas)
        rep["N_P"] = P.n_intervals
        rep["N_Q"] = Q.n_intervals
        reports.append(rep)
    _emit(json.dumps(reports, indent=2) + "\n", args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mcarlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment configuration (JSON)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--reps", type=int, help="override reps")
        p.add_argument("--t", type=float, help="override horizons with a single value")
        p.add_argument("--out", help="output path (default: stdout, or the config's output for mc)")
        p.add_argument("--workers", type=int, help="worker processes (default: $MCARLAB_WORKERS or 1)")
        p.add_argument("--verbose", "-v", action="store_true")
        return p

    common(sub.add_parser("simulate", help="simulate one path and dump it")).set_defaults(func=cmd_simulate)
    p = common(sub.add_parser("estimate", help="estimate the drift from an observation file"))
    p.add_argument("--input", help="CSV with a time column followed by observation columns")
    p.set_defaults(func=cmd_estimate)
    common(sub.add_parser("mc", help="run a Monte-Carlo study")).set_defaults(func=cmd_mc)
    p = common(sub.add_parser("sigma", help="critical-region covariance estimate"), config_required=False)
    p.add_argument("--input", help="CSV with columns dt, inc_1..inc_d")
    p.set_defaults(func=cmd_sigma)
    common(sub.add_parser("diagnose", help="sampling and threshold rate diagnostics")).set_defaults(
        func=cmd_diagnose
    )
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
