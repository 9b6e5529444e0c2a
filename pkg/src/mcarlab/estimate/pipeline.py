"""The feasible drift-estimation pipeline and Levy-increment recovery."""
from dataclasses import dataclass

import numpy as np

from mcarlab.errors import InvalidArgumentError
from mcarlab.estimate.increments import (
    CoarseDesign,
    IncrementSource,
    NoThreshold,
    PowerRule,
    ThresholdSchedule,
    coarse_design,
    detrend,
    thresholded_increments,
)
from mcarlab.estimate.scores import (
    DriftEstimate,
    ScoreStats,
    drift_mle,
    grcar_stats_from_design,
    mcar_stats_from_design,
)
from mcarlab.grid import assumption_diagnostics


@dataclass(frozen=True, eq=False)
class DriftFit:
    estimate: DriftEstimate
    stats: ScoreStats
    increments: IncrementSource
    schedule: ThresholdSchedule
    design: CoarseDesign
    diagnostics: dict

    @property
    def params(self):
        return self.estimate.params

    @property
    def vector(self):
        return self.estimate.vector


def score_stats_for(design, increments, Sigma, mode="mcar", adjacency=None, level="thresholded"):
    vals = increments.values if isinstance(increments, IncrementSource) else increments
    if mode == "grcar":
        if adjacency is None:
            raise InvalidArgumentError("grcar mode needs an adjacency matrix")
        return grcar_stats_from_design(design.regressors, vals, design.steps, Sigma, adjacency, level)
    if mode != "mcar":
        raise InvalidArgumentError(f"unknown estimation mode {mode!r}")
    p = design.regressors.shape[1] // vals.shape[1]
    return mcar_stats_from_design(design.regressors, vals, design.steps, Sigma, level, p)


def estimate_drift(Y_on_P, P, Q, schedule=None, b=0.0, Sigma=None, p=1, mode="mcar",
                   adjacency=None, scheme="iterated"):
    """Forward differences on ``P``, de-trend and threshold on ``Q``, score stats, MLE.

    ``schedule`` is a :class:`ThresholdSchedule` or a rule object with a
    ``build(detrended, steps)`` method (``NoThreshold``, ``PowerRule``,
    ``DataDrivenRule``); ``None`` means no thresholding.
    """
    design = coarse_design(Y_on_P, P, Q, p, scheme=scheme)
    d = design.dhat_increments.shape[1]
    if Sigma is None:
        Sigma = np.eye(d)
    rule = NoThreshold() if schedule is None else schedule
    x = detrend(design.dhat_increments, design.steps, b)
    sched = rule.build(x, design.steps)
    incs = thresholded_increments(design.dhat_increments, design.steps, b, sched)
    stats = score_stats_for(design, incs, Sigma, mode, adjacency)
    est = drift_mle(stats)
    betas = rule.betas(d) if isinstance(rule, PowerRule) else None
    diag = assumption_diagnostics(P, Q, t=P.horizon, betas=betas)
    diag["mt"] = design.mt
    diag["dropped_intervals"] = design.dropped
    diag["kept_fraction"] = float(incs.kept.mean()) if incs.kept.size else 1.0
    return DriftFit(est, stats, incs, sched, design, diag)


def recover_levy_increments(Y_on_P, A_hat, P, Q, scheme="iterated", derivatives=None):
    """``dL_m = dD^{p-1}Y_m + sum_j sum_{s_n in [u_m, u_{m+1})} A_j D^{p-j}Y_{s_n} dt_n``."""
    p, d = A_hat.p, A_hat.d
    design = coarse_design(Y_on_P, P, Q, p, scheme=scheme, derivatives=derivatives)
    if design.dhat_increments.shape[1] != d:
        raise InvalidArgumentError("estimate and observation dimensions differ")
    idx = design.coarse_index
    n_used = idx[-1] if idx.size else 0
    steps = design.fine_steps[:n_used]
    drift = np.zeros((n_used, d))
    for j in range(1, p + 1):
        D = design.derivatives[p - j][:n_used]
        drift += (D @ A_hat.A[j - 1].T) * steps[:, None]
    csum = np.vstack([np.zeros((1, d)), np.cumsum(drift, axis=0)])
    return design.dhat_increments + (csum[idx[1:]] - csum[idx[:-1]])
