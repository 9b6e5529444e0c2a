"""Coarse-grid regressors, de-trended increments, thresholds and oracle increments."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mcarlab.errors import InvalidArgumentError
from mcarlab.grid import forward_differences, nested_indices


@dataclass(frozen=True, eq=False)
class CoarseDesign:
    """Everything the score statistics need from the observations.

    ``regressors[m]`` stacks ``(D^{p-1}Y, ..., DY, Y)`` at ``u_m``;
    ``dhat_increments[m]`` is the increment of the ``(p-1)``-th derivative
    over ``[u_m, u_{m+1}]``; only the first ``mt`` coarse intervals are kept.
    """

    regressors: np.ndarray  # (mt, pd)
    dhat_increments: np.ndarray  # (mt, d)
    steps: np.ndarray  # (mt,)
    coarse_index: np.ndarray  # (mt+1,) fine indices of u_0..u_mt
    derivatives: list  # D^0..D^{p-1} on the fine grid
    fine_steps: np.ndarray
    dropped: int

    @property
    def mt(self):
        return self.steps.size

    @property
    def horizon(self):
        return float(self.steps.sum())


def coarse_indices(P, Q):
    if Q.fine_index is not None and Q.fine_index.size == Q.times.size and np.array_equal(
        P.times[Q.fine_index], Q.times
    ):
        return Q.fine_index
    return nested_indices(P, Q.times)


def summation_cap(coarse_idx, n_fine, p):
    """Number of coarse intervals whose end point still has a full difference window."""
    usable = np.flatnonzero(np.asarray(coarse_idx) <= n_fine - (p - 1))
    return int(usable[-1]) if usable.size else 0


def coarse_design(Y_on_P, P, Q, p, scheme="iterated", derivatives=None):
    """Build :class:`CoarseDesign` from fine-grid observations.

    With ``derivatives`` (the true ``D^0..D^{p-1}`` on the fine grid) the
    finite differences are skipped and every coarse interval is usable.
    """
    Y = np.asarray(Y_on_P, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != P.times.size:
        raise InvalidArgumentError("observations must have one row per fine grid point")
    p = int(p)
    if p < 1:
        raise InvalidArgumentError("order p must be >= 1")
    d = Y.shape[1]
    q_idx = coarse_indices(P, Q)
    n_fine = P.n_intervals
    if derivatives is None:
        if p - 1 > n_fine:
            raise InvalidArgumentError("too few fine points for the requested order")
        derivs = [forward_differences(Y, P.times, l, scheme=scheme) for l in range(p)]
        mt = summation_cap(q_idx, n_fine, p)
    else:
        derivs = [np.asarray(D, dtype=float).reshape(Y.shape[0], d) for D in derivatives]
        if len(derivs) != p:
            raise InvalidArgumentError(f"need {p} derivative arrays, got {len(derivs)}")
        mt = q_idx.size - 1
    used = q_idx[: mt + 1]
    regressors = np.hstack([derivs[l][used[:-1]] for l in range(p - 1, -1, -1)]) if mt else np.zeros((0, p * d))
    top = derivs[p - 1]
    dhat = top[used[1:]] - top[used[:-1]] if mt else np.zeros((0, d))
    steps = P.times[used[1:]] - P.times[used[:-1]]
    return CoarseDesign(
        regressors=regressors,
        dhat_increments=dhat,
        steps=steps,
        coarse_index=used,
        derivatives=derivs,
        fine_steps=P.steps,
        dropped=(q_idx.size - 1) - mt,
    )


@dataclass(frozen=True, eq=False)
class IncrementSource:
    values: np.ndarray  # (M, d)
    provenance: str
    kept: Optional[np.ndarray] = None

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class ThresholdSchedule:
    """Per-interval, per-component thresholds ``nu[m, i]``."""

    values: np.ndarray
    kind: str = "explicit"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if np.any(np.isnan(v)) or np.any(v < 0):
            raise InvalidArgumentError("thresholds must be non-negative")
        object.__setattr__(self, "values", v)

    @classmethod
    def infinite(cls, m, d):
        return cls(np.full((m, d), np.inf), "none")

    @classmethod
    def power(cls, steps, betas, d=None):
        """``nu[m, i] = steps[m] ** beta_i``."""
        steps = np.asarray(steps, dtype=float)
        betas = np.atleast_1d(np.asarray(betas, dtype=float))
        if d is not None and betas.size == 1:
            betas = np.full(d, betas[0])
        if np.any(betas <= 0) or np.any(betas >= 0.5):
            raise InvalidArgumentError("threshold powers must lie in (0, 1/2)")
        return cls(steps[:, None] ** betas[None, :], "power", {"betas": betas.tolist()})

    def build(self, detrended, steps):
        m = detrended.shape[0]
        if self.values.shape[0] < m:
            raise InvalidArgumentError("threshold schedule shorter than the increment series")
        vals = self.values[:m]
        if vals.shape[1] == 1 and detrended.shape[1] > 1:
            vals = np.repeat(vals, detrended.shape[1], axis=1)
        return ThresholdSchedule(vals, self.kind, self.info)


@dataclass(frozen=True)
class NoThreshold:
    def build(self, detrended, steps):
        return ThresholdSchedule.infinite(*detrended.shape)


@dataclass(frozen=True)
class PowerRule:
    beta: object = 1 / 3

    def build(self, detrended, steps):
        return ThresholdSchedule.power(steps, self.beta, d=detrended.shape[1])

    def betas(self, d):
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        return np.full(d, b[0]) if b.size == 1 else b


@dataclass(frozen=True)
class DataDrivenRule:
    gamma: float = 2.0
    eps: float = 1e-8

    def build(self, detrended, steps):
        from mcarlab.estimate.sigma import select_thresholds_data_driven

        return select_thresholds_data_driven(detrended, steps, self.gamma, self.eps)


def detrend(dhat_increments, steps, b):
    dhat_increments = np.asarray(dhat_increments, dtype=float)
    if dhat_increments.ndim == 1:
        dhat_increments = dhat_increments[:, None]
    b = np.broadcast_to(np.asarray(b, dtype=float), (dhat_increments.shape[1],))
    return dhat_increments - np.outer(np.asarray(steps, dtype=float), b)


def thresholded_increments(dhat_increments, steps, b, schedule):
    """``[dD - b dt] * 1{|dD - b dt| <= nu}`` componentwise."""
    x = detrend(dhat_increments, steps, b)
    nu = schedule.values if isinstance(schedule, ThresholdSchedule) else np.asarray(schedule, dtype=float)
    if nu.ndim == 1:
        nu = nu[:, None]
    if nu.shape[0] != x.shape[0]:
        raise InvalidArgumentError(
            f"threshold schedule has {nu.shape[0]} rows for {x.shape[0]} increments"
        )
    keep = np.abs(x) <= nu
    return IncrementSource(np.where(keep, x, 0.0), "thresholded", keep)


def oracle_increments(path, Q, use_finite_differences=True, b=None, finite_activity=True,
                      scheme="iterated"):
    """Continuous-martingale increments using the simulator's jump record.

    Finite-activity mode subtracts ``b_tilde dt + dJ_tilde`` (all jumps, one
    process); general mode subtracts ``b dt + dJ + dM``.  ``b`` defaults to
    the driver's own drift; ``use_finite_differences=False`` reads the stored
    derivative instead of differencing the observations.
    """
    inc = getattr(path, "increments", None)
    if inc is None:
        raise InvalidArgumentError("path carries no jump record")
    P = path.partition
    p = path.p
    derivs = None if use_finite_differences else [path.derivative(l) for l in range(p)]
    design = coarse_design(path.obs, P, Q, p, scheme=scheme, derivatives=derivs)
    idx = design.coarse_index
    if b is None:
        b = path.triplet.b if path.triplet is not None else 0.0
    b = np.broadcast_to(np.asarray(b, dtype=float), (path.d,))
    csum = lambda x: np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    if finite_activity:
        trend = b - inc.compensator
        jumps = csum(inc.jump_sum)
    else:
        trend = b
        jumps = csum(inc.big_jumps + inc.small_jumps)
    jumps = jumps[idx[1:]] - jumps[idx[:-1]]
    values = detrend(design.dhat_increments, design.steps, trend) - jumps
    tag = "oracle-fd" if use_finite_differences else "oracle-derivatives"
    return IncrementSource(values, tag), design
