"""Score vectors, quadratic-variation matrices and the closed-form drift MLE."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from mcarlab.errors import InsufficientExcitationError, InvalidArgumentError
from mcarlab.estimate.increments import IncrementSource, coarse_design
from mcarlab.model import normalize_adjacency, unvec_drift, unvec_theta

MAX_CONDITION = 1e14


@dataclass(frozen=True, eq=False)
class ScoreStats:
    """``H`` and ``QV`` with ``QV @ vec(A_hat) = H``.

    ``kind`` is ``mcar`` (length ``p d^2``) or ``grcar`` (length ``2p``).
    """

    H: np.ndarray
    QV: np.ndarray
    t: float
    level: str
    kind: str
    d: int
    p: int
    mt: int
    adjacency: Optional[np.ndarray] = None

    def __post_init__(self):
        QV = np.asarray(self.QV, dtype=float)
        H = np.asarray(self.H, dtype=float).reshape(-1)
        if QV.shape != (H.size, H.size):
            raise InvalidArgumentError("QV and H dimensions disagree")
        object.__setattr__(self, "QV", 0.5 * (QV + QV.T))
        object.__setattr__(self, "H", H)


def _sigma_inverse(Sigma, d):
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.shape != (d, d):
        raise InvalidArgumentError(f"Sigma must be {d}x{d}")
    try:
        c = scipy.linalg.cho_factor(Sigma)
    except np.linalg.LinAlgError:
        raise InvalidArgumentError("Sigma must be symmetric positive definite") from None
    return scipy.linalg.cho_solve(c, np.eye(d))


def _increment_values(increments, mt, d):
    vals = increments.values if isinstance(increments, IncrementSource) else np.asarray(increments, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] < mt or vals.shape[1] != d:
        raise InvalidArgumentError(
            f"increments have shape {vals.shape}, need at least ({mt}, {d})"
        )
    return vals[:mt]


def mcar_stats_from_design(regressors, increments, steps, Sigma, level="finite-difference", p=None):
    """``H = -sum_m x_m (Sigma^{-1} dL_m)``, ``QV = (sum_m dt_m x_m x_m^T) kron Sigma^{-1}``."""
    R = np.asarray(regressors, dtype=float)
    dL = np.asarray(increments, dtype=float)
    d = dL.shape[1]
    Si = _sigma_inverse(Sigma, d)
    G = (R * steps[:, None]).T @ R
    H = -(R.T @ (dL @ Si)).reshape(-1)
    QV = np.kron(G, Si)
    pd_ = R.shape[1]
    return ScoreStats(H, QV, float(steps.sum()), level, "mcar", d, p or pd_ // d, steps.size)


def grcar_regressors(regressors, adjacency, d):
    """Per row, ``Z_m`` of shape ``(d, 2p)`` with columns ``[x_k, Abar^T x_k]`` per lag."""
    B = normalize_adjacency(adjacency).T
    M, pd_ = regressors.shape
    p = pd_ // d
    X = regressors.reshape(M, p, d)  # lag k block = D^{p-k} Y
    Z = np.empty((M, d, 2 * p))
    Z[:, :, 0::2] = X.transpose(0, 2, 1)
    Z[:, :, 1::2] = (X @ B.T).transpose(0, 2, 1)
    return Z


def grcar_stats_from_design(regressors, increments, steps, Sigma, adjacency, level="finite-difference"):
    """``K = -sum_m Z_m^T Sigma^{-1} dL_m``, ``[K] = sum_m dt_m Z_m^T Sigma^{-1} Z_m``."""
    dL = np.asarray(increments, dtype=float)
    d = dL.shape[1]
    Si = _sigma_inverse(Sigma, d)
    Z = grcar_regressors(np.asarray(regressors, dtype=float), adjacency, d)
    SZ = np.einsum("ij,mjk->mik", Si, Z)
    K = -np.einsum("mik,mi->k", SZ, dL)
    QV = np.einsum("mil,mik,m->lk", Z, SZ, steps)
    p = Z.shape[2] // 2
    adj = np.asarray(adjacency, dtype=float)
    return ScoreStats(K, QV, float(steps.sum()), level, "grcar", d, p, steps.size, adj)


def _level(increments, derivatives):
    if derivatives is not None:
        return "oracle-derivatives"
    prov = getattr(increments, "provenance", "")
    return "thresholded" if prov == "thresholded" else "finite-difference"


def mcar_score_stats(Y_on_P, P, Q, increments, Sigma, p, scheme="iterated", derivatives=None):
    """Discretized ``H``/``[H]`` from fine-grid observations and coarse increments."""
    design = coarse_design(Y_on_P, P, Q, p, scheme=scheme, derivatives=derivatives)
    dL = _increment_values(increments, design.mt, design.dhat_increments.shape[1])
    return mcar_stats_from_design(
        design.regressors, dL, design.steps, Sigma, _level(increments, derivatives), p
    )


def grcar_score_stats(Y_on_P, P, Q, increments, Sigma, adjacency, p, scheme="iterated", derivatives=None):
    design = coarse_design(Y_on_P, P, Q, p, scheme=scheme, derivatives=derivatives)
    dL = _increment_values(increments, design.mt, design.dhat_increments.shape[1])
    return grcar_stats_from_design(
        design.regressors, dL, design.steps, Sigma, adjacency, _level(increments, derivatives)
    )


@dataclass(frozen=True, eq=False)
class DriftEstimate:
    vector: np.ndarray
    params: object  # McarParams or GrcarParams
    condition_number: float


def qv_condition(QV):
    w = np.linalg.eigvalsh(QV)
    if w[0] <= 0:
        return np.inf
    return float(w[-1] / w[0])


def drift_mle(stats):
    """Solve ``QV v = H`` through a Cholesky factorization."""
    cond = qv_condition(stats.QV)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise InsufficientExcitationError(
            f"quadratic variation matrix is singular or ill-conditioned (condition {cond:.3g})",
            condition_number=cond,
        )
    try:
        v = scipy.linalg.cho_solve(scipy.linalg.cho_factor(stats.QV), stats.H)
    except np.linalg.LinAlgError:
        raise InsufficientExcitationError(
            "quadratic variation matrix is not positive definite", condition_number=cond
        ) from None
    if stats.kind == "grcar":
        params = unvec_theta(v, stats.adjacency, stats.p)
    else:
        params = unvec_drift(v, stats.d, stats.p)
    return DriftEstimate(v, params, cond)
