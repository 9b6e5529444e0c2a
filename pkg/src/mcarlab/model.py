"""MCAR(p) and GrCAR(p) parametrizations.

Drift vectors use the ordering ``(A_1[0,0], A_1[1,0], ..., A_1[d-1,d-1], A_2[0,0], ...)``:
matrices in lag order, each traversed column by column with the row index
running fastest.  GrCAR vectors are ``(theta_11, theta_12, theta_21, ...)``.
"""
from dataclasses import dataclass

import numpy as np

from mcarlab.errors import GraphDegenerateError, InvalidArgumentError
from mcarlab.numerics import spectral_abscissa


@dataclass(frozen=True, eq=False)
class McarParams:
    A: np.ndarray  # shape (p, d, d), A[k-1] = A_k

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1, 1)
        elif A.ndim == 1:
            # d = 1 shorthand: (A_1, ..., A_p)
            A = A.reshape(-1, 1, 1)
        elif A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[0] < 1 or A.shape[1] < 1:
            raise InvalidArgumentError(f"A must have shape (p, d, d), got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidArgumentError("drift matrices must be finite")
        object.__setattr__(self, "A", A)

    @property
    def p(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    def __repr__(self):
        return f"McarParams(d={self.d}, p={self.p}, A={self.A.tolist()})"


@dataclass(frozen=True, eq=False)
class GrcarParams:
    theta: np.ndarray  # shape (p, 2)
    adjacency: np.ndarray  # shape (d, d), binary, zero diagonal

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if theta.ndim != 2 or theta.shape[1] != 2:
            raise InvalidArgumentError(f"theta must have shape (p, 2), got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidArgumentError("theta must be finite")
        adj = _check_adjacency(self.adjacency)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "adjacency", adj)

    @property
    def p(self):
        return self.theta.shape[0]

    @property
    def d(self):
        return self.adjacency.shape[0]


def _check_adjacency(adj):
    adj = np.atleast_2d(np.asarray(adj, dtype=float))
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise InvalidArgumentError("adjacency must be square")
    if not np.all((adj == 0) | (adj == 1)):
        raise InvalidArgumentError("adjacency entries must be 0 or 1")
    if np.any(np.diag(adj) != 0):
        raise InvalidArgumentError("adjacency must have a zero diagonal")
    return adj


def full_graph(d):
    return np.ones((d, d)) - np.eye(d)


def companion_matrix(params):
    """State-space drift: identity super-diagonal, bottom row ``(-A_p, ..., -A_1)``."""
    p, d = params.p, params.d
    M = np.zeros((p * d, p * d))
    for i in range(p - 1):
        M[i * d:(i + 1) * d, (i + 1) * d:(i + 2) * d] = np.eye(d)
    for k in range(1, p + 1):
        col = p - k
        M[(p - 1) * d:, col * d:(col + 1) * d] = -params.A[k - 1]
    return M


def selection_matrix(d, p):
    """``pd x d`` matrix with the identity in its bottom block."""
    E = np.zeros((p * d, d))
    E[(p - 1) * d:, :] = np.eye(d)
    return E


def is_stationary(params, margin=0.0):
    return spectral_abscissa(companion_matrix(params)) < -float(margin)


def vec_drift(params):
    return np.concatenate([Ak.T.reshape(-1) for Ak in params.A])


def unvec_drift(v, d, p):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != p * d * d:
        raise InvalidArgumentError(f"drift vector has length {v.size}, expected {p * d * d}")
    return McarParams(v.reshape(p, d, d).transpose(0, 2, 1))


def normalize_adjacency(adj):
    """Column-normalized adjacency ``A diag(1/n_1, ..., 1/n_d)``, ``n_i = max(1, in-degree)``."""
    adj = _check_adjacency(adj)
    n = np.maximum(1.0, adj.sum(axis=0))
    return adj / n[None, :]


def grcar_to_mcar(g):
    abar_t = normalize_adjacency(g.adjacency).T
    eye = np.eye(g.d)
    return McarParams(np.stack([th[0] * eye + th[1] * abar_t for th in g.theta]))


def grcar_theta_from_mcar(A_hat, adjacency):
    """Per lag, Frobenius least-squares projection of ``A_k`` onto ``span{I, Abar^T}``."""
    adj = _check_adjacency(adjacency)
    if adj.shape[0] != A_hat.d:
        raise InvalidArgumentError("adjacency and drift dimensions differ")
    B = normalize_adjacency(adj).T
    eye = np.eye(A_hat.d)
    gram = np.array([[np.sum(eye * eye), np.sum(eye * B)], [np.sum(B * eye), np.sum(B * B)]])
    if abs(np.linalg.det(gram)) <= 1e-12 * np.abs(gram).max() ** 2:
        raise GraphDegenerateError("identity and normalized adjacency are linearly dependent")
    rhs = np.array([[np.sum(eye * Ak), np.sum(B * Ak)] for Ak in A_hat.A]).T
    theta = np.linalg.solve(gram, rhs).T
    return GrcarParams(theta, adj)


def vec_theta(g):
    return np.asarray(g.theta, dtype=float).reshape(-1)


def unvec_theta(v, adjacency, p):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != 2 * p:
        raise InvalidArgumentError(f"theta vector has length {v.size}, expected {2 * p}")
    return GrcarParams(v.reshape(p, 2), adjacency)
