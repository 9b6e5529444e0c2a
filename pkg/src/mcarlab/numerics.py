"""Dense linear-algebra kernels: matrix exponential, OU increment covariance,
Lyapunov stationary covariance, PSD square roots and spectral abscissa.

All functions are pure and accept anything ``np.asarray`` can turn into a
square float matrix.
"""
import numpy as np
import scipy.linalg

from mcarlab.errors import InvalidArgumentError, NotStationaryError

_SYM_TOL = 1e-10
_PSD_CLIP = 1e-10
_BLOCK_STEP = 1.0


def as_square(M, name="M"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return M


def _check_symmetric(Q, name):
    scale = max(1.0, np.abs(Q).max())
    if np.abs(Q - Q.T).max() > _SYM_TOL * scale:
        raise InvalidArgumentError(f"{name} is not symmetric")


def matrix_exponential(M, t=1.0):
    """Return ``exp(M t)`` by scaling and squaring with a Pade approximant."""
    M = as_square(M)
    t = float(t)
    if not np.isfinite(t):
        raise InvalidArgumentError("t must be finite")
    if t == 0.0:
        return np.eye(M.shape[0])
    return scipy.linalg.expm(M * t)


def ou_increment_covariance(A, Q, dt):
    """Covariance of ``int_0^dt exp(A s) dW_s`` for a Brownian motion with rate ``Q``.

    Computed from an exponential of the block matrix ``[[A, Q], [0, -A^T]]``:
    its top-right block ``F`` gives the covariance as ``F exp(A dt)^T``.  For
    ``||A|| dt > 1`` the block exponential is taken over ``dt / 2^k`` and the
    result doubled ``k`` times with ``C(2h) = C(h) + e^{Ah} C(h) e^{A^T h}``.
    """
    A = as_square(A, "A")
    Q = as_square(Q, "Q")
    if Q.shape != A.shape:
        raise InvalidArgumentError("A and Q must have the same shape")
    _check_symmetric(Q, "Q")
    dt = float(dt)
    if not np.isfinite(dt) or dt < 0:
        raise InvalidArgumentError("dt must be finite and non-negative")
    n = A.shape[0]
    if dt == 0.0:
        return np.zeros((n, n))
    # the -A^T block grows like exp(|A| dt); evaluate a short step and double
    norm = np.linalg.norm(A, 1)
    halvings = max(0, int(np.ceil(np.log2(norm * dt / _BLOCK_STEP)))) if norm > 0 else 0
    h = dt / 2.0**halvings
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = A
    block[:n, n:] = Q
    block[n:, n:] = -A.T
    E = scipy.linalg.expm(block * h)
    expA = E[:n, :n]
    cov = E[:n, n:] @ expA.T
    for _ in range(halvings):
        cov = cov + expA @ cov @ expA.T
        expA = expA @ expA
    return 0.5 * (cov + cov.T)


def spectral_abscissa(M):
    """Largest real part over the eigenvalues of ``M``."""
    M = as_square(M)
    return float(np.max(np.linalg.eigvals(M).real))


def stationary_state_covariance(A, Q):
    """Solve ``A X + X A^T + Q = 0`` (Bartels-Stewart, via scipy)."""
    A = as_square(A, "A")
    Q = as_square(Q, "Q")
    if Q.shape != A.shape:
        raise InvalidArgumentError("A and Q must have the same shape")
    _check_symmetric(Q, "Q")
    abscissa = spectral_abscissa(A)
    if abscissa >= 0:
        raise NotStationaryError(f"not stationary: spectral abscissa {abscissa:.6g} >= 0")
    X = scipy.linalg.solve_continuous_lyapunov(A, -Q)
    return 0.5 * (X + X.T)


def sym_psd_sqrt(M):
    """Symmetric PSD square root via the spectral decomposition.

    Eigenvalues down to ``-1e-10 * ||M||`` are treated as round-off and
    clipped to zero; anything more negative is rejected.
    """
    M = as_square(M)
    _check_symmetric(M, "M")
    S = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(S)
    scale = np.linalg.norm(S, 2) if S.size else 0.0
    if w.size and w.min() < -_PSD_CLIP * max(scale, np.finfo(float).tiny):
        raise InvalidArgumentError(
            f"matrix is indefinite (smallest eigenvalue {w.min():.3g}, norm {scale:.3g})"
        )
    w = np.clip(w, 0.0, None)
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)
