"""Critical-region estimation of the Gaussian covariance and data-driven thresholds."""
import numpy as np

from mcarlab.errors import ConvergenceError, InvalidArgumentError
from mcarlab.estimate.increments import ThresholdSchedule

MAX_ITER = 100


def _as_rows(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _steps_of(steps_or_partition, m):
    steps = getattr(steps_or_partition, "steps", steps_or_partition)
    steps = np.asarray(steps, dtype=float).reshape(-1)
    if steps.size < m:
        raise InvalidArgumentError("fewer interval lengths than increments")
    steps = steps[:m]
    if np.any(steps <= 0):
        raise InvalidArgumentError("interval lengths must be positive")
    return steps


def _realized(x, steps, keep, m_total):
    w = keep / steps
    S = (x * w[:, None]).T @ x / m_total
    return 0.5 * (S + S.T)


def _check_pd(S):
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ConvergenceError(
            "covariance iterate lost positive definiteness", last_iterate=S
        ) from None


def estimate_sigma_iterative(increments, steps, gamma=2.0, eps=1e-8, literal_form=False,
                             max_iter=MAX_ITER, return_info=False):
    """Iterative realized covariance over a shrinking critical region.

    Starts from ``sum_m dL dL^T / dt_m / M`` and repeatedly keeps the
    increments with ``x^T S^{-1} x <= 2 gamma dt_m log M`` (``x^T S x`` with
    ``literal_form=True``), always dividing by the total count ``M``.  Stops
    when successive iterates differ by at most ``eps`` in Frobenius norm; if
    the kept set starts cycling the iterates over the cycle are averaged.
    """
    x = _as_rows(increments)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("increments must be finite")
    m, d = x.shape
    if m < d + 1:
        raise InvalidArgumentError(f"need at least {d + 1} increments, got {m}")
    if not gamma > 0 or not eps >= 0:
        raise InvalidArgumentError("gamma must be positive and eps non-negative")
    dt = _steps_of(steps, m)
    bound = 2.0 * gamma * dt * np.log(m)
    S = _realized(x, dt, np.ones(m), m)
    history = [S]
    _check_pd(S)
    masks = []
    info = {"iterations": 0, "cycle": 0, "history": history}
    for it in range(1, max_iter + 1):
        M = S if literal_form else np.linalg.inv(S)
        q = np.einsum("mi,ij,mj->m", x, M, x)
        keep = q <= bound
        S_new = _realized(x, dt, keep.astype(float), m)
        history.append(S_new)
        info["iterations"] = it
        _check_pd(S_new)
        if np.linalg.norm(S_new - S) <= eps:
            return (S_new, info) if return_info else S_new
        key = keep.tobytes()
        if key in masks:
            start = masks.index(key)
            cycle = history[start + 1:]  # iterates produced by the repeated masks
            S_new = np.mean(cycle[:-1], axis=0) if len(cycle) > 1 else S_new
            info["cycle"] = len(masks) - start
            return (S_new, info) if return_info else S_new
        masks.append(key)
        S = S_new
    raise ConvergenceError(f"no convergence after {max_iter} iterations", last_iterate=S)


def select_thresholds_data_driven(increments, steps, gamma=2.0, eps=1e-8, literal_form=False):
    """Per component ``nu[m, i] = sqrt(2 gamma sigma_i^2 dt_m log M)``.

    ``sigma_i^2`` comes from the scalar critical-region estimator applied to
    component ``i`` of the (de-trended) increment series.
    """
    x = _as_rows(increments)
    m, d = x.shape
    if m < 10:
        raise InvalidArgumentError("data-driven thresholds need at least 10 increments")
    dt = _steps_of(steps, m)
    s2 = np.empty(d)
    for i in range(d):
        s2[i] = estimate_sigma_iterative(x[:, i], dt, gamma, eps, literal_form)[0, 0]
    nu = np.sqrt(2.0 * gamma * np.outer(dt, s2) * np.log(m))
    return ThresholdSchedule(nu, "data_driven", {"sigma2": s2.tolist(), "gamma": gamma})
