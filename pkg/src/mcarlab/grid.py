"""Observation partitions, forward finite differences and sampling diagnostics."""
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from mcarlab.errors import InvalidArgumentError, ResourceError

DEFAULT_MAX_INTERVALS = 10_000_000
_NEST_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Partition:
    """Strictly increasing observation times ``0 = s_0 < ... < s_N = t``.

    ``fine_index`` is set when the partition was produced by :func:`coarsen`
    and holds, for each of its points, the index of the same time in the
    parent partition.
    """

    times: np.ndarray
    fine_index: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if times.size < 2:
            raise InvalidArgumentError("a partition needs at least two points")
        if not np.all(np.isfinite(times)):
            raise InvalidArgumentError("partition times must be finite")
        if times[0] != 0.0:
            raise InvalidArgumentError("partition must start at 0")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("partition times must be strictly increasing")
        object.__setattr__(self, "times", times)
        if self.fine_index is not None:
            object.__setattr__(self, "fine_index", np.asarray(self.fine_index, dtype=np.int64))

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(self.steps.max())

    @property
    def min_step(self) -> float:
        return float(self.steps.min())

    @property
    def c_ratio(self) -> float:
        return self.min_step / self.mesh

    @property
    def is_uniform(self) -> bool:
        steps = self.steps
        return bool(np.all(np.abs(steps - steps[0]) <= 1e-12 * steps[0]))

    def __len__(self):
        return self.times.size

    def __repr__(self):
        return f"Partition(N={self.n_intervals}, t={self.horizon:g}, mesh={self.mesh:.4g})"


def uniform_partition(t, n_intervals, max_intervals=DEFAULT_MAX_INTERVALS):
    t = float(t)
    n_intervals = int(n_intervals)
    if not t > 0:
        raise InvalidArgumentError("horizon must be positive")
    if n_intervals < 1:
        raise InvalidArgumentError("need at least one interval")
    if n_intervals > max_intervals:
        raise ResourceError(f"{n_intervals} intervals exceeds the cap of {max_intervals}")
    times = np.arange(n_intervals + 1) * (t / n_intervals)
    times[-1] = t
    return Partition(times)


def power_partition(t, k, max_intervals=DEFAULT_MAX_INTERVALS):
    """Uniform partition of ``[0, t]`` with step close to ``t**-k``.

    The interval count is ``round(t**(1+k))`` so that the endpoint is exactly ``t``.
    """
    t = float(t)
    if not t > 0:
        raise InvalidArgumentError("horizon must be positive")
    n = max(1, int(round(t ** (1.0 + float(k)))))
    return uniform_partition(t, n, max_intervals=max_intervals)


def nested_indices(fine, coarse_times):
    """Indices of ``coarse_times`` in ``fine.times``; raises if any is missing."""
    coarse_times = np.asarray(coarse_times, dtype=float).reshape(-1)
    fine_times = fine.times
    idx = np.searchsorted(fine_times, coarse_times)
    idx_lo = np.clip(idx - 1, 0, fine_times.size - 1)
    idx_hi = np.clip(idx, 0, fine_times.size - 1)
    pick = np.where(
        np.abs(fine_times[idx_lo] - coarse_times) <= np.abs(fine_times[idx_hi] - coarse_times),
        idx_lo,
        idx_hi,
    )
    tol = _NEST_RTOL * max(1.0, fine.horizon)
    bad = np.abs(fine_times[pick] - coarse_times) > tol
    if np.any(bad):
        raise InvalidArgumentError(
            f"time {coarse_times[bad][0]:.17g} is not a point of the fine partition"
        )
    return pick


def coarsen(fine, coarse_spec):
    """Nested coarsening of ``fine``.

    ``coarse_spec`` is either an integer stride (keep every ``stride``-th point,
    the endpoint is always kept) or an explicit array of times, each of which
    must lie on ``fine``.
    """
    if np.isscalar(coarse_spec) and float(coarse_spec).is_integer():
        stride = int(coarse_spec)
        if stride < 1:
            raise InvalidArgumentError("stride must be >= 1")
        idx = np.arange(0, fine.n_intervals + 1, stride)
        if idx[-1] != fine.n_intervals:
            idx = np.append(idx, fine.n_intervals)
    else:
        idx = nested_indices(fine, coarse_spec)
        if idx[0] != 0 or np.any(np.diff(idx) <= 0):
            raise InvalidArgumentError("coarse times must start at 0 and be strictly increasing")
    return Partition(fine.times[idx], fine_index=idx)


def restrict(partition, t):
    """The prefix of ``partition`` on ``[0, t]``; ``t`` must be a grid point."""
    end = int(nested_indices(partition, [t])[0])
    if end < 1:
        raise InvalidArgumentError("restriction horizon must be positive")
    return Partition(partition.times[: end + 1])


def partition_stats(partition):
    return {
        "mesh": partition.mesh,
        "min_interval": partition.min_step,
        "c_ratio": partition.c_ratio,
        "N": partition.n_intervals,
    }


def forward_differences(values, times, k, scheme="iterated"):
    """``k``-th forward finite differences of samples on ``times``.

    ``values`` has shape ``(N+1,)`` or ``(N+1, d)``; the result has ``N-k+1``
    rows, row ``n`` approximating the ``k``-th right derivative at ``s_n``.

    ``scheme="iterated"`` repeatedly divides by the single step ahead,
    ``(D^{k-1}_{n+1} - D^{k-1}_n) / (s_{n+1} - s_n)``.  ``scheme="divided"``
    uses ``k!`` times the Newton divided difference over ``s_n..s_{n+k}``;
    it is exact on polynomials of degree ``<= k`` for any spacing.  The two
    coincide on uniform grids.
    """
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float).reshape(-1)
    k = int(k)
    if values.shape[0] != times.size:
        raise InvalidArgumentError("values and times must have the same length")
    n_int = times.size - 1
    if k < 0:
        raise InvalidArgumentError("order must be non-negative")
    if k > n_int:
        raise InvalidArgumentError(f"order {k} exceeds the number of intervals {n_int}")
    out = values.copy()
    if k == 0:
        return out
    expand = (slice(None),) + (None,) * (values.ndim - 1)
    if scheme == "iterated":
        h = np.diff(times)
        for j in range(1, k + 1):
            out = (out[1:] - out[:-1]) / h[: out.shape[0] - 1][expand]
        return out
    if scheme == "divided":
        for j in range(1, k + 1):
            span = times[j:] - times[:-j]
            out = j * (out[1:] - out[:-1]) / span[expand]
        return out
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")


def fd_weights(window_times, k, scheme="iterated"):
    """Weights ``w_0..w_k`` with ``sum_i w_i Y(s_{n+i}) = D^k Y(s_n)``.

    Obtained by pushing unit vectors through :func:`forward_differences`, so
    they match it by construction; :func:`composition_weights` gives the
    closed-form expansion of the iterated scheme for cross-checking.
    """
    window_times = np.asarray(window_times, dtype=float).reshape(-1)
    k = int(k)
    if window_times.size != k + 1:
        raise InvalidArgumentError("window must contain exactly k+1 times")
    if np.any(np.diff(window_times) <= 0):
        raise InvalidArgumentError("window times must be strictly increasing")
    return forward_differences(np.eye(k + 1), window_times, k, scheme=scheme)[0]


def _compositions(total, parts):
    # all (n_1..n_parts) with n_i >= 1 summing to total
    for cuts in combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


def composition_weights(window_times, k):
    """Explicit weight expansion of the iterated forward difference.

    ``D^k Y(s_n) = sum_i (-1)^(k+i) sum_{n_1+..+n_i=k} prod_l h_l^{-n_l}
    (Y_{n+i} - Y_{n+i-1})`` with ``h_l = s_{n+l} - s_{n+l-1}``.
    """
    window_times = np.asarray(window_times, dtype=float).reshape(-1)
    h = np.diff(window_times)
    w = np.zeros(k + 1)
    for i in range(1, k + 1):
        coef = 0.0
        for comp in _compositions(k, i):
            coef += np.prod(h[:i] ** (-np.asarray(comp, dtype=float)))
        coef *= (-1.0) ** (k + i)
        w[i] += coef
        w[i - 1] -= coef
    return w


def assumption_diagnostics(P, Q, t=None, betas=None, ceilings=None):
    """Rate quantities behind the sampling and thresholding conditions.

    Reports ``Delta_Q t`` (high-frequency sampling), ``c_Q`` (controlled
    sampling), ``Delta_P t / Delta_Q^2`` (derivatives converge faster than
    the Riemann sums), and per component ``t Delta_Q^(1-2 beta)`` and
    ``t Delta_Q^(1-4 beta)`` (thresholding rates).  Flags compare each
    quantity against a configurable ceiling; they are advisory only.
    """
    t = Q.horizon if t is None else float(t)
    limits = {
        "hf_sampling": 1.0,
        "joint_mesh": 1.0,
        "threshold_finite": 1.0,
        "threshold_infinite": 1.0,
        "c_Q_min": 0.5,
        "c_P_min": 0.99,
    }
    if ceilings:
        limits.update(ceilings)
    dP, dQ = P.mesh, Q.mesh
    report = {
        "t": t,
        "mesh_P": dP,
        "mesh_Q": dQ,
        "c_P": P.c_ratio,
        "c_Q": Q.c_ratio,
        "hf_sampling": dQ * t,
        "joint_mesh": dP * t / dQ**2,
    }
    flags = {
        "hf_sampling": report["hf_sampling"] < limits["hf_sampling"],
        "joint_mesh": report["joint_mesh"] < limits["joint_mesh"],
        "c_Q": report["c_Q"] >= limits["c_Q_min"],
        "c_P": report["c_P"] >= limits["c_P_min"],
    }
    if betas is not None:
        betas = np.atleast_1d(np.asarray(betas, dtype=float))
        fin = t * dQ ** (1.0 - 2.0 * betas)
        inf = t * dQ ** (1.0 - 4.0 * betas)
        report["threshold_finite"] = fin.tolist()
        report["threshold_infinite"] = inf.tolist()
        flags["threshold_finite"] = [bool(v < limits["threshold_finite"]) for v in fin]
        flags["threshold_infinite"] = [bool(v < limits["threshold_infinite"]) for v in inf]
    report["flags"] = flags
    return report
