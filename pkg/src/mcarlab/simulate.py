"""MCAR(p) state-space path simulation: exact scheme for finite-activity
drivers, Euler-Maruyama for any driver, and stationary initial states.

Both schemes simulate ``dX = Acal X dt + E dL`` with ``Acal`` the companion
matrix and ``E`` the selection matrix; the observation is ``Y = X[:d]``.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from mcarlab.errors import ConfigurationError, InvalidArgumentError, NotStationaryError
from mcarlab.grid import Partition
from mcarlab.levy import (
    LevyIncrements,
    LevyTriplet,
    as_generator,
    assemble_increments,
    sample_jumps,
    sample_levy_increments,
)
from mcarlab.model import companion_matrix, selection_matrix
from mcarlab.numerics import ou_increment_covariance, spectral_abscissa, sym_psd_sqrt

STATIONARY_TOL = 1e-8
BURN_IN_TOL = 1e-6
BURN_IN_STEP = 0.01


@dataclass(frozen=True, eq=False)
class McarPath:
    partition: Partition
    states: np.ndarray  # (N+1, pd)
    increments: LevyIncrements  # driver increments per interval, with jump record
    d: int
    p: int
    scheme: str
    triplet: Optional[LevyTriplet] = None

    @property
    def times(self):
        return self.partition.times

    @property
    def obs(self):
        return self.states[:, : self.d]

    def derivative(self, order):
        """Stored ``D^order Y`` at every grid time (state block ``order``)."""
        if not 0 <= order < self.p:
            raise InvalidArgumentError(f"derivative order must be in [0, {self.p - 1}]")
        return self.states[:, order * self.d:(order + 1) * self.d]


def _step_groups(steps):
    # group numerically equal steps so each distinct dt is handled once
    keys = np.round(steps / steps.max(), 12)
    uniq, inverse = np.unique(keys, return_inverse=True)
    reps = np.array([steps[np.argmax(inverse == g)] for g in range(uniq.size)])
    return reps, inverse


def _drift_integral(Acal, v, dt):
    """``int_0^dt exp(Acal s) v ds`` from the top-right column of a block exponential."""
    n = Acal.shape[0]
    block = np.zeros((n + 1, n + 1))
    block[:n, :n] = Acal
    block[:n, n] = v
    return scipy.linalg.expm(block * dt)[:n, n]


def _jump_propagation(Acal, E, times, ev_t, ev_x):
    """Per-interval sum of ``exp(Acal (t_{n+1} - tau)) E J`` over jump events."""
    n_int = times.size - 1
    out = np.zeros((n_int, Acal.shape[0]))
    if ev_t.size == 0:
        return out
    bins = np.searchsorted(times, ev_t, side="left") - 1
    for tau, x, n in zip(ev_t, ev_x, bins):
        out[n] += scipy.linalg.expm(Acal * (times[n + 1] - tau)) @ (E @ x)
    return out


def _recurrence(expA_list, group, innov, x0):
    N = innov.shape[0]
    X = np.empty((N + 1, x0.size))
    X[0] = x0
    if len(expA_list) == 1:
        Et = expA_list[0].T
        for n in range(N):
            X[n + 1] = X[n] @ Et + innov[n]
    else:
        Ets = [E.T for E in expA_list]
        for n in range(N):
            X[n + 1] = X[n] @ Ets[group[n]] + innov[n]
    return X


def _resolve_init(init, params, triplet, rng, horizon):
    pd_ = params.p * params.d
    if init is None or (isinstance(init, str) and init == "stationary"):
        return sample_stationary_initial(params, triplet, rng, horizon)
    if isinstance(init, str) and init == "zero":
        return np.zeros(pd_)
    x0 = np.asarray(init, dtype=float).reshape(-1)
    if x0.size != pd_:
        raise InvalidArgumentError(f"initial state has length {x0.size}, expected {pd_}")
    return x0


def _check_dims(params, triplet):
    if params.d != triplet.d:
        raise ConfigurationError(f"model dimension {params.d} differs from driver dimension {triplet.d}")


def simulate_exact(params, triplet, partition, init="stationary", rng_seed=0, init_horizon=None):
    """Exact transition sampling for Brownian plus compound-Poisson drivers.

    ``X_{n+1} = e^{Acal dt} X_n + int_0^dt e^{Acal s} ds E b_tilde + G_n + jumps``,
    where ``G_n`` is drawn jointly with the interval's Brownian increment so
    the stored noise record is pathwise consistent with the states.
    """
    _check_dims(params, triplet)
    if not triplet.jumps.finite_activity:
        raise ConfigurationError("infinite-activity jumps require the euler scheme")
    rng = as_generator(rng_seed)
    init_rng, path_rng = rng.spawn(2)
    d, p = params.d, params.p
    pd_ = p * d
    Acal = companion_matrix(params)
    E = selection_matrix(d, p)
    x0 = _resolve_init(init, params, triplet, init_rng, init_horizon)

    times = partition.times
    steps = partition.steps
    reps, group = _step_groups(steps)
    bt = E @ triplet.b_tilde
    L = np.vstack([E, np.eye(d)])
    A_aug = np.zeros((pd_ + d, pd_ + d))
    A_aug[:pd_, :pd_] = Acal
    Q_aug = L @ triplet.Sigma @ L.T
    expA, drift, factor = [], [], []
    for dt in reps:
        expA.append(scipy.linalg.expm(Acal * dt))
        drift.append(_drift_integral(Acal, bt, dt))
        factor.append(sym_psd_sqrt(ou_increment_covariance(A_aug, Q_aug, dt)))

    z = path_rng.standard_normal((steps.size, pd_ + d))
    draws = np.empty_like(z)
    for g in range(reps.size):
        sel = group == g
        draws[sel] = z[sel] @ factor[g].T
    G, W = draws[:, :pd_], draws[:, pd_:]

    increments = assemble_increments(triplet, times, W, path_rng)
    innov = G + np.asarray(drift)[group]
    innov += _jump_propagation(Acal, E, times, increments.event_times, increments.event_sizes)
    X = _recurrence(expA, group, innov, x0)
    return McarPath(partition, X, increments, d, p, "exact", triplet)


def simulate_euler(params, triplet, partition, init="stationary", rng_seed=0,
                   increments=None, init_horizon=None):
    """Euler-Maruyama: ``X_{n+1} = X_n + Acal X_n dt + E dL_n``.

    ``increments`` may supply the driver increments (for instance aggregated
    from a finer path) instead of sampling them.
    """
    _check_dims(params, triplet)
    rng = as_generator(rng_seed)
    init_rng, path_rng = rng.spawn(2)
    d, p = params.d, params.p
    Acal = companion_matrix(params)
    E = selection_matrix(d, p)
    x0 = _resolve_init(init, params, triplet, init_rng, init_horizon)
    if increments is None:
        increments = sample_levy_increments(triplet, partition, path_rng)
    elif increments.n_intervals != partition.n_intervals:
        raise InvalidArgumentError("supplied increments do not match the partition")
    X = _euler_states(Acal, E, partition.steps, increments.total, x0)
    return McarPath(partition, X, increments, d, p, "euler", triplet)


def _euler_states(Acal, E, steps, dL, x0):
    reps, group = _step_groups(steps)
    eye = np.eye(Acal.shape[0])
    expA = [eye + Acal * dt for dt in reps]
    return _recurrence(expA, group, dL @ E.T, x0)


def default_stationary_horizon(Acal, tol=STATIONARY_TOL):
    a = spectral_abscissa(Acal)
    if a >= 0:
        raise NotStationaryError(f"not stationary: spectral abscissa {a:.6g} >= 0")
    return math.log(tol) / a


def sample_stationary_initial(params, triplet, rng_seed=0, horizon=None, burn_in_step=BURN_IN_STEP):
    """Draw a state from (an accurate truncation of) the stationary law.

    Finite activity: ``-Acal^{-1} E b_tilde`` plus one Gaussian draw with the
    increment covariance over ``[0, T]`` plus ``sum_{tau <= T} e^{Acal tau} E J``.
    Gamma drivers: the end point of an Euler burn-in of length ``T``.
    """
    _check_dims(params, triplet)
    rng = as_generator(rng_seed)
    d, p = params.d, params.p
    Acal = companion_matrix(params)
    E = selection_matrix(d, p)
    finite = triplet.jumps.finite_activity
    if horizon is None:
        horizon = default_stationary_horizon(Acal, STATIONARY_TOL if finite else BURN_IN_TOL)
    else:
        default_stationary_horizon(Acal)  # stationarity check
    horizon = float(horizon)
    if not horizon > 0:
        raise InvalidArgumentError("stationary horizon must be positive")
    mean = -np.linalg.solve(Acal, E @ triplet.b_tilde)
    if finite:
        cov = ou_increment_covariance(Acal, E @ triplet.Sigma @ E.T, horizon)
        x = mean + sym_psd_sqrt(cov) @ rng.standard_normal(p * d)
        _, _, _, ev_t, ev_x = sample_jumps(triplet.jumps, np.array([0.0, horizon]), d, rng)
        for tau, j in zip(ev_t, ev_x):
            x += scipy.linalg.expm(Acal * tau) @ (E @ j)
        return x
    n = max(1, int(math.ceil(horizon / burn_in_step)))
    burn = Partition(np.linspace(0.0, n * burn_in_step, n + 1))
    inc = sample_levy_increments(triplet, burn, rng)
    return _euler_states(Acal, E, burn.steps, inc.total, mean)[-1]


def write_path(path, fh):
    """Columnar dump: header ``time,x_1..x_pd`` then one row per grid time."""
    pd_ = path.states.shape[1]
    fh.write(",".join(["time"] + [f"x_{i + 1}" for i in range(pd_)]) + "\n")
    data = np.column_stack([path.times, path.states])
    np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def read_observations(fh):
    """Read a path dump or any ``time,y_1..`` table; returns ``(times, values)``."""
    data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise InvalidArgumentError("observation file needs a time column and at least one value column")
    return data[:, 0], data[:, 1:]
