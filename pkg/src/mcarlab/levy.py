"""Lévy drivers: triplet specification, increment sampling and the
big-jump / compensated-small-jump decomposition.

Jumps are split with the truncation ``1{||x|| <= 1}``: a jump with norm above
one goes to ``big_jumps`` (the process J), everything else to the
compensated small-jump martingale ``small_jumps`` (the process M).
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats
from scipy.stats import qmc

from mcarlab.errors import ConfigurationError, InvalidArgumentError

_QMC_POINTS = 2**16
_QMC_SEED = 20240611


def as_generator(seed):
    """Accept an int, a ``SeedSequence`` or an existing ``Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (np.random.SeedSequence, int, np.integer)):
        return np.random.default_rng(seed)
    raise InvalidArgumentError(f"cannot build a random generator from {type(seed).__name__}")


def stream_seed(master_seed, rep):
    """Independent stream for replication ``rep`` of a run seeded by ``master_seed``."""
    return np.random.SeedSequence([int(master_seed), int(rep)])


def _broadcast(value, d, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(d, float(arr))
    arr = arr.reshape(-1)
    if arr.size != d:
        raise ConfigurationError(f"{name} has length {arr.size}, expected {d}")
    return arr


def _qmc_uniforms(d):
    return qmc.Sobol(d, scramble=True, seed=_QMC_SEED).random(_QMC_POINTS)


# --------------------------------------------------------------------------
# jump size laws; vector jumps have independent components from the law


@dataclass(frozen=True)
class GaussianSize:
    mean: object = 0.0
    var: object = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.var, dtype=float) <= 0):
            raise ConfigurationError("Gaussian jump variance must be positive")

    def sample(self, rng, n, d):
        mu = _broadcast(self.mean, d, "mean")
        sd = np.sqrt(_broadcast(self.var, d, "var"))
        return mu + sd * rng.standard_normal((n, d))

    def small_mean(self, d):
        """``E[X 1{||X|| <= 1}]``."""
        mu = _broadcast(self.mean, d, "mean")
        sd = np.sqrt(_broadcast(self.var, d, "var"))
        if np.all(mu == 0):
            return np.zeros(d)
        if d == 1:
            lo, hi = (-1 - mu[0]) / sd[0], (1 - mu[0]) / sd[0]
            val = mu[0] * (stats.norm.cdf(hi) - stats.norm.cdf(lo)) - sd[0] * (
                stats.norm.pdf(hi) - stats.norm.pdf(lo)
            )
            return np.array([val])
        x = mu + sd * stats.norm.ppf(_qmc_uniforms(d))
        keep = np.linalg.norm(x, axis=1) <= 1
        return (x * keep[:, None]).mean(axis=0)

    def to_dict(self):
        return {"law": "gaussian", "mean": _jsonable(self.mean), "var": _jsonable(self.var)}


@dataclass(frozen=True)
class ConstantSize:
    c: object = 1.0

    def sample(self, rng, n, d):
        return np.tile(_broadcast(self.c, d, "c"), (n, 1))

    def small_mean(self, d):
        c = _broadcast(self.c, d, "c")
        return c.copy() if np.linalg.norm(c) <= 1 else np.zeros(d)

    def to_dict(self):
        return {"law": "constant", "c": _jsonable(self.c)}


@dataclass(frozen=True)
class UniformSize:
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if not float(self.b) > float(self.a):
            raise ConfigurationError("uniform jump law needs a < b")

    def sample(self, rng, n, d):
        return rng.uniform(float(self.a), float(self.b), size=(n, d))

    def small_mean(self, d):
        a, b = float(self.a), float(self.b)
        if a == -b:
            return np.zeros(d)
        if d == 1:
            lo, hi = max(a, -1.0), min(b, 1.0)
            val = (hi**2 - lo**2) / (2 * (b - a)) if hi > lo else 0.0
            return np.array([val])
        x = a + (b - a) * _qmc_uniforms(d)
        keep = np.linalg.norm(x, axis=1) <= 1
        return (x * keep[:, None]).mean(axis=0)

    def to_dict(self):
        return {"law": "uniform", "a": float(self.a), "b": float(self.b)}


def _jsonable(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else arr.tolist()


def size_law_from_dict(spec):
    spec = dict(spec)
    law = spec.pop("law", None)
    try:
        if law == "gaussian":
            return GaussianSize(spec.get("mean", 0.0), spec.get("var", 1.0))
        if law == "constant":
            return ConstantSize(spec["c"])
        if law == "uniform":
            return UniformSize(spec.get("a", -1.0), spec.get("b", 1.0))
    except KeyError as exc:
        raise ConfigurationError(f"jump size law missing field {exc}") from None
    raise ConfigurationError(f"unknown jump size law {law!r}")


# --------------------------------------------------------------------------

JUMP_KINDS = ("none", "compound_poisson", "symmetric_gamma", "gamma")


@dataclass(frozen=True)
class JumpSpec:
    """Jump part of a Lévy driver.

    ``kind`` is one of ``none``, ``compound_poisson`` (``rate`` and ``size``),
    ``gamma`` (one-sided, ``shape`` k and ``scale`` theta per component) or
    ``symmetric_gamma`` (difference of two independent such processes).
    Gamma components are independent across coordinates.
    """

    kind: str = "none"
    rate: float = 0.0
    size: Optional[object] = None
    shape: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in JUMP_KINDS:
            raise ConfigurationError(f"unknown jump kind {self.kind!r}")
        if self.kind == "compound_poisson":
            if not np.isfinite(self.rate) or self.rate < 0:
                raise ConfigurationError("jump rate must be finite and >= 0")
            if self.size is None:
                raise ConfigurationError("compound Poisson jumps need a size law")
        if self.kind in ("gamma", "symmetric_gamma"):
            if not (self.shape > 0 and self.scale > 0):
                raise ConfigurationError("Gamma shape and scale must be positive")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def compound_poisson(cls, rate, size):
        return cls("compound_poisson", rate=float(rate), size=size)

    @classmethod
    def gamma(cls, shape=1.0, scale=1.0):
        return cls("gamma", shape=float(shape), scale=float(scale))

    @classmethod
    def symmetric_gamma(cls, shape=1.0, scale=1.0):
        return cls("symmetric_gamma", shape=float(shape), scale=float(scale))

    @property
    def finite_activity(self):
        return self.kind in ("none", "compound_poisson")

    @property
    def has_jumps(self):
        return not (self.kind == "none" or (self.kind == "compound_poisson" and self.rate == 0))

    def small_jump_drift(self, d):
        """Compensator rate ``int_{||x||<=1} x F(dx)`` of the small jumps."""
        if self.kind == "compound_poisson":
            return self.rate * self.size.small_mean(d)
        if self.kind == "gamma":
            return np.full(d, self.shape * self.scale * (1 - np.exp(-1 / self.scale)))
        return np.zeros(d)

    def to_dict(self):
        if self.kind == "none":
            return {"type": "none"}
        if self.kind == "compound_poisson":
            return {"type": self.kind, "rate": self.rate, "size": self.size.to_dict()}
        return {"type": self.kind, "shape": self.shape, "scale": self.scale}

    @classmethod
    def from_dict(cls, spec):
        if spec is None:
            return cls()
        kind = spec.get("type", "none")
        if kind == "compound_poisson":
            if "size" not in spec:
                raise ConfigurationError("compound Poisson jumps need a size law")
            return cls.compound_poisson(spec.get("rate", 1.0), size_law_from_dict(spec["size"]))
        if kind in ("gamma", "symmetric_gamma"):
            return cls(kind, shape=float(spec.get("shape", 1.0)), scale=float(spec.get("scale", 1.0)))
        if kind == "none":
            return cls()
        raise ConfigurationError(f"unknown jump kind {kind!r}")


@dataclass(frozen=True, eq=False)
class LevyTriplet:
    """Driver characteristics ``(b, Sigma, F)`` with truncation ``1{||x|| <= 1}``."""

    b: np.ndarray
    Sigma: np.ndarray
    jumps: JumpSpec = field(default_factory=JumpSpec)

    def __post_init__(self):
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
            raise ConfigurationError("Sigma must be a square matrix")
        d = Sigma.shape[0]
        b = _broadcast(self.b, d, "b")
        if not (np.all(np.isfinite(Sigma)) and np.all(np.isfinite(b))):
            raise ConfigurationError("triplet entries must be finite")
        if np.abs(Sigma - Sigma.T).max() > 1e-10 * max(1.0, np.abs(Sigma).max()):
            raise ConfigurationError("Sigma must be symmetric")
        try:
            chol = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            raise ConfigurationError("Sigma must be strictly positive definite") from None
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_chol", chol)

    @property
    def d(self):
        return self.Sigma.shape[0]

    @property
    def chol(self):
        return self._chol

    @property
    def compensator(self):
        return self.jumps.small_jump_drift(self.d)

    @property
    def b_tilde(self):
        """Drift without truncation: ``b`` minus the small-jump compensator."""
        return self.b - self.compensator

    def to_dict(self):
        return {"b": self.b.tolist(), "Sigma": self.Sigma.tolist(), "jumps": self.jumps.to_dict()}

    @classmethod
    def from_dict(cls, spec, d=None):
        Sigma = np.atleast_2d(np.asarray(spec.get("Sigma", 1.0), dtype=float))
        if d is not None and Sigma.shape == (1, 1) and d > 1:
            Sigma = Sigma[0, 0] * np.eye(d)
        return cls(spec.get("b", 0.0), Sigma, JumpSpec.from_dict(spec.get("jumps")))


@dataclass(frozen=True, eq=False)
class LevyIncrements:
    """Per-interval driver increments and their decomposition.

    Arrays have one row per interval of the partition ``times``.
    ``jump_sum`` is the raw binned sum of all jumps (``big_jumps`` plus the
    uncompensated small jumps); ``event_times``/``event_sizes`` list the
    individual jumps that are tracked (all jumps for compound Poisson, the
    jumps above one for Gamma drivers).
    """

    times: np.ndarray
    drift: np.ndarray
    brownian: np.ndarray
    big_jumps: np.ndarray
    small_jumps: np.ndarray
    jump_sum: np.ndarray
    compensator: np.ndarray
    event_times: np.ndarray
    event_sizes: np.ndarray
    total: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "total", self.drift + self.brownian + self.big_jumps + self.small_jumps
        )

    @property
    def n_intervals(self):
        return self.drift.shape[0]

    def compensated_drift(self):
        """Per-interval ``b_tilde * dt``; with ``jump_sum`` this rebuilds ``total``."""
        return self.drift - np.outer(np.diff(self.times), self.compensator)

    def aggregate(self, fine_index):
        """Sum the increments into the coarser partition given by ``fine_index``."""
        idx = np.asarray(fine_index, dtype=np.int64)
        if idx[0] != 0 or idx[-1] != self.n_intervals or np.any(np.diff(idx) <= 0):
            raise InvalidArgumentError("fine_index must run from 0 to N, increasing")

        def agg(x):
            csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
            return csum[idx[1:]] - csum[idx[:-1]]

        return LevyIncrements(
            times=self.times[idx],
            drift=agg(self.drift),
            brownian=agg(self.brownian),
            big_jumps=agg(self.big_jumps),
            small_jumps=agg(self.small_jumps),
            jump_sum=agg(self.jump_sum),
            compensator=self.compensator,
            event_times=self.event_times,
            event_sizes=self.event_sizes,
        )


def bin_events(event_times, times):
    """Interval index ``n`` with ``event in (t_n, t_{n+1}]``; raises outside the span."""
    event_times = np.asarray(event_times, dtype=float).reshape(-1)
    times = np.asarray(times, dtype=float)
    if event_times.size and (event_times.min() <= times[0] or event_times.max() > times[-1]):
        raise InvalidArgumentError("jump event outside the partition span")
    return np.searchsorted(times, event_times, side="left") - 1


def decompose_jumps(event_times, event_sizes, partition, compensator=None):
    """Split jump events into per-interval big jumps and compensated small jumps.

    Returns ``(big, small_compensated, raw_sum)``, each of shape ``(N, d)``.
    ``compensator`` is the small-jump drift rate subtracted as ``rate * dt``.
    """
    times = partition.times if hasattr(partition, "times") else np.asarray(partition, dtype=float)
    sizes = np.asarray(event_sizes, dtype=float)
    if sizes.ndim == 1:
        sizes = sizes[:, None]
    n_int = times.size - 1
    d = sizes.shape[1] if sizes.size else (1 if compensator is None else np.size(compensator))
    sizes = sizes.reshape(-1, d)
    bins = bin_events(event_times, times)
    if bins.size != sizes.shape[0]:
        raise InvalidArgumentError("event times and sizes differ in length")
    big_mask = np.linalg.norm(sizes, axis=1) > 1.0
    big = np.zeros((n_int, d))
    small = np.zeros((n_int, d))
    np.add.at(big, bins[big_mask], sizes[big_mask])
    np.add.at(small, bins[~big_mask], sizes[~big_mask])
    raw = big + small
    if compensator is not None:
        small = small - np.outer(np.diff(times), _broadcast(compensator, d, "compensator"))
    return big, small, raw


def _gamma_component(rng, shape, scale, steps, times):
    """One-sided Gamma increments with the jumps above one extracted.

    Within an interval the jumps of a Gamma process, taken in size-biased
    order and normalised by their total, follow a GEM(shape * dt) stick
    breaking independent of the total; every jump above one is found before
    the remainder drops below one.
    """
    totals = scale * rng.gamma(shape * steps)
    ev_t, ev_x = [], []
    big = np.zeros_like(totals)
    for n in np.flatnonzero(totals > 1.0):
        rem = totals[n]
        alpha = shape * steps[n]
        while rem > 1.0:
            piece = rem * rng.beta(1.0, alpha)
            rem -= piece
            if piece > 1.0:
                big[n] += piece
                ev_x.append(piece)
                ev_t.append(times[n] + steps[n] * (1.0 - rng.random()))
    return totals, big, np.asarray(ev_t), np.asarray(ev_x)


def sample_jumps(jumps, times, d, rng):
    """Jump part of the increments on ``times``.

    Returns ``(big, small_raw, jump_sum, event_times, event_sizes)``.
    """
    times = np.asarray(times, dtype=float)
    steps = np.diff(times)
    n_int = steps.size
    if jumps.kind == "none" or (jumps.kind == "compound_poisson" and jumps.rate == 0):
        z = np.zeros((n_int, d))
        return z, z.copy(), z.copy(), np.zeros(0), np.zeros((0, d))
    if jumps.kind == "compound_poisson":
        t0, t1 = times[0], times[-1]
        count = rng.poisson(jumps.rate * (t1 - t0))
        ev_t = np.sort(rng.uniform(t0, t1, size=count))
        ev_t = ev_t[ev_t > t0]
        sizes = jumps.size.sample(rng, ev_t.size, d)
        big, small, raw = decompose_jumps(ev_t, sizes, times)
        return big, small, raw, ev_t, sizes
    signs = (1.0,) if jumps.kind == "gamma" else (1.0, -1.0)
    big = np.zeros((n_int, d))
    raw = np.zeros((n_int, d))
    all_t, all_x = [], []
    for i in range(d):
        for sign in signs:
            tot, bj, et, ex = _gamma_component(rng, jumps.shape, jumps.scale, steps, times)
            raw[:, i] += sign * tot
            big[:, i] += sign * bj
            if et.size:
                sz = np.zeros((et.size, d))
                sz[:, i] = sign * ex
                all_t.append(et)
                all_x.append(sz)
    if all_t:
        ev_t = np.concatenate(all_t)
        ev_x = np.vstack(all_x)
        order = np.argsort(ev_t, kind="stable")
        ev_t, ev_x = ev_t[order], ev_x[order]
    else:
        ev_t, ev_x = np.zeros(0), np.zeros((0, d))
    return big, raw - big, raw, ev_t, ev_x


def assemble_increments(triplet, times, brownian, rng):
    """Combine given Brownian increments with freshly sampled jumps."""
    times = np.asarray(times, dtype=float)
    steps = np.diff(times)
    d = triplet.d
    big, small_raw, raw, ev_t, ev_x = sample_jumps(triplet.jumps, times, d, rng)
    comp = triplet.compensator
    return LevyIncrements(
        times=times,
        drift=np.outer(steps, triplet.b),
        brownian=brownian,
        big_jumps=big,
        small_jumps=small_raw - np.outer(steps, comp),
        jump_sum=raw,
        compensator=comp,
        event_times=ev_t,
        event_sizes=ev_x,
    )


def sample_levy_increments(triplet, partition, rng_seed):
    """Exact increments of the driver over every interval of ``partition``.

    Brownian parts are drawn first, then the jumps, from one stream; the
    result is a deterministic function of the seed.
    """
    rng = as_generator(rng_seed)
    times = partition.times
    steps = np.diff(times)
    z = rng.standard_normal((steps.size, triplet.d))
    brownian = (z @ triplet.chol.T) * np.sqrt(steps)[:, None]
    return assemble_increments(triplet, times, brownian, rng)
