"""Domain types, densities and random-variate primitives.

All normals are parameterized by (mean, precision). Gamma distributions use
the shape-rate convention, so a ``GammaSpec(shape, rate)`` has mean
``shape / rate``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)

# log-space gamma variates are used below this shape to avoid underflow
SMALL_SHAPE = 1.0
DIRICHLET_MAX_RETRIES = 100


class DomainError(ValueError):
    """Input outside the support or contract of an operation."""

    def __init__(self, message, bucket=None):
        super().__init__(message)
        self.bucket = bucket


class NumericalError(ArithmeticError):
    """A sampler produced a non-finite quantity."""

    def __init__(self, message, bucket=None, iteration=None):
        super().__init__(message)
        self.bucket = bucket
        self.iteration = iteration


@dataclass(frozen=True)
class BucketRecord:
    id: int
    n: int
    y: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"bucket {self.id}: n must be an integer >= 1, got {self.n}", self.id)
        if not math.isfinite(self.y):
            raise DomainError(f"bucket {self.id}: y must be finite, got {self.y}", self.id)


class AggregatedDataset:
    """Observed bucket sums ``y`` and counts ``n``, in a fixed order."""

    def __init__(self, buckets: Sequence[BucketRecord]):
        buckets = tuple(buckets)
        if not buckets:
            raise DomainError("dataset needs at least one bucket")
        ids = [b.id for b in buckets]
        if len(set(ids)) != len(ids):
            raise DomainError("bucket ids must be unique")
        self.buckets = buckets
        self.ids = np.array(ids, dtype=np.int64)
        self.n = np.array([b.n for b in buckets], dtype=np.int64)
        self.y = np.array([b.y for b in buckets], dtype=np.float64)
        for arr in (self.ids, self.n, self.y):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, y, n, ids=None) -> "AggregatedDataset":
        y = np.asarray(y, dtype=float)
        n = np.asarray(n)
        if ids is None:
            ids = range(1, len(y) + 1)
        return cls([BucketRecord(int(i), int(k), float(v)) for i, k, v in zip(ids, n, y)])

    @property
    def K(self) -> int:
        return len(self.buckets)

    @property
    def xbar(self) -> np.ndarray:
        """Bucket averages ``y_i / n_i``."""
        return self.y / self.n

    @property
    def offsets(self) -> np.ndarray:
        """Start index of each bucket in a flat latent vector, plus the total."""
        return np.concatenate(([0], np.cumsum(self.n))).astype(np.int64)

    def require_positive(self):
        bad = np.flatnonzero(self.y <= 0)
        if bad.size:
            bid = int(self.ids[bad[0]])
            raise DomainError(
                f"bucket {bid}: y = {self.y[bad[0]]!r} is not positive, "
                "required by a positive-support likelihood",
                bid,
            )

    def __len__(self):
        return self.K

    def __eq__(self, other):
        if not isinstance(other, AggregatedDataset):
            return NotImplemented
        return self.buckets == other.buckets

    def __repr__(self):
        return f"AggregatedDataset(K={self.K}, total_n={int(self.n.sum())})"


@dataclass(frozen=True)
class LatentState:
    """Imputed individual values stored flat; bucket ``i`` occupies
    ``values[offsets[i]:offsets[i + 1]]``."""

    values: np.ndarray
    offsets: np.ndarray

    def bucket(self, i: int) -> np.ndarray:
        return self.values[self.offsets[i]:self.offsets[i + 1]]

    def buckets(self) -> list:
        return [self.bucket(i) for i in range(len(self.offsets) - 1)]

    def check(self, data: AggregatedDataset, rtol: float = 1e-10):
        if not np.array_equal(np.diff(self.offsets), data.n):
            raise DomainError("latent state shape does not match bucket counts")
        if np.any(self.values <= 0):
            raise DomainError("latent values must be positive")
        sums = np.add.reduceat(self.values, self.offsets[:-1])
        bad = np.flatnonzero(np.abs(sums - data.y) > rtol * np.abs(data.y))
        if bad.size:
            bid = int(data.ids[bad[0]])
            raise DomainError(f"bucket {bid}: latent values do not sum to y", bid)


@dataclass(frozen=True)
class NormalParams:
    mu: float
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.tau)):
            raise DomainError(f"non-finite parameters mu={self.mu}, tau={self.tau}")
        if self.tau <= 0:
            raise DomainError(f"precision must be positive, got {self.tau}")

    @property
    def sigma(self) -> float:
        return self.tau ** -0.5


@dataclass(frozen=True)
class NormalGammaPrior:
    """Normal prior N(mu0, precision tau0) on the mean and Gamma(a, rate b)
    on the precision. ``tau0 = 0`` gives a flat prior on the mean."""

    mu0: float = 0.0
    tau0: float = 1e-6
    a: float = 0.01
    b: float = 0.01

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.tau0 >= 0):
            raise DomainError(f"invalid prior {self}")


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    precision: float

    def __post_init__(self):
        if not self.precision > 0:
            raise DomainError(f"precision must be positive, got {self.precision}")

    def sample(self, rng: "RngStream") -> float:
        return rng.gen.normal(self.mean, 1.0 / math.sqrt(self.precision))


@dataclass(frozen=True)
class GammaSpec:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError(f"invalid gamma parameters {self}")

    def sample(self, rng: "RngStream") -> float:
        return rng.gen.gamma(self.shape, 1.0 / self.rate)


@dataclass
class RngStream:
    """A reproducible random stream identified by ``(seed, stream)``.

    Not safe to share between threads; give each worker its own stream.
    """

    seed: int
    stream: int = 0
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        self.gen = np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ChainOutput:
    """Thinned post-burn-in draws of one chain.

    ``latent`` has one column per coordinate in ``latent_coords``.
    ``acceptance`` and ``delta`` are per bucket and ``None`` for the
    conjugate sampler, which has no latent block.
    """

    mu: np.ndarray
    tau: np.ndarray
    iterations: np.ndarray
    latent: np.ndarray
    latent_coords: tuple = ()
    acceptance: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    duration: float = 0.0
    seed: int = 0
    stream: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def sigma(self) -> np.ndarray:
        return self.tau ** -0.5

    @property
    def n_draws(self) -> int:
        return len(self.mu)

    def theta_draws(self) -> list:
        return [NormalParams(float(m), float(t)) for m, t in zip(self.mu, self.tau)]


def _check_params(mu, tau):
    if not (np.isfinite(mu) and np.isfinite(tau)) or tau <= 0:
        raise DomainError(f"invalid parameters mu={mu}, tau={tau}")


def lognormal_logpdf(x, params: NormalParams):
    """Log density of a log-normal whose log has mean ``mu`` and precision
    ``tau``, including the ``1/x`` Jacobian."""
    mu, tau = params.mu, params.tau
    _check_params(mu, tau)
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("log-normal density requires x > 0")
    lx = np.log(x)
    out = -lx - 0.5 * LOG_2PI + 0.5 * math.log(tau) - 0.5 * tau * (lx - mu) ** 2
    return float(out) if out.ndim == 0 else out


def normal_logpdf(x, params: NormalParams):
    mu, tau = params.mu, params.tau
    _check_params(mu, tau)
    x = np.asarray(x, dtype=float)
    out = -0.5 * LOG_2PI + 0.5 * math.log(tau) - 0.5 * tau * (x - mu) ** 2
    return float(out) if out.ndim == 0 else out


def aggregated_normal_logpdf(xbar, n: int, params: NormalParams):
    """Log density of the average of ``n`` iid N(mu, tau) draws, which is
    N(mu, n * tau)."""
    if n < 1:
        raise DomainError(f"group size must be >= 1, got {n}")
    return normal_logpdf(xbar, NormalParams(params.mu, n * params.tau))


def log_gamma_variates(shape: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Logs of independent Gamma(shape, 1) variates.

    Shapes below ``SMALL_SHAPE`` use ``G = G' * U**(1/shape)`` with
    ``G' ~ Gamma(shape + 1)``, evaluated in log space so tiny variates do not
    underflow to zero.
    """
    small = shape < SMALL_SHAPE
    if not small.any():
        return np.log(gen.standard_gamma(shape))
    g = gen.standard_gamma(np.where(small, shape + 1.0, shape))
    out = np.log(g)
    idx = np.flatnonzero(small)
    out[idx] += np.log(gen.random(idx.size)) / shape[idx]
    return out


def sample_dirichlet(alphas, rng: RngStream, size=None) -> np.ndarray:
    """Dirichlet(alphas) draws via normalized Gamma variates.

    Returns one vector, or a ``(size, k)`` array. Draws with a coordinate that
    underflows to zero are redrawn, at most ``DIRICHLET_MAX_RETRIES`` times.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size < 1:
        raise DomainError("alphas must be a non-empty vector")
    if np.any(~(alphas > 0)) or not np.all(np.isfinite(alphas)):
        raise DomainError("Dirichlet concentrations must be positive and finite")
    if size is not None:
        return _dirichlet_block(alphas, rng, int(size))
    for _ in range(DIRICHLET_MAX_RETRIES):
        lg = log_gamma_variates(alphas, rng.gen)
        e = np.exp(lg - lg.max())
        w = e / e.sum()
        if np.all(w > 0):
            return w
    raise NumericalError(
        f"Dirichlet draw underflowed {DIRICHLET_MAX_RETRIES} times; "
        f"smallest concentration {alphas.min():g}"
    )


def _dirichlet_block(alphas, rng, size):
    tiled = np.broadcast_to(alphas, (size, alphas.size)).ravel()
    lg = log_gamma_variates(tiled, rng.gen).reshape(size, alphas.size)
    e = np.exp(lg - lg.max(axis=1, keepdims=True))
    w = e / e.sum(axis=1, keepdims=True)
    for r in np.flatnonzero(~np.all(w > 0, axis=1)):
        w[r] = sample_dirichlet(alphas, rng)
    return w
