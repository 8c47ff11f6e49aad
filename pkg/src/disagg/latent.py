"""Sum-preserving Dirichlet Metropolis-Hastings moves for one bucket.

Given the current split ``x`` of a bucket total ``y``, a proposal draws
``w ~ Dirichlet(delta * x)`` and sets ``x* = w * y``. The proposal is
centred on ``x`` and always hits the sum constraint; ``delta`` controls the
step size (larger delta, smaller steps).

These functions work on one bucket at a time and favour clarity. The engine
runs whole sweeps through :mod:`disagg.kernels` instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .model import (
    DomainError,
    NormalParams,
    NumericalError,
    RngStream,
    lognormal_logpdf,
    normal_logpdf,
    sample_dirichlet,
)

SUM_RTOL = 1e-9
MIN_CONCENTRATION = 1e-8

LIKELIHOODS = ("lognormal", "normal")


class TuningWarning(RuntimeWarning):
    """Proposal concentrations are too small for a stable Dirichlet draw."""


@dataclass(frozen=True)
class ProposalConfig:
    """Dirichlet concentration scale per bucket (a scalar is broadcast)."""

    delta: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.delta, dtype=float)).copy()
        if d.ndim != 1 or np.any(~(d > 0)) or not np.all(np.isfinite(d)):
            raise DomainError("delta must be positive and finite")
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)

    @classmethod
    def broadcast(cls, delta, K: int) -> "ProposalConfig":
        d = np.atleast_1d(np.asarray(delta, dtype=float))
        if d.size == 1:
            d = np.full(K, d[0])
        if d.size != K:
            raise DomainError(f"delta has {d.size} entries for {K} buckets")
        return cls(d)


@dataclass(frozen=True)
class LikelihoodSpec:
    kind: str
    params: NormalParams

    def __post_init__(self):
        if self.kind not in LIKELIHOODS:
            raise DomainError(f"unknown likelihood {self.kind!r}")

    def logpdf(self, x):
        if self.kind == "lognormal":
            return lognormal_logpdf(x, self.params)
        return normal_logpdf(x, self.params)


@dataclass(frozen=True)
class MhOutcome:
    state: np.ndarray
    accepted: bool
    log_ratio: float


def _as_bucket(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise DomainError(f"{name} must be a non-empty vector")
    if np.any(~(x > 0)):
        raise DomainError(f"{name} must be strictly positive")
    return x


def _check_sum(x, y, rtol=SUM_RTOL, name="x"):
    if abs(math.fsum(x) - y) > rtol * abs(y):
        raise DomainError(f"{name} does not sum to y = {y!r}")


def propose_bucket(x_i, y_i: float, delta_i: float, rng: RngStream, size=None) -> np.ndarray:
    """Draw ``x* = w * y`` with ``w ~ Dirichlet(delta * x)``; ``size`` stacks
    independent draws along a leading axis."""
    x_i = _as_bucket(x_i)
    if x_i.size == 1:
        one = np.array([float(y_i)])
        return one if size is None else np.tile(one, (size, 1))
    return sample_dirichlet(delta_i * x_i, rng, size=size) * y_i


def proposal_logdensity(x_star_i, x_i, y_i: float, delta_i: float) -> float:
    """log q(x* | x) without the constant change-of-variables factor.

    A single-member bucket has a degenerate proposal with unit mass, so the
    result is 0.
    """
    x_star_i = _as_bucket(x_star_i, "x_star")
    x_i = _as_bucket(x_i)
    if x_star_i.shape != x_i.shape:
        raise DomainError(f"dimension mismatch: {x_star_i.size} vs {x_i.size}")
    _check_sum(x_i, y_i)
    _check_sum(x_star_i, y_i, name="x_star")
    if x_i.size == 1:
        return 0.0
    conc = delta_i * x_i
    return float(
        gammaln(delta_i * y_i) - gammaln(conc).sum() + ((conc - 1.0) * np.log(x_star_i)).sum()
    )


def log_accept_ratio(
    x_i, x_star_i, y_i: float, like: LikelihoodSpec, delta_i: float, bucket=None
) -> float:
    """log R for moving bucket state ``x_i`` to ``x_star_i``.

    Returns ``-inf`` when ``x_star_i`` violates the sum constraint, since the
    observation model puts zero mass there.
    """
    x_i = _as_bucket(x_i)
    _check_sum(x_i, y_i)
    x_star_i = np.asarray(x_star_i, dtype=float)
    if x_star_i.shape != x_i.shape:
        raise DomainError(f"dimension mismatch: {x_star_i.size} vs {x_i.size}")
    if abs(math.fsum(x_star_i) - y_i) > SUM_RTOL * abs(y_i) or np.any(~(x_star_i > 0)):
        return -math.inf
    if np.array_equal(x_star_i, x_i):
        return 0.0
    like_new = np.sum(like.logpdf(x_star_i))
    like_old = np.sum(like.logpdf(x_i))
    if not (np.isfinite(like_new) and np.isfinite(like_old)):
        where = f"bucket {bucket}" if bucket is not None else "bucket"
        raise NumericalError(f"{where}: non-finite likelihood term", bucket=bucket)
    q_rev = proposal_logdensity(x_i, x_star_i, y_i, delta_i)
    q_fwd = proposal_logdensity(x_star_i, x_i, y_i, delta_i)
    return float((like_new - like_old) + (q_rev - q_fwd))


def mh_update_bucket(
    x_i, y_i: float, like: LikelihoodSpec, delta_i: float, rng: RngStream, bucket=None
) -> MhOutcome:
    x_i = _as_bucket(x_i)
    x_star = None
    if x_i.size == 1 or np.all(delta_i * x_i >= MIN_CONCENTRATION):
        x_star = propose_bucket(x_i, y_i, delta_i, rng)
    if x_star is None or (x_i.size > 1 and np.any(delta_i * x_star < MIN_CONCENTRATION)):
        warnings.warn(
            f"bucket {bucket}: Dirichlet concentration below {MIN_CONCENTRATION:g}; "
            "proposal rejected, increase delta",
            TuningWarning,
            stacklevel=2,
        )
        return MhOutcome(x_i, False, -math.inf)
    log_r = log_accept_ratio(x_i, x_star, y_i, like, delta_i, bucket=bucket)
    u = rng.gen.random()
    if log_r > -math.inf and (u == 0.0 or math.log(u) < log_r):
        return MhOutcome(x_star, True, log_r)
    return MhOutcome(x_i, False, log_r)


def proposal_moments(x_i, y_i: float, delta_i: float):
    """Mean and variance of each coordinate of ``x*`` given ``x``."""
    x_i = np.asarray(x_i, dtype=float)
    return x_i.copy(), x_i * (y_i - x_i) / (delta_i * y_i + 1.0)


def lognormal_bucket_conditional_grid(y: float, params: NormalParams, n_grid: int = 200):
    """Brute-force conditional of ``x_1`` in a two-member log-normal bucket,
    on the midpoints of ``n_grid`` equal bins of (0, y)."""
    edges = np.linspace(0.0, y, n_grid + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    logp = lognormal_logpdf(mid, params) + lognormal_logpdf(y - mid, params)
    p = np.exp(logp - logp.max())
    return edges, p / p.sum()


def run_bucket_chain(
    x0, y: float, like: LikelihoodSpec, delta: float, n_iter: int, rng: RngStream,
    backend: Optional[str] = None,
):
    """Run the MH kernel on one bucket with theta held fixed.

    Returns the ``(n_iter, n)`` array of states and the acceptance rate.
    """
    from .kernels import BucketSweeper

    x0 = _as_bucket(x0)
    _check_sum(x0, y)
    sweeper = BucketSweeper(x0, np.array([x0.size]), np.array([float(y)]),
                            np.array([float(delta)]), like.kind, backend=backend)
    out = np.empty((n_iter, x0.size))
    for t in range(n_iter):
        sweeper.sweep(like.params.mu, like.params.tau, rng.gen)
        out[t] = sweeper.x
    return out, sweeper.accepted[0] / n_iter
