"""Exact Gibbs sampler for the aggregated-normal model.

A bucket average of ``n`` iid N(mu, tau) values is N(mu, n * tau), so the
averages are sufficient and the full conditionals stay normal / gamma.
The ``*_from_stats`` helpers take the sufficient statistics directly and are
shared with the latent-variable engine, where every group has size one.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    AggregatedDataset,
    ChainOutput,
    DomainError,
    GammaSpec,
    GaussianSpec,
    NormalGammaPrior,
    RngStream,
)


def mu_conditional_from_stats(count, total, tau, prior: NormalGammaPrior) -> GaussianSpec:
    """Conditional of the mean given ``count = sum n_k`` and
    ``total = sum n_k * xbar_k``."""
    if not tau > 0:
        raise DomainError(f"precision must be positive, got {tau}")
    precision = tau * count + prior.tau0
    return GaussianSpec((tau * total + prior.tau0 * prior.mu0) / precision, precision)


def tau_conditional_from_stats(n_groups, weighted_ss, prior: NormalGammaPrior) -> GammaSpec:
    """Conditional of the precision given ``weighted_ss = sum n_k (xbar_k - mu)^2``."""
    return GammaSpec(prior.a + 0.5 * n_groups, prior.b + 0.5 * weighted_ss)


def mu_conditional(data: AggregatedDataset, tau: float, prior: NormalGammaPrior) -> GaussianSpec:
    # n_k * xbar_k is y_k; fsum keeps the result independent of bucket order
    return mu_conditional_from_stats(int(data.n.sum()), math.fsum(data.y), tau, prior)


def tau_conditional(data: AggregatedDataset, mu: float, prior: NormalGammaPrior) -> GammaSpec:
    resid = data.n * (data.xbar - mu) ** 2
    return tau_conditional_from_stats(data.K, math.fsum(resid), prior)


def default_init(data: AggregatedDataset):
    """Weighted grand mean, and the moment estimate of the individual
    precision implied by the spread of the bucket means."""
    n = data.n.astype(float)
    mu = math.fsum(data.y) / n.sum()
    if data.K < 2:
        return mu, 1.0
    var_means = float(np.var(data.xbar, ddof=1))
    if var_means <= 0:
        return mu, 1.0
    return mu, 1.0 / (var_means * n.mean())


@dataclass(frozen=True)
class ConjugateChainConfig:
    n_iter: int
    burn_in: int = 0
    thin: int = 1
    init_mu: Optional[float] = None
    init_tau: Optional[float] = None
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.n_iter < 1:
            raise DomainError("n_iter must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise DomainError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if self.init_tau is not None and not self.init_tau > 0:
            raise DomainError("init_tau must be positive")


def run_conjugate_gibbs(
    data: AggregatedDataset, prior: NormalGammaPrior, cfg: ConjugateChainConfig
) -> ChainOutput:
    """Alternate mu | tau and tau | mu draws, recording every ``thin``-th
    state after burn-in."""
    t0 = time.perf_counter()
    rng = RngStream(cfg.seed, cfg.stream)
    gen = rng.gen
    mu, tau = default_init(data)
    if cfg.init_mu is not None:
        mu = float(cfg.init_mu)
    if cfg.init_tau is not None:
        tau = float(cfg.init_tau)

    count = int(data.n.sum())
    total = math.fsum(data.y)
    # sum n (xbar - mu)^2 = ss_center + count (center - mu)^2
    center = total / count
    ss_center = math.fsum(data.n * (data.xbar - center) ** 2)
    shape = prior.a + 0.5 * data.K

    n_draws = (cfg.n_iter - cfg.burn_in) // cfg.thin
    mus = np.empty(n_draws)
    taus = np.empty(n_draws)
    iters = np.empty(n_draws, dtype=np.int64)
    k = 0
    for it in range(1, cfg.n_iter + 1):
        post = mu_conditional_from_stats(count, total, tau, prior)
        mu = gen.normal(post.mean, 1.0 / math.sqrt(post.precision))
        rate = prior.b + 0.5 * (ss_center + count * (center - mu) ** 2)
        tau = gen.gamma(shape, 1.0 / rate)
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0 and k < n_draws:
            mus[k] = mu
            taus[k] = tau
            iters[k] = it
            k += 1
    return ChainOutput(
        mu=mus,
        tau=taus,
        iterations=iters,
        latent=np.empty((n_draws, 0)),
        duration=time.perf_counter() - t0,
        seed=cfg.seed,
        stream=cfg.stream,
        metadata={"sampler": "conjugate"},
    )
