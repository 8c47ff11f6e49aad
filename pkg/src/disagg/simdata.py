"""Synthetic log-normal bucket data and the naive bucket-average estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import AggregatedDataset, BucketRecord, DomainError, LatentState, RngStream


@dataclass(frozen=True)
class SimConfig:
    K: int = 100
    n: Union[int, Sequence[int]] = 10
    mu: float = math.log(250.0)
    sigma: float = 0.10
    seed: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be >= 1")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if min(self.sizes()) < 1:
            raise DomainError("bucket sizes must be >= 1")

    def sizes(self) -> np.ndarray:
        if np.ndim(self.n) == 0:
            return np.full(self.K, int(self.n), dtype=np.int64)
        sizes = np.asarray(self.n, dtype=np.int64)
        if sizes.size != self.K:
            raise DomainError(f"{sizes.size} bucket sizes given for K={self.K}")
        return sizes


def simulate_lognormal(cfg: SimConfig):
    """Draw individuals with ``log x ~ N(mu, sigma^2)`` and sum them, in
    order, into buckets. Returns ``(truth, data)``."""
    sizes = cfg.sizes()
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    rng = RngStream(cfg.seed, 0)
    x = np.exp(rng.gen.normal(cfg.mu, cfg.sigma, size=int(offsets[-1])))
    # correctly rounded bucket totals, independent of summation order
    y = [math.fsum(x[offsets[i]:offsets[i + 1]]) for i in range(cfg.K)]
    data = AggregatedDataset(
        [BucketRecord(i + 1, int(sizes[i]), float(y[i])) for i in range(cfg.K)]
    )
    return LatentState(x, offsets), data


def naive_estimate(data: AggregatedDataset):
    """Mean and sample SD of the logged bucket averages, as if each average
    were one individual observation."""
    if data.K < 2:
        raise DomainError("naive estimate needs at least two buckets")
    data.require_positive()
    lx = np.log(data.xbar)
    return float(lx.mean()), float(lx.std(ddof=1))


def naive_estimate_raw(data: AggregatedDataset):
    """Same estimator on the raw (grams) scale."""
    if data.K < 2:
        raise DomainError("naive estimate needs at least two buckets")
    return float(data.xbar.mean()), float(data.xbar.std(ddof=1))


def simulate_normal(K: int, n: int, mu: float, sigma: float, seed: int):
    """Normal individuals summed into ``K`` buckets of ``n``; used to check
    the latent sampler against the exact conjugate one."""
    rng = RngStream(seed, 0)
    x = rng.gen.normal(mu, sigma, size=K * n)
    offsets = np.arange(0, K * n + 1, n, dtype=np.int64)
    y = [math.fsum(x[offsets[i]:offsets[i + 1]]) for i in range(K)]
    data = AggregatedDataset([BucketRecord(i + 1, n, float(y[i])) for i in range(K)])
    return LatentState(x, offsets), data
