"""Metropolis-within-Gibbs driver for the latent-value model.

Each iteration (i) sweeps the Dirichlet MH kernel over every bucket given
theta, then (ii) draws theta = (mu, tau) from its conjugate conditionals,
treating every imputed value (logged, for the log-normal likelihood) as an
individual observation.
"""
from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _backend
from .conjugate import mu_conditional_from_stats, tau_conditional_from_stats
from .kernels import BucketSweeper
from .latent import LIKELIHOODS, ProposalConfig, TuningWarning
from .model import (
    AggregatedDataset,
    ChainOutput,
    DomainError,
    LatentState,
    NormalGammaPrior,
    NormalParams,
    NumericalError,
    RngStream,
)
from .simdata import naive_estimate

ADAPT_EVERY = 100
ADAPT_EXPONENT = 0.6
DELTA_BOUNDS = (1e-4, 1e8)
SUM_CHECK_EVERY = 1000
SUM_CHECK_RTOL = 1e-9


class AdaptationError(RuntimeError):
    """Adaptation requested after burn-in has ended."""


@dataclass
class SamplerConfig:
    n_iter: int = 10_000
    burn_in: int = 1_000
    thin: int = 1
    n_chains: int = 1
    seed: int = 0
    delta: Union[float, Sequence[float]] = 1.0
    adapt: str = "off"
    adapt_target: float = 0.23
    init: Union[str, list] = "equal-split"
    tau_init: Union[str, float] = "aggregated-estimate"
    likelihood: str = "lognormal"
    prior: NormalGammaPrior = field(default_factory=NormalGammaPrior)
    track_latent: list = field(default_factory=lambda: [(0, 0)])
    joint_proposal: bool = False

    def __post_init__(self):
        if isinstance(self.prior, dict):
            self.prior = NormalGammaPrior(**self.prior)
        self.track_latent = [tuple(int(v) for v in c) for c in self.track_latent]
        if isinstance(self.delta, (list, tuple)):
            self.delta = [float(d) for d in self.delta]
        self.validate()

    def validate(self):
        if self.n_iter < 1:
            raise DomainError("n_iter must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise DomainError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if self.n_chains < 1:
            raise DomainError("n_chains must be >= 1")
        if self.adapt not in ("off", "burn-in"):
            raise DomainError("adapt must be 'off' or 'burn-in'")
        if not 0 < self.adapt_target < 1:
            raise DomainError("adapt_target must lie in (0, 1)")
        if self.likelihood not in LIKELIHOODS:
            raise DomainError(f"likelihood must be one of {LIKELIHOODS}")
        if isinstance(self.tau_init, str):
            if self.tau_init != "aggregated-estimate":
                raise DomainError("tau_init must be 'aggregated-estimate' or a positive number")
        elif not float(self.tau_init) > 0:
            raise DomainError("tau_init must be positive")
        if isinstance(self.init, str) and self.init != "equal-split":
            raise DomainError("init must be 'equal-split' or a list of per-bucket vectors")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["track_latent"] = [list(c) for c in self.track_latent]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class AdaptationState:
    """Acceptance counts in the current adaptation window."""

    accepted: np.ndarray
    window: int = 0
    epoch: int = 0
    frozen: bool = False

    def record(self, accepted_now: np.ndarray):
        if self.frozen:
            raise AdaptationError("adaptation state is frozen after burn-in")
        self.accepted += accepted_now
        self.window += 1

    def freeze(self):
        self.frozen = True


def adapt_delta(state: AdaptationState, delta: ProposalConfig, target: float) -> ProposalConfig:
    """Robbins-Monro step on log delta toward the target acceptance rate.

    Low acceptance raises delta, which tightens the Dirichlet proposal.
    """
    if state.frozen:
        raise AdaptationError("delta adaptation is only allowed during burn-in")
    if state.window < 1:
        return delta
    state.epoch += 1
    gain = state.epoch ** -ADAPT_EXPONENT
    observed = state.accepted / state.window
    log_delta = np.log(delta.delta) + gain * (target - observed)
    state.accepted = np.zeros_like(state.accepted)
    state.window = 0
    return ProposalConfig(np.clip(np.exp(log_delta), *DELTA_BOUNDS))


def init_latent(data: AggregatedDataset, likelihood: str = "lognormal") -> LatentState:
    """Split every bucket total equally among its members."""
    # the Dirichlet kernel needs positive values for either likelihood
    data.require_positive()
    values = np.repeat(data.y / data.n, data.n)
    return LatentState(values, data.offsets)


def _given_latent(data, init) -> LatentState:
    if len(init) != data.K:
        raise DomainError(f"init has {len(init)} buckets, dataset has {data.K}")
    state = LatentState(np.concatenate([np.asarray(v, dtype=float) for v in init]), data.offsets)
    state.check(data)
    return state


def _initial_theta(data: AggregatedDataset, cfg: SamplerConfig):
    if cfg.likelihood == "lognormal":
        mu, sigma = naive_estimate(data) if data.K > 1 else (math.log(data.xbar[0]), 0.0)
    else:
        mu = float(np.mean(data.xbar))
        sigma = float(np.std(data.xbar, ddof=1)) if data.K > 1 else 0.0
    if isinstance(cfg.tau_init, str):
        tau = 1.0 / sigma**2 if sigma > 0 else 1.0
    else:
        tau = float(cfg.tau_init)
    return mu, tau


def _flat_coords(data: AggregatedDataset, coords):
    offsets = data.offsets
    flat = []
    for i, j in coords:
        if not (0 <= i < data.K and 0 <= j < data.n[i]):
            raise DomainError(f"latent coordinate ({i}, {j}) is out of range")
        flat.append(offsets[i] + j)
    return np.array(flat, dtype=np.int64)


def run_chain(data: AggregatedDataset, cfg: SamplerConfig, chain: int = 0,
              backend: Optional[str] = None) -> ChainOutput:
    """Run one chain on stream ``chain`` of ``cfg.seed``."""
    t0 = time.perf_counter()
    backend = _backend.resolve(backend)
    rng = RngStream(cfg.seed, chain)
    gen = rng.gen
    prior = cfg.prior
    if cfg.init == "equal-split":
        state = init_latent(data, cfg.likelihood)
    else:
        data.require_positive()
        state = _given_latent(data, cfg.init)
    mu, tau = _initial_theta(data, cfg)
    proposal = ProposalConfig.broadcast(cfg.delta, data.K)
    sweeper = BucketSweeper(state.values, data.n, data.y, proposal.delta,
                            cfg.likelihood, joint=cfg.joint_proposal, backend=backend)
    lognormal = cfg.likelihood == "lognormal"
    n_total = int(data.n.sum())
    tracked = _flat_coords(data, cfg.track_latent)

    adapting = cfg.adapt == "burn-in" and cfg.burn_in > 0
    adapt_state = AdaptationState(np.zeros(data.K, dtype=np.int64))
    if not adapting:
        adapt_state.freeze()

    n_draws = (cfg.n_iter - cfg.burn_in) // cfg.thin
    mus = np.empty(n_draws)
    taus = np.empty(n_draws)
    iters = np.empty(n_draws, dtype=np.int64)
    latent = np.empty((n_draws, tracked.size))
    k = 0
    prev_acc = np.zeros(data.K, dtype=np.int64)

    for it in range(1, cfg.n_iter + 1):
        if it == cfg.burn_in + 1:
            if adapting:
                adapt_state.freeze()
            sweeper.reset_counts()
        bad = sweeper.sweep(mu, tau, gen)
        if bad >= 0:
            bid = int(data.ids[bad])
            raise NumericalError(f"iteration {it}, bucket {bid}: non-finite acceptance ratio",
                                 bucket=bid, iteration=it)

        obs = sweeper.logx if lognormal else sweeper.x
        post_mu = mu_conditional_from_stats(n_total, obs.sum(), tau, prior)
        mu = gen.normal(post_mu.mean, 1.0 / math.sqrt(post_mu.precision))
        centre = obs.mean()
        ss = float(np.dot(obs - centre, obs - centre)) + n_total * (centre - mu) ** 2
        post_tau = tau_conditional_from_stats(n_total, ss, prior)
        tau = gen.gamma(post_tau.shape, 1.0 / post_tau.rate)
        if not (math.isfinite(mu) and math.isfinite(tau) and tau > 0):
            raise NumericalError(f"iteration {it}: invalid theta draw mu={mu}, tau={tau}",
                                 iteration=it)

        if adapting and it <= cfg.burn_in:
            adapt_state.record(sweeper.accepted - prev_acc)
            prev_acc = sweeper.accepted.copy()
            if it % ADAPT_EVERY == 0:
                proposal = adapt_delta(adapt_state, proposal, cfg.adapt_target)
                sweeper.set_delta(proposal.delta)

        if it % SUM_CHECK_EVERY == 0:
            _check_sums(sweeper, data, it)

        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0 and k < n_draws:
            mus[k] = mu
            taus[k] = tau
            iters[k] = it
            latent[k] = sweeper.x[tracked]
            k += 1

    _check_sums(sweeper, data, cfg.n_iter)
    n_sampling = cfg.n_iter - cfg.burn_in
    if sweeper.n_underflow:
        warnings.warn(
            f"chain {chain}: {sweeper.n_underflow} proposals rejected for Dirichlet "
            "concentrations below 1e-8; increase delta",
            TuningWarning,
            stacklevel=2,
        )
    return ChainOutput(
        mu=mus,
        tau=taus,
        iterations=iters,
        latent=latent,
        latent_coords=tuple(cfg.track_latent),
        acceptance=sweeper.accepted / n_sampling,
        delta=proposal.delta.copy(),
        duration=time.perf_counter() - t0,
        seed=cfg.seed,
        stream=chain,
        metadata={
            "sampler": "latent",
            "backend": backend,
            "likelihood": cfg.likelihood,
            "prior": asdict(prior),
            "underflow_rejections": int(sweeper.n_underflow),
        },
    )


def _check_sums(sweeper: BucketSweeper, data: AggregatedDataset, it: int):
    err = np.abs(sweeper.sums() - data.y)
    bad = np.flatnonzero(err > SUM_CHECK_RTOL * np.abs(data.y))
    if bad.size:
        bid = int(data.ids[bad[0]])
        raise NumericalError(f"iteration {it}, bucket {bid}: latent values drifted off the bucket sum",
                             bucket=bid, iteration=it)


def worker_count(n_chains: int) -> int:
    cap = os.environ.get("DISAGG_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_chains, limit))


def run_latent_gibbs(data: AggregatedDataset, cfg: SamplerConfig,
                     backend: Optional[str] = None) -> list:
    """Run ``cfg.n_chains`` chains; chain ``c`` uses random stream ``c``."""
    cfg.validate()
    if cfg.n_chains == 1 or worker_count(cfg.n_chains) == 1:
        return [run_chain(data, cfg, c, backend) for c in range(cfg.n_chains)]
    with ThreadPoolExecutor(worker_count(cfg.n_chains)) as pool:
        futures = [pool.submit(run_chain, data, cfg, c, backend) for c in range(cfg.n_chains)]
        return [f.result() for f in futures]


def posterior_predictive(theta_draws: Sequence[NormalParams], m: int, rng: RngStream,
                         likelihood: str = "lognormal") -> np.ndarray:
    """``m`` draws of a new individual, each from a uniformly chosen theta."""
    if len(theta_draws) == 0:
        raise DomainError("need at least one parameter draw")
    if m < 1:
        raise DomainError("m must be >= 1")
    mu = np.array([t.mu for t in theta_draws])
    sd = np.array([t.tau for t in theta_draws]) ** -0.5
    pick = rng.gen.integers(0, len(mu), size=m)
    z = rng.gen.normal(mu[pick], sd[pick])
    return np.exp(z) if likelihood == "lognormal" else z
