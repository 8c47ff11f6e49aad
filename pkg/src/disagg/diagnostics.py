"""Posterior summaries and convergence diagnostics across chains.

ESS uses the multi-chain autocorrelation estimate truncated by Geyer's
initial positive sequence. R-hat is the rank-normalized split-R-hat,
reported as the larger of the bulk and folded versions and floored at 1
(values below 1 are sampling noise). A parameter with
zero variance gets ``nan`` for both (``null`` in JSON) and is listed in
``DiagnosticsReport.degenerate``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .model import DomainError

MIN_DRAWS = 10
QUANTILES = (0.025, 0.5, 0.975)


def _autocov(x: np.ndarray) -> np.ndarray:
    """Autocovariance of each row at every lag, via FFT."""
    n = x.shape[-1]
    size = 1 << int(np.ceil(np.log2(2 * n)))
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[..., :n]
    return acov / n


def ess(draws) -> float:
    """Effective sample size of a ``(chains, draws)`` array."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    m, n = draws.shape
    if n < MIN_DRAWS:
        raise DomainError(f"ESS needs at least {MIN_DRAWS} draws per chain")
    acov = _autocov(draws)
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if m > 1:
        var_plus += draws.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float("nan")
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum adjacent pairs while positive, then enforce monotonicity
    t = 0
    pair_sums = []
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p < 0:
            break
        pair_sums.append(p)
        t += 2
    pairs = np.minimum.accumulate(np.array(pair_sums)) if pair_sums else np.array([1.0])
    tau = -1.0 + 2.0 * pairs.sum()
    total = m * n
    tau = max(tau, 1.0 / np.log10(total))
    return float(min(total / tau, total))


def _split(draws: np.ndarray) -> np.ndarray:
    n = draws.shape[1] // 2
    if n < 1:
        raise DomainError("split R-hat needs at least 2 draws per chain")
    return np.concatenate([draws[:, :n], draws[:, -n:]], axis=0)


def _rhat_raw(draws: np.ndarray) -> float:
    m, n = draws.shape
    b = n * draws.mean(axis=1).var(ddof=1)
    w = draws.var(axis=1, ddof=1).mean()
    if not w > 0:
        return float("nan")
    return float(np.sqrt(((n - 1.0) / n * w + b / n) / w))


def _rank_normalize(draws: np.ndarray) -> np.ndarray:
    r = rankdata(draws, method="average").reshape(draws.shape)
    return ndtri((r - 0.375) / (draws.size + 0.25))


def split_rhat(draws) -> float:
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[1] < MIN_DRAWS:
        raise DomainError(f"R-hat needs at least {MIN_DRAWS} draws per chain")
    if not np.ptp(draws) > 0:
        return float("nan")
    split = _split(draws)
    bulk = _rhat_raw(_rank_normalize(split))
    folded = np.abs(split - np.median(split))
    tail = _rhat_raw(_rank_normalize(folded)) if np.ptp(folded) > 0 else bulk
    return max(bulk, tail, 1.0)


@dataclass
class ParameterSummary:
    mean: float
    sd: float
    q025: float
    q50: float
    q975: float
    ess: float
    rhat: float
    mcse: float


@dataclass
class DiagnosticsReport:
    parameters: dict
    n_chains: int
    n_draws: int
    acceptance: dict = field(default_factory=dict)
    degenerate: list = field(default_factory=list)

    def to_dict(self) -> dict:
        """Plain dict for JSON; undefined (nan) statistics become ``None``."""
        d = asdict(self)
        d["parameters"] = {
            k: {f: (None if isinstance(v, float) and np.isnan(v) else v)
                for f, v in asdict(p).items()}
            for k, p in self.parameters.items()
        }
        return d


def summarize(draws) -> ParameterSummary:
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    flat = draws.ravel()
    q = np.quantile(flat, QUANTILES)
    e = ess(draws)
    sd = float(flat.std(ddof=1))
    return ParameterSummary(
        mean=float(flat.mean()),
        sd=sd,
        q025=float(q[0]),
        q50=float(q[1]),
        q975=float(q[2]),
        ess=e,
        rhat=split_rhat(draws),
        mcse=sd / np.sqrt(e) if e > 0 else float("nan"),
    )


def compute_diagnostics(chains) -> DiagnosticsReport:
    """Summaries of mu, tau, sigma and every traced latent coordinate."""
    if not chains:
        raise DomainError("need at least one chain")
    n = min(c.n_draws for c in chains)
    if n < MIN_DRAWS:
        raise DomainError(f"diagnostics need at least {MIN_DRAWS} draws per chain, got {n}")
    series = {
        "mu": np.stack([c.mu[:n] for c in chains]),
        "tau": np.stack([c.tau[:n] for c in chains]),
        "sigma": np.stack([c.sigma[:n] for c in chains]),
    }
    for k, (i, j) in enumerate(chains[0].latent_coords):
        series[f"x_{i}_{j}"] = np.stack([c.latent[:n, k] for c in chains])
    params = {name: summarize(arr) for name, arr in series.items()}
    degenerate = [name for name, s in params.items() if np.isnan(s.ess)]
    acceptance = {}
    if chains[0].acceptance is not None:
        for idx, c in enumerate(chains):
            acceptance[str(idx)] = {
                "mean": float(np.mean(c.acceptance)),
                "min": float(np.min(c.acceptance)),
                "max": float(np.max(c.acceptance)),
            }
    return DiagnosticsReport(params, len(chains), n, acceptance, degenerate)
