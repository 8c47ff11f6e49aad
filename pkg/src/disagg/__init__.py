"""Bayesian inference for populations observed only through group sums."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .conjugate import (
    ConjugateChainConfig,
    mu_conditional,
    run_conjugate_gibbs,
    tau_conditional,
)
from .diagnostics import DiagnosticsReport, compute_diagnostics
from .engine import (
    AdaptationState,
    SamplerConfig,
    adapt_delta,
    init_latent,
    posterior_predictive,
    run_latent_gibbs,
)
from .latent import (
    LikelihoodSpec,
    MhOutcome,
    ProposalConfig,
    log_accept_ratio,
    mh_update_bucket,
    propose_bucket,
    proposal_logdensity,
    proposal_moments,
)
from .model import (
    AggregatedDataset,
    BucketRecord,
    ChainOutput,
    DomainError,
    GammaSpec,
    GaussianSpec,
    LatentState,
    NormalGammaPrior,
    NormalParams,
    NumericalError,
    RngStream,
    aggregated_normal_logpdf,
    lognormal_logpdf,
    sample_dirichlet,
)
from .simdata import SimConfig, naive_estimate, naive_estimate_raw, simulate_lognormal
