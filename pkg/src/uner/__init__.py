"""Bayesian estimation for nested error regression models with uncertain random effects."""

from .model import (
    AreaData,
    CompoundSymmetry,
    LatentState,
    ModelKind,
    ModelParams,
    PriorConfig,
    TargetSpec,
    UnitDataset,
    cs_solve_logdet,
    estimate_sampling_variance,
    marginal_loglik,
    posterior_prob_u,
    posterior_var_mu,
    validate_conditions,
)
from .samplers import ChainConfig, ChainOutput, gibbs_ner, gibbs_uner

__version__ = "0.1.0"

__all__ = [
    "AreaData",
    "ChainConfig",
    "ChainOutput",
    "CompoundSymmetry",
    "LatentState",
    "ModelKind",
    "ModelParams",
    "PriorConfig",
    "TargetSpec",
    "UnitDataset",
    "cs_solve_logdet",
    "estimate_sampling_variance",
    "gibbs_ner",
    "gibbs_uner",
    "marginal_loglik",
    "posterior_prob_u",
    "posterior_var_mu",
    "validate_conditions",
]
