"""Domain types, compound-symmetry algebra and closed-form posterior quantities."""

from .conditions import ConditionReport, Strictness, check_counts, validate_conditions
from .data import AreaData, TargetSpec, UnitDataset
from .linalg import CompoundSymmetry, cs_solve_logdet
from .params import LatentState, ModelKind, ModelParams, PriorConfig
from .posterior import (
    area_loglik,
    estimate_sampling_variance,
    marginal_loglik,
    posterior_mean_v,
    posterior_prob_u,
    posterior_prob_u_all,
    posterior_var_mu,
)

__all__ = [
    "AreaData",
    "CompoundSymmetry",
    "ConditionReport",
    "LatentState",
    "ModelKind",
    "ModelParams",
    "PriorConfig",
    "Strictness",
    "TargetSpec",
    "UnitDataset",
    "area_loglik",
    "check_counts",
    "cs_solve_logdet",
    "estimate_sampling_variance",
    "marginal_loglik",
    "posterior_mean_v",
    "posterior_prob_u",
    "posterior_prob_u_all",
    "posterior_var_mu",
    "validate_conditions",
]
