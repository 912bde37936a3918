"""DIC model comparison and per-parameter chain summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelKind, ModelParams, UnitDataset, marginal_loglik
from .samplers import ChainOutput

SPLIT_HALF_FLAG = 0.2


@dataclass(frozen=True)
class DicReport:
    """``dic = 2 * dbar - d_at_mean``; ``p_d`` may come out negative and is then flagged."""

    dic: float
    dbar: float
    d_at_mean: float
    p_d: float

    @classmethod
    def from_components(cls, dbar: float, d_at_mean: float) -> "DicReport":
        return cls(2.0 * dbar - d_at_mean, dbar, d_at_mean, dbar - d_at_mean)

    @property
    def negative_p_d(self) -> bool:
        return self.p_d < 0.0


def deviance(params: ModelParams, data: UnitDataset) -> float:
    return -2.0 * marginal_loglik(params, data)


def posterior_mean_params(chain: ChainOutput) -> ModelParams:
    """Componentwise arithmetic posterior mean of (beta, sigma2, tau2[, p])."""
    p = float(chain.p.mean()) if chain.model_kind is ModelKind.UNER else 1.0
    return ModelParams(
        chain.beta.mean(axis=0),
        float(chain.sigma2.mean()),
        float(chain.tau2.mean()),
        p,
        chain.model_kind,
    )


def dic(chain: ChainOutput, data: UnitDataset) -> DicReport:
    """DIC from the marginal likelihood (random effects integrated out)."""
    if chain.n_draws == 0:
        raise ValueError("chain has no draws")
    dbar = math.fsum(deviance(chain.params_at(s), data) for s in range(chain.n_draws)) / chain.n_draws
    return DicReport.from_components(dbar, deviance(posterior_mean_params(chain), data))


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    sd: float
    ci_lo: float
    ci_hi: float
    split_half: float

    @property
    def flagged(self) -> bool:
        return self.split_half > SPLIT_HALF_FLAG


def summarize_series(name: str, x) -> ParamSummary:
    """Mean, sd, equal-tailed 95% interval and the split-half discrepancy.

    The discrepancy is |mean(first half) - mean(second half)| divided by the
    pooled sd sqrt((var1 + var2) / 2); it is 0 when both halves are constant.
    With an odd draw count the middle draw belongs to the second half.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = np.quantile(x, [0.025, 0.975], method="linear")
    h = x.shape[0] // 2
    first, second = x[:h], x[h:]
    if h == 0:
        disc = 0.0
    else:
        pooled = math.sqrt(0.5 * (first.var() + second.var()))
        gap = abs(first.mean() - second.mean())
        disc = 0.0 if gap == 0.0 else (math.inf if pooled == 0.0 else gap / pooled)
    return ParamSummary(name, float(x.mean()), float(x.std()), float(lo), float(hi), float(disc))


def chain_summary(chain: ChainOutput) -> list:
    mat = chain.param_matrix()
    return [summarize_series(name, mat[:, k]) for k, name in enumerate(chain.param_names())]
