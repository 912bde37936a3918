"""Posterior summaries of small-area targets and finite-population mean prediction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Optional

import numpy as np

from . import _kernels as K
from .errors import DataError, NoUnsampledUnitsError
from .model import AreaData, ModelKind, ModelParams, PriorConfig, TargetSpec, UnitDataset
from .samplers import (
    DEFAULT_HOOKS,
    ChainConfig,
    ChainOutput,
    SamplerHooks,
    _FiniteTerms,
    run_chain,
)

CI_LEVEL = 0.95


@dataclass(frozen=True, eq=False)
class FinitePopulationSpec:
    """Population size N_i and population covariate mean for each area, keyed by area id."""

    sizes: Mapping[Hashable, int]
    xbar: Mapping[Hashable, np.ndarray]

    def __post_init__(self):
        sizes = {k: int(v) for k, v in self.sizes.items()}
        xbar = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.xbar.items()}
        if set(sizes) != set(xbar):
            raise DataError("population sizes and covariate means cover different areas")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "xbar", xbar)

    @classmethod
    def from_arrays(cls, area_ids, sizes, xbar) -> "FinitePopulationSpec":
        xbar = np.asarray(xbar, dtype=float)
        if xbar.ndim == 1:
            xbar = xbar[:, None]
        return cls(dict(zip(area_ids, sizes)), dict(zip(area_ids, xbar)))

    def check(self, data: UnitDataset) -> None:
        missing = [a for a in data.area_ids if a not in self.sizes]
        extra = [a for a in self.sizes if a not in set(data.area_ids)]
        if missing or extra:
            raise DataError(f"area ids differ: missing from population {missing}, unknown {extra}")
        for a in data.areas:
            if self.sizes[a.area_id] < a.n:
                raise DataError(
                    f"area {a.area_id!r}: population size {self.sizes[a.area_id]} < sample size {a.n}"
                )
            if self.xbar[a.area_id].shape[0] != data.q:
                raise DataError(f"area {a.area_id!r}: population covariate mean must have length {data.q}")


@dataclass(frozen=True, eq=False)
class PredictionSummary:
    """Per-area posterior mean, sd and equal-tailed 95% interval.

    Quantiles use linear interpolation between order statistics.
    """

    area_ids: list
    point: np.ndarray
    sd: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    p_tilde_mean: Optional[np.ndarray] = None

    def rows(self):
        for i, a in enumerate(self.area_ids):
            row = {
                "area_id": a,
                "mean": self.point[i],
                "sd": self.sd[i],
                "ci_lo": self.ci_lo[i],
                "ci_hi": self.ci_hi[i],
            }
            if self.p_tilde_mean is not None:
                row["p_tilde"] = self.p_tilde_mean[i]
            yield row


def summarize_draws(draws, area_ids, p_tilde_mean=None, level=CI_LEVEL) -> PredictionSummary:
    draws = np.asarray(draws, dtype=float)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [tail, 1.0 - tail], axis=0, method="linear")
    # constant columns report their value exactly; summation would round it
    const = np.all(draws == draws[:1], axis=0)
    point = np.where(const, draws[0], draws.mean(axis=0))
    sd = np.where(const, 0.0, draws.std(axis=0))
    return PredictionSummary(list(area_ids), point, sd, lo, hi, p_tilde_mean)


def summarize_mu(chain: ChainOutput, target: Optional[TargetSpec] = None) -> PredictionSummary:
    draws = chain.mu_draws(target)
    p_tilde = chain.u.mean(axis=0) if chain.model_kind is ModelKind.UNER else None
    ids = chain.area_ids if chain.area_ids is not None else list(range(draws.shape[1]))
    return summarize_draws(draws, ids, p_tilde)


def unsampled_covariate_mean(spec: FinitePopulationSpec, area: AreaData) -> np.ndarray:
    """Covariate mean of the non-sampled units, (N_i Xbar_i - n_i xbar_i) / (N_i - n_i)."""
    N_i = spec.sizes[area.area_id]
    n_i = area.n
    if N_i <= n_i:
        raise NoUnsampledUnitsError(f"area {area.area_id!r} is fully observed (N_i = n_i = {n_i})")
    return (N_i * spec.xbar[area.area_id] - n_i * area.xbar) / (N_i - n_i)


def unsampled_mean_moments(params: ModelParams, u_i: int, area: AreaData, spec: FinitePopulationSpec):
    """Mean and variance of the unsampled-unit mean given (u_i, beta, sigma2, tau2) and the data."""
    xr = unsampled_covariate_mean(spec, area)
    n_r = spec.sizes[area.area_id] - area.n
    resid = area.ybar - float(area.xbar @ params.beta)
    mean, var = K.ybar_r_moments(
        float(xr @ params.beta), float(area.n), resid, params.sigma2, params.tau2, int(u_i), float(n_r)
    )
    return float(mean), float(var)


def draw_unsampled_mean(params: ModelParams, u_i: int, area: AreaData, spec: FinitePopulationSpec, rng) -> float:
    mean, var = unsampled_mean_moments(params, u_i, area, spec)
    return mean + np.sqrt(var) * rng.standard_normal()


@dataclass(frozen=True, eq=False)
class FinitePopulationPrediction:
    summary: PredictionSummary
    chain: ChainOutput
    draws: np.ndarray  # (S, m) draws of the finite-population means
    sizes: np.ndarray
    n: np.ndarray


def finite_terms(data: UnitDataset, spec: FinitePopulationSpec) -> _FiniteTerms:
    active = np.zeros(data.m, dtype=np.bool_)
    xbar_r = np.zeros((data.m, data.q))
    n_r = np.ones(data.m)
    for i, a in enumerate(data.areas):
        N_i = spec.sizes[a.area_id]
        if N_i > a.n:
            active[i] = True
            xbar_r[i] = unsampled_covariate_mean(spec, a)
            n_r[i] = N_i - a.n
    return _FiniteTerms(active, xbar_r, n_r)


def predict_finite_population(
    data: UnitDataset,
    spec: FinitePopulationSpec,
    model_kind=ModelKind.UNER,
    prior: Optional[PriorConfig] = None,
    cfg: ChainConfig = ChainConfig(),
    hooks: SamplerHooks = DEFAULT_HOOKS,
    rng=None,
) -> FinitePopulationPrediction:
    """Predict each area's finite-population mean.

    The sampler is augmented with one draw of the unsampled-unit mean per
    retained sweep; each draw of the population mean is
    (n_i ybar_i + (N_i - n_i) Ybar_r) / N_i. Fully observed areas return
    ybar_i with zero spread. NER uses the same augmentation with the
    indicator fixed at 1.
    """
    spec.check(data)
    terms = finite_terms(data, spec)
    chain = run_chain(data, model_kind, prior, cfg, hooks=hooks, finite=terms, rng=rng)
    arr = data.arrays
    sizes = np.array([spec.sizes[a] for a in data.area_ids], dtype=float)
    draws = np.empty((chain.n_draws, data.m))
    for i in range(data.m):
        if terms.active[i]:
            draws[:, i] = (arr.ni[i] * arr.ybar[i] + (sizes[i] - arr.ni[i]) * chain.ybar_r[:, i]) / sizes[i]
        else:
            draws[:, i] = arr.ybar[i]
    p_tilde = chain.u.mean(axis=0) if chain.model_kind is ModelKind.UNER else None
    summary = summarize_draws(draws, data.area_ids, p_tilde)
    return FinitePopulationPrediction(summary, chain, draws, sizes, arr.ni.copy())
