"""Closed-form posterior quantities and the marginal likelihood."""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels as K
from ..errors import DegreesOfFreedomError, DomainError
from .data import AreaData, UnitDataset
from .linalg import CompoundSymmetry, cs_solve_logdet
from .params import ModelKind, ModelParams

_LOG_2PI = math.log(2.0 * math.pi)


def area_residual(params: ModelParams, area: AreaData) -> float:
    """ybar_i - xbar_i' beta."""
    return area.ybar - float(area.xbar @ params.beta)


def posterior_prob_u(params: ModelParams, area: AreaData) -> float:
    """Posterior probability that the area carries a nonzero random effect.

    Evaluated as a logistic transform of the log-odds, so residuals of
    thousands of standard deviations neither overflow nor underflow.
    """
    r = area_residual(params, area)
    return float(K.prob_u(float(area.n), r, params.sigma2, params.tau2, params.effective_p))


def posterior_prob_u_all(params: ModelParams, data: UnitDataset) -> np.ndarray:
    arr = data.arrays
    resid = arr.ybar - arr.xbar @ params.beta
    p = params.effective_p
    return np.array(
        [K.prob_u(n, r, params.sigma2, params.tau2, p) for n, r in zip(arr.ni, resid)]
    )


def posterior_var_mu(params: ModelParams, area: AreaData) -> float:
    """Posterior variance of mu_i = c_i' beta + v_i at fixed parameters."""
    r = area_residual(params, area)
    pt = posterior_prob_u(params, area)
    return float(K.var_mu(float(area.n), r, params.sigma2, params.tau2, pt))


def posterior_mean_v(params: ModelParams, area: AreaData) -> float:
    n = area.n
    r = area_residual(params, area)
    pt = posterior_prob_u(params, area)
    return pt * n * params.tau2 * r / (params.sigma2 + n * params.tau2)


def _log_normal_cs(resid, sigma2, common):
    cs = CompoundSymmetry(resid.shape[0], sigma2, common)
    sol, logdet = cs_solve_logdet(cs, resid)
    return -0.5 * (resid.shape[0] * _LOG_2PI + logdet + float(resid @ sol))


def area_loglik(params: ModelParams, area: AreaData) -> float:
    resid = area.y - area.X @ params.beta
    s2, t2 = params.sigma2, params.tau2
    if params.model_kind is ModelKind.NER:
        return _log_normal_cs(resid, s2, t2)
    p = params.p
    if p >= 1.0:
        return _log_normal_cs(resid, s2, t2)
    if p <= 0.0:
        return _log_normal_cs(resid, s2, 0.0)
    return float(
        np.logaddexp(
            math.log(p) + _log_normal_cs(resid, s2, t2),
            math.log1p(-p) + _log_normal_cs(resid, s2, 0.0),
        )
    )


def marginal_loglik(params: ModelParams, data: UnitDataset) -> float:
    """Log-likelihood with the random effects integrated out.

    UNER areas contribute a two-component mixture (slab with common term
    tau2, spike with none); NER areas a single compound-symmetry normal.
    """
    if params.beta.shape[0] != data.q:
        raise DomainError(f"beta has length {params.beta.shape[0]}, data has q = {data.q}")
    return math.fsum(area_loglik(params, a) for a in data.areas)


def estimate_sampling_variance(data: UnitDataset) -> float:
    """Within-area residual variance estimate V.

    Responses and covariates are centred at their area means and beta is fitted
    by least squares on the centred data; the residual sum of squares is
    divided by N - m - q.
    """
    N, m, q = data.N, data.m, data.q
    df = N - m - q
    if df <= 0:
        raise DegreesOfFreedomError(f"need N > m + q, got N={N}, m={m}, q={q}")
    arr = data.arrays
    yc = arr.y - arr.ybar[arr.idx]
    Xc = arr.X - arr.xbar[arr.idx]
    beta, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
    r = yc - Xc @ beta
    return float(r @ r) / df
