"""Gibbs samplers for the uncertain (UNER) and conventional (NER) nested error models.

Each block of the sweep is exposed as a ``draw_*`` function together with a
``*_conditional`` function returning the analytic parameters of the
distribution the block samples from. The chain runner executes the blocks in a
fixed order inside a compiled loop; see :func:`gibbs_uner`.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import (
    ConditionError,
    ConditionWarning,
    ConfigError,
    DegenerateDataError,
    DegreesOfFreedomError,
    NumericalError,
    NumericalRankError,
    ShortChainWarning,
)
from .model import (
    LatentState,
    ModelKind,
    ModelParams,
    PriorConfig,
    Strictness,
    TargetSpec,
    UnitDataset,
    estimate_sampling_variance,
    validate_conditions,
)

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64 seeded by SeedSequence(entropy)"
MIN_RETAINED = 100
OBJECTIVE_SIGMA2_PRIOR = (-0.5, 0.0)  # IG(a0, b0) form of the 1/sigma prior

_KIND_CODE = {ModelKind.UNER: K.UNER, ModelKind.NER: K.NER}


def make_rng(entropy) -> np.random.Generator:
    """PCG64 generator for a seed or a sequence of integers (replication streams)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 6000
    burnin: int = 1000
    thin: int = 1
    seed: int = 0
    init: str = "default"

    def __post_init__(self):
        if not self.iterations > self.burnin >= 0:
            raise ConfigError(
                f"need iterations > burnin >= 0, got {self.iterations}, {self.burnin}"
            )
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if self.init != "default":
            raise ConfigError(f"unknown init strategy {self.init!r}")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burnin) // self.thin


@dataclass(frozen=True)
class SamplerHooks:
    """Test-only modifications of the sampler.

    ``freeze_u`` keeps every indicator at 1. ``beta_prior_var`` and
    ``sigma2_prior`` replace the flat and 1/sigma priors by N(0, var I) and
    IG(a0, b0) surrogates. ``validate=False`` skips the propriety gate.
    """

    freeze_u: bool = False
    beta_prior_var: Optional[float] = None
    sigma2_prior: tuple = OBJECTIVE_SIGMA2_PRIOR
    validate: bool = True

    @property
    def beta_prior_prec(self) -> float:
        return 0.0 if self.beta_prior_var is None else 1.0 / self.beta_prior_var


DEFAULT_HOOKS = SamplerHooks()


@dataclass(frozen=True, eq=False)
class ChainOutput:
    """Retained draws of one chain, stored column-wise.

    ``beta`` is (S, q); ``sigma2``, ``tau2``, ``p`` are (S,); ``u`` and ``v``
    are (S, m). ``ybar_r`` holds draws of the unsampled-unit means when the
    chain was run with finite-population prediction, NaN for areas without
    unsampled units.
    """

    model_kind: ModelKind
    beta: np.ndarray
    sigma2: np.ndarray
    tau2: np.ndarray
    p: np.ndarray
    u: np.ndarray
    v: np.ndarray
    config: ChainConfig
    prior: Optional[PriorConfig]
    dataset_fingerprint: str
    rng_algorithm: str = RNG_ALGORITHM
    target: Optional[TargetSpec] = None
    ybar_r: Optional[np.ndarray] = None
    area_ids: Optional[list] = None

    def __post_init__(self):
        for name in ("beta", "sigma2", "tau2", "p", "u", "v", "ybar_r"):
            arr = getattr(self, name)
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n_draws(self) -> int:
        return self.sigma2.shape[0]

    def params_at(self, s: int) -> ModelParams:
        p = self.p[s] if self.model_kind is ModelKind.UNER else 1.0
        return ModelParams(self.beta[s], self.sigma2[s], self.tau2[s], p, self.model_kind)

    @property
    def params_draws(self) -> list:
        return [self.params_at(s) for s in range(self.n_draws)]

    @property
    def latent_draws(self) -> list:
        return [LatentState(self.u[s], self.v[s]) for s in range(self.n_draws)]

    def mu_draws(self, target: Optional[TargetSpec] = None) -> np.ndarray:
        """(S, m) draws of mu_i = c_i' beta + v_i."""
        target = target if target is not None else self.target
        return self.beta @ target.c.T + self.v

    def param_names(self) -> list:
        names = [f"beta{k}" for k in range(self.beta.shape[1])] + ["sigma2", "tau2"]
        if self.model_kind is ModelKind.UNER:
            names.append("p")
        return names

    def param_matrix(self) -> np.ndarray:
        cols = [self.beta, self.sigma2[:, None], self.tau2[:, None]]
        if self.model_kind is ModelKind.UNER:
            cols.append(self.p[:, None])
        return np.hstack(cols)


# -- block conditionals -------------------------------------------------------


def _u8(u):
    return np.ascontiguousarray(u, dtype=np.int8)


def _resid(params_beta, data):
    arr = data.arrays
    return arr.ybar - arr.xbar @ np.asarray(params_beta, dtype=float)


def v_conditional(u, params: ModelParams, data: UnitDataset):
    """Mean and variance of each v_i given (u, beta, sigma2, tau2); zeros where u_i = 0."""
    arr = data.arrays
    mean = np.empty(data.m)
    var = np.empty(data.m)
    K.v_moments(_u8(u), arr.ni, _resid(params.beta, data), params.sigma2, params.tau2, mean, var)
    return mean, var


def draw_v(u, params: ModelParams, data: UnitDataset, rng) -> np.ndarray:
    out = np.empty(data.m)
    K.sample_v(rng, _u8(u), data.arrays.ni, _resid(params.beta, data), params.sigma2, params.tau2, out)
    return out


def draw_u(params: ModelParams, data: UnitDataset, rng) -> np.ndarray:
    """Indicators drawn with v integrated out."""
    out = np.empty(data.m, dtype=np.int8)
    K.sample_u(
        rng, data.arrays.ni, _resid(params.beta, data), params.sigma2, params.tau2,
        params.effective_p, out,
    )
    return out


def p_conditional(z: int, m: int):
    if not 0 <= z <= m:
        raise ConfigError(f"need 0 <= z <= m, got z={z}, m={m}")
    return z + 0.5, m - z + 0.5


def draw_p(z: int, m: int, rng) -> float:
    return float(rng.beta(*p_conditional(z, m)))


def beta_conditional(u, params: ModelParams, data: UnitDataset, prior_prec: float = 0.0):
    """GLS mean and covariance of beta given (u, sigma2, tau2), v integrated out."""
    arr = data.arrays
    A, b = K.beta_system(
        _u8(u), arr.ni, arr.S, arr.ysum, arr.XtX, arr.Xty, params.sigma2, params.tau2, prior_prec
    )
    L, ok = K.cholesky(A)
    if not ok:
        raise NumericalRankError("X' Sigma_u^-1 X is numerically singular")
    cov = np.linalg.inv(A)
    return K.backward_sub_t(L, K.forward_sub(L, b)), 0.5 * (cov + cov.T)


def draw_beta(u, params: ModelParams, data: UnitDataset, rng, prior_prec: float = 0.0) -> np.ndarray:
    arr = data.arrays
    out = np.empty(data.q)
    ok = K.sample_beta(
        rng, _u8(u), arr.ni, arr.S, arr.ysum, arr.XtX, arr.Xty,
        params.sigma2, params.tau2, prior_prec, out,
    )
    if not ok:
        raise NumericalRankError("X' Sigma_u^-1 X is numerically singular")
    return out


def tau2_conditional(u, v, prior: Optional[PriorConfig], model_kind=ModelKind.UNER):
    """Inverse-gamma (shape, rate) of tau2 given (u, v).

    UNER switches between the improper branch (z > a) and the proper
    IG(b1, b2) branch (z <= a); NER uses shape (m - 1)/2.
    """
    model_kind = ModelKind(model_kind)
    if model_kind is ModelKind.UNER:
        if prior is None or not prior.resolved:
            raise ConfigError("UNER tau2 conditional needs a resolved PriorConfig")
        a, b1, b2 = prior.a, prior.b1, prior.b2
    else:
        a, b1, b2 = 0, 0.0, 0.0
    shape, rate = K.tau2_params(_u8(u), np.asarray(v, dtype=float), a, b1, b2, _KIND_CODE[model_kind])
    return float(shape), float(rate)


def draw_tau2(u, v, prior: Optional[PriorConfig], rng, model_kind=ModelKind.UNER) -> float:
    shape, rate = tau2_conditional(u, v, prior, model_kind)
    a = prior.a if ModelKind(model_kind) is ModelKind.UNER else 0
    if K.tau2_degenerate(_u8(u), a, _KIND_CODE[ModelKind(model_kind)], rate):
        raise NumericalError("tau2 conditional has a degenerate rate (sum u_i v_i^2 ~ 0)")
    if not shape > 0:
        raise NumericalError(f"tau2 conditional has non-positive shape {shape}")
    return float(K.inv_gamma(rng, shape, rate))


def sigma2_conditional(v, beta, data: UnitDataset, prior=OBJECTIVE_SIGMA2_PRIOR):
    """Inverse-gamma (shape, rate) of sigma2; residuals subtract v_i from every unit of area i."""
    arr = data.arrays
    a0, b0 = prior
    shape, rate = K.sigma2_params(
        np.asarray(v, dtype=float), np.asarray(beta, dtype=float), arr.y, arr.X, arr.idx, a0, b0
    )
    return float(shape), float(rate)


def draw_sigma2(v, beta, data: UnitDataset, rng) -> float:
    if data.N < 2:
        raise DegreesOfFreedomError("sigma2 conditional needs N >= 2")
    shape, rate = sigma2_conditional(v, beta, data)
    if not rate > 0:
        raise DegenerateDataError("residual sum of squares is zero")
    return float(K.inv_gamma(rng, shape, rate))


# -- chain state and runner ---------------------------------------------------


@dataclass
class GibbsState:
    """Mutable sampler state; ``scal`` holds (sigma2, tau2, p)."""

    beta: np.ndarray
    scal: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_values(cls, beta, sigma2, tau2, p, u, v) -> "GibbsState":
        return cls(
            np.array(beta, dtype=float),
            np.array([sigma2, tau2, p], dtype=float),
            _u8(u).copy(),
            np.array(v, dtype=float),
        )

    def params(self, model_kind=ModelKind.UNER) -> ModelParams:
        return ModelParams(self.beta, self.scal[0], self.scal[1], self.scal[2], model_kind)


def initial_state(data: UnitDataset) -> GibbsState:
    """Deterministic start: pooled OLS, sigma2 from V, tau2 = max(sigma2/2, 1e-4), p = 1/2, u = 1, v = 0."""
    beta = data.ols()
    try:
        sigma2 = estimate_sampling_variance(data)
    except DegreesOfFreedomError:
        arr = data.arrays
        r = arr.y - arr.X @ beta
        sigma2 = float(r @ r) / max(data.N - data.q, 1)
    sigma2 = max(sigma2, 1e-8)
    return GibbsState.from_values(
        beta, sigma2, max(sigma2 / 2.0, 1e-4), 0.5, np.ones(data.m), np.zeros(data.m)
    )


_STATUS_ERRORS = {
    K.SINGULAR_BETA: (NumericalRankError, "X' Sigma_u^-1 X is numerically singular"),
    K.DEGENERATE_TAU2: (NumericalError, "tau2 rate stayed below 1e-300 after redrawing v"),
    K.DEGENERATE_SIGMA2: (DegenerateDataError, "residual sum of squares is zero"),
}


@dataclass
class _FiniteTerms:
    active: np.ndarray
    xbar_r: np.ndarray
    n_r: np.ndarray


def advance(
    state: GibbsState,
    data: UnitDataset,
    model_kind,
    prior: Optional[PriorConfig],
    rng,
    n_sweeps: int = 1,
    hooks: SamplerHooks = DEFAULT_HOOKS,
    retain: Optional[tuple] = None,
    finite: Optional[_FiniteTerms] = None,
):
    """Run ``n_sweeps`` sweeps from ``state`` in place.

    ``retain`` is (burnin, thin, n_keep); by default nothing is stored and only
    the state moves. Returns the retained draw arrays.
    """
    model_kind = ModelKind(model_kind)
    arr = data.arrays
    if model_kind is ModelKind.UNER:
        a, b1, b2 = prior.a, prior.b1, prior.b2
    else:
        a, b1, b2 = 0, 0.0, 0.0
        state.u[:] = 1
    burnin, thin, n_keep = retain if retain is not None else (n_sweeps, 1, 0)
    m, q = data.m, data.q
    out_beta = np.empty((n_keep, q))
    out_scal = np.empty((n_keep, 3))
    out_u = np.empty((n_keep, m), dtype=np.int8)
    out_v = np.empty((n_keep, m))
    if finite is None:
        finite = _FiniteTerms(np.zeros(m, dtype=np.bool_), np.zeros((m, q)), np.ones(m))
        out_yr = np.empty((0, m))
    else:
        out_yr = np.empty((n_keep, m))
    a0, b0 = hooks.sigma2_prior
    status, sweep = K.run_sweeps(
        rng, _KIND_CODE[model_kind], n_sweeps, burnin, thin, hooks.freeze_u,
        arr.ni, arr.ybar, arr.xbar, arr.S, arr.ysum, arr.XtX, arr.Xty, arr.y, arr.X, arr.idx,
        a, float(b1), float(b2), hooks.beta_prior_prec, float(a0), float(b0),
        finite.active, finite.xbar_r, finite.n_r,
        state.beta, state.scal, state.u, state.v,
        out_beta, out_scal, out_u, out_v, out_yr,
    )
    if status != K.OK:
        exc, msg = _STATUS_ERRORS[status]
        if exc is DegenerateDataError:
            raise exc(f"{msg} (sweep {sweep})")
        raise exc(msg, sweep=sweep)
    return out_beta, out_scal, out_u, out_v, (out_yr if n_keep and out_yr.shape[0] else None)


def _check_conditions(data, prior, model_kind, hooks):
    if not hooks.validate:
        return
    if model_kind is ModelKind.NER:
        if data.m < 2:
            raise ConditionError("NER needs m >= 2", ["m >= 2 violated"])
        if data.N < 2:
            raise ConditionError("NER needs N >= 2", ["N >= 2 violated"])
        return
    report = validate_conditions(data, prior, Strictness.PROPRIETY)
    if not report.passed:
        raise ConditionError(report.message(), report.failures)
    fv = validate_conditions(data, prior, Strictness.FINITE_VARIANCE)
    if not fv.passed:
        warnings.warn(fv.message(), ConditionWarning, stacklevel=3)


def run_chain(
    data: UnitDataset,
    model_kind,
    prior: Optional[PriorConfig],
    cfg: ChainConfig,
    target: Optional[TargetSpec] = None,
    hooks: SamplerHooks = DEFAULT_HOOKS,
    finite: Optional[_FiniteTerms] = None,
    rng=None,
) -> ChainOutput:
    model_kind = ModelKind(model_kind)
    if model_kind is ModelKind.UNER:
        prior = (prior or PriorConfig()).resolve(data)
    else:
        prior = None
    _check_conditions(data, prior, model_kind, hooks)
    if target is None:
        target = TargetSpec.area_means(data)
    target.check(data)
    n_keep = cfg.n_retained
    if n_keep < MIN_RETAINED:
        warnings.warn(f"only {n_keep} retained draws (< {MIN_RETAINED})", ShortChainWarning, stacklevel=3)
    if rng is None:
        rng = make_rng(cfg.seed)
    state = initial_state(data)
    ob, osc, ou, ov, oy = advance(
        state, data, model_kind, prior, rng, cfg.iterations, hooks,
        retain=(cfg.burnin, cfg.thin, n_keep), finite=finite,
    )
    if model_kind is ModelKind.NER:
        osc[:, 2] = np.nan
    return ChainOutput(
        model_kind=model_kind,
        beta=ob,
        sigma2=osc[:, 0].copy(),
        tau2=osc[:, 1].copy(),
        p=osc[:, 2].copy(),
        u=ou,
        v=ov,
        config=cfg,
        prior=prior,
        dataset_fingerprint=data.fingerprint,
        target=target,
        ybar_r=oy,
        area_ids=data.area_ids,
    )


def gibbs_uner(
    data: UnitDataset,
    prior: Optional[PriorConfig] = None,
    target: Optional[TargetSpec] = None,
    cfg: ChainConfig = ChainConfig(),
    hooks: SamplerHooks = DEFAULT_HOOKS,
) -> ChainOutput:
    """Partially collapsed Gibbs sampler for the UNER model.

    Each sweep draws u (v integrated out), p, beta (v integrated out), then v,
    tau2 and sigma2. The order is fixed: beta is drawn marginally over v, so v
    must be refreshed before any block that conditions on it.
    """
    return run_chain(data, ModelKind.UNER, prior, cfg, target, hooks)


def gibbs_ner(
    data: UnitDataset,
    target: Optional[TargetSpec] = None,
    cfg: ChainConfig = ChainConfig(),
    hooks: SamplerHooks = DEFAULT_HOOKS,
) -> ChainOutput:
    """Gibbs sampler for the NER model under the 1/(tau sigma) prior: beta, v, tau2, sigma2."""
    return run_chain(data, ModelKind.NER, None, cfg, target, hooks)


def fit(data, model_kind, prior=None, cfg=ChainConfig(), target=None, hooks=DEFAULT_HOOKS):
    model_kind = ModelKind(model_kind)
    if model_kind is ModelKind.UNER:
        return gibbs_uner(data, prior, target, cfg, hooks)
    return gibbs_ner(data, target, cfg, hooks)
