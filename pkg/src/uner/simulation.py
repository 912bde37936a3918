"""Model-based and design-based Monte Carlo studies comparing UNER with NER.

Every replication draws its randomness from its own PCG64 stream, derived
from ``(base_seed, replication, tag)``, so serial and threaded runs give
identical results. Reductions run in replication order with ``math.fsum``.
"""

from __future__ import annotations

import logging
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, UnerError
from .model import ModelKind, PriorConfig, UnitDataset
from .prediction import FinitePopulationSpec, predict_finite_population, summarize_mu
from .samplers import ChainConfig, fit, make_rng

log = logging.getLogger(__name__)

SCENARIOS = ("S1", "S2", "S3", "S4")
TABLE_DESIGNS = ((3, 25), (3, 50), (6, 25), (6, 50))
TEXT_DESIGNS = ((5, 20), (5, 40), (10, 20), (10, 40))
DESIGN_RATES = (0.3, 0.5, 0.7, 0.9)
MODELS = (ModelKind.UNER, ModelKind.NER)

DESK_CHAIN = ChainConfig(iterations=2500, burnin=500)
FULL_CHAIN = ChainConfig(iterations=6000, burnin=1000)
DESK_REPS = 200
FULL_REPS = 1000
MAX_RETRIES = 3
THREADS_ENV = "UNER_THREADS"


def thread_count(workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def _tag(s: str) -> int:
    return zlib.crc32(s.encode())


def stream_entropy(base_seed: int, *keys) -> list:
    """Entropy words for a replication stream; strings are hashed with CRC-32."""
    return [int(base_seed)] + [_tag(k) if isinstance(k, str) else int(k) for k in keys]


def derived_seed(base_seed: int, *keys) -> int:
    """64-bit integer seed derived from ``(base_seed, *keys)``."""
    lo, hi = np.random.SeedSequence(stream_entropy(base_seed, *keys)).generate_state(2)
    return int(lo) | (int(hi) << 32)


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- random-effect laws -------------------------------------------------------


def draw_effects(scenario: str, size: int, rng, sd: float = 0.7, zero_prob: float = 0.3) -> np.ndarray:
    """Random effects for scenario S1 (normal) or S2-S4 (point mass at 0 mixed with normal, Laplace or t6).

    Laplace and t6 components are scaled to variance sd**2: Laplace scale
    sd / sqrt(2), t6 scale sd * sqrt(4/6).
    """
    if scenario == "S1":
        return rng.normal(0.0, sd, size)
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    nonzero = rng.random(size) >= zero_prob
    if scenario == "S2":
        slab = rng.normal(0.0, sd, size)
    elif scenario == "S3":
        slab = rng.laplace(0.0, sd / math.sqrt(2.0), size)
    else:
        slab = sd * math.sqrt(4.0 / 6.0) * rng.standard_t(6, size)
    return np.where(nonzero, slab, 0.0)


# -- model-based study --------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    n: int
    m: int
    beta0: float = 1.0
    beta1: float = 0.5
    reps: int = DESK_REPS
    base_seed: int = 20160501
    effect_sd: float = 0.7
    zero_prob: float = 0.3
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.n < 1 or self.m < 1 or self.reps < 1:
            raise ConfigError("n, m and reps must be positive")


def scenario_covariates(cfg: ScenarioConfig) -> np.ndarray:
    """(m, n) covariates from U(1, 2); depend only on (base_seed, n, m), so every scenario and replication shares them."""
    rng = make_rng(stream_entropy(cfg.base_seed, "covariates", cfg.n, cfg.m))
    return rng.uniform(1.0, 2.0, (cfg.m, cfg.n))


@dataclass(frozen=True, eq=False)
class SimReplicate:
    data: UnitDataset
    mu: np.ndarray
    v: np.ndarray


def gen_scenario(cfg: ScenarioConfig, r: int, x: Optional[np.ndarray] = None) -> SimReplicate:
    """Data for replication ``r`` with an intercept column; mu_i = beta0 + beta1 * xbar_i + v_i."""
    if x is None:
        x = scenario_covariates(cfg)
    rng = make_rng(stream_entropy(cfg.base_seed, cfg.scenario, cfg.n, cfg.m, "data", r))
    v = draw_effects(cfg.scenario, cfg.m, rng, cfg.effect_sd, cfg.zero_prob)
    eps = rng.normal(0.0, cfg.noise_sd, (cfg.m, cfg.n))
    y = cfg.beta0 + cfg.beta1 * x + v[:, None] + eps
    X = np.column_stack([np.ones(x.size), x.ravel()])
    ids = np.repeat(np.arange(cfg.m), cfg.n)
    data = UnitDataset.from_arrays(y.ravel(), X, ids.tolist())
    mu = cfg.beta0 + cfg.beta1 * x.mean(axis=1) + v
    return SimReplicate(data, mu, v)


@dataclass(frozen=True, eq=False)
class ReplicationRecord:
    r: int
    model: str
    estimate: np.ndarray
    truth: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    attempts: int = 1


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    n: int
    m: int
    model: str
    mse: float
    bias: float
    cp: float
    reps: int


def metrics_from_records(records: Sequence[ReplicationRecord]) -> tuple:
    """(mse, bias, cp) over all areas and replications; cp is a percentage."""
    records = sorted(records, key=lambda rec: rec.r)
    count = sum(rec.truth.shape[0] for rec in records)
    if count == 0:
        raise ValueError("no replication records")
    err = [rec.estimate - rec.truth for rec in records]
    mse = math.fsum(math.fsum(e * e) for e in err) / count
    bias = math.fsum(math.fsum(np.abs(e)) for e in err) / count
    hits = sum(
        int(np.count_nonzero((rec.ci_lo <= rec.truth) & (rec.truth <= rec.ci_hi))) for rec in records
    )
    return mse, bias, 100.0 * hits / count


Estimator = Callable[..., tuple]


def bayes_estimator(data: UnitDataset, model_kind, cfg: ChainConfig, prior: Optional[PriorConfig], truth=None):
    """Posterior mean and equal-tailed 95% interval of mu_i (c_i = area covariate means)."""
    chain = fit(data, model_kind, prior, cfg)
    s = summarize_mu(chain)
    return s.point, s.ci_lo, s.ci_hi


def oracle_estimator(data, model_kind, cfg, prior, truth=None):
    """Test hook: returns the true values with a degenerate interval."""
    return truth.copy(), truth.copy(), truth.copy()


def _fit_with_retries(estimator, data, model, chain_cfg, prior, truth, base_seed, keys):
    for attempt in range(MAX_RETRIES + 1):
        cfg = replace(chain_cfg, seed=derived_seed(base_seed, *keys, model.value, "chain", attempt))
        try:
            return estimator(data, model, cfg, prior, truth=truth), attempt + 1
        except UnerError as exc:
            log.warning("replication %s model %s attempt %d failed: %s", keys, model.value, attempt, exc)
            last = exc
    raise UnerError(f"replication {keys} failed after {MAX_RETRIES} retries") from last


@dataclass(frozen=True, eq=False)
class ModelSimResult:
    config: ScenarioConfig
    rows: list
    records: list

    def row(self, model) -> MetricsRow:
        model = ModelKind(model).value
        return next(r for r in self.rows if r.model == model)


def run_model_sim(
    cfg: ScenarioConfig,
    uner_chain: ChainConfig = DESK_CHAIN,
    ner_chain: ChainConfig = DESK_CHAIN,
    prior: PriorConfig = PriorConfig(a=5),
    estimator: Estimator = bayes_estimator,
    workers: Optional[int] = None,
) -> ModelSimResult:
    """Fit both models to ``cfg.reps`` generated datasets and tabulate MSE, absolute bias and coverage."""
    x = scenario_covariates(cfg)
    chains = {ModelKind.UNER: uner_chain, ModelKind.NER: ner_chain}

    def one(r):
        rep = gen_scenario(cfg, r, x)
        out = []
        for model in MODELS:
            (est, lo, hi), attempts = _fit_with_retries(
                estimator, rep.data, model, chains[model],
                prior if model is ModelKind.UNER else None, rep.mu,
                cfg.base_seed, (cfg.scenario, cfg.n, cfg.m, r),
            )
            out.append(ReplicationRecord(r, model.value, est, rep.mu, lo, hi, attempts))
        return out

    records = [rec for recs in _pmap(one, range(cfg.reps), thread_count(workers)) for rec in recs]
    rows = []
    for model in MODELS:
        mse, bias, cp = metrics_from_records([r for r in records if r.model == model.value])
        rows.append(MetricsRow(cfg.scenario, cfg.n, cfg.m, model.value, mse, bias, cp, cfg.reps))
    return ModelSimResult(cfg, rows, records)


# -- design-based study -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FinitePopulation:
    """Fully enumerated populations: ``Y[i]`` (N_i,) and ``X[i]`` (N_i, q) per area."""

    area_ids: list
    Y: list
    X: list

    @property
    def m(self) -> int:
        return len(self.Y)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([y.shape[0] for y in self.Y])

    @property
    def true_means(self) -> np.ndarray:
        return np.array([np.mean(y) for y in self.Y])

    def spec(self) -> FinitePopulationSpec:
        return FinitePopulationSpec(
            {a: y.shape[0] for a, y in zip(self.area_ids, self.Y)},
            {a: x.mean(axis=0) for a, x in zip(self.area_ids, self.X)},
        )


def synthetic_populations(
    m: int = 30,
    sizes=None,
    scenario: str = "S2",
    seed: int = 7,
    beta=(1.0, 0.5),
    effect_sd: float = 0.7,
    noise_sd: float = 1.0,
) -> FinitePopulation:
    """Populations from the nested error model with an intercept and one U(1, 2) covariate.

    ``sizes`` defaults to 19 + Geometric(0.2) clipped to [20, 45], which
    centres most populations in the mid twenties.
    """
    rng = make_rng(stream_entropy(seed, "population", scenario, m))
    if sizes is None:
        sizes = np.clip(19 + rng.geometric(0.2, m), 20, 45)
    sizes = np.broadcast_to(np.asarray(sizes, dtype=int), (m,))
    v = draw_effects(scenario, m, rng, effect_sd)
    Y, X = [], []
    for i in range(m):
        x = rng.uniform(1.0, 2.0, sizes[i])
        Xi = np.column_stack([np.ones(sizes[i]), x])
        Y.append(Xi @ np.asarray(beta) + v[i] + rng.normal(0.0, noise_sd, sizes[i]))
        X.append(Xi)
    return FinitePopulation(list(range(m)), Y, X)


def sample_size(N_i: int, rate: float) -> int:
    """Nearest integer to N_i * rate (halves away from zero), clamped to [2, N_i]."""
    n = int(math.floor(N_i * rate + 0.5))
    n = min(max(n, 2), N_i)
    if n < 2:
        raise ConfigError(f"population of size {N_i} cannot give a sample of at least 2")
    return n


def srs_indices(N_i: int, n_i: int, rng) -> np.ndarray:
    """Simple random sample without replacement, returned in population order."""
    return np.sort(rng.choice(N_i, size=n_i, replace=False))


def draw_sample(pop: FinitePopulation, rate: float, rng) -> UnitDataset:
    ys, Xs, ids = [], [], []
    for a, Y, X in zip(pop.area_ids, pop.Y, pop.X):
        idx = srs_indices(Y.shape[0], sample_size(Y.shape[0], rate), rng)
        ys.append(Y[idx])
        Xs.append(X[idx])
        ids.extend([a] * idx.shape[0])
    return UnitDataset.from_arrays(np.concatenate(ys), np.vstack(Xs), ids)


@dataclass(frozen=True, eq=False)
class DesignSimResult:
    rate: float
    area_ids: list
    sizes: np.ndarray
    n: np.ndarray
    smse: dict  # model -> (m,) root mean squared error per area
    coverage: dict  # model -> percentage over areas and replications
    records: list

    @property
    def ratio(self) -> np.ndarray:
        """SMSE_UNER / SMSE_NER per area; NaN where both are zero."""
        u, n = self.smse["uner"], self.smse["ner"]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where((u == 0) & (n == 0), np.nan, u / n)


def smse_from_records(records: Sequence[ReplicationRecord]) -> np.ndarray:
    records = sorted(records, key=lambda rec: rec.r)
    m = records[0].truth.shape[0]
    R = len(records)
    return np.array(
        [math.sqrt(math.fsum((rec.estimate[i] - rec.truth[i]) ** 2 for rec in records) / R) for i in range(m)]
    )


def run_design_sim(
    pop: FinitePopulation,
    rate: float,
    reps: int = DESK_REPS,
    chain: ChainConfig = DESK_CHAIN,
    prior: PriorConfig = PriorConfig(a=5),
    base_seed: int = 11,
    workers: Optional[int] = None,
) -> DesignSimResult:
    """Repeated SRS within each population; both models predict the finite-population means."""
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"sampling rate must lie in (0, 1], got {rate}")
    truth = pop.true_means
    spec = pop.spec()
    n = np.array([sample_size(N, rate) for N in pop.sizes])
    rate_key = int(round(rate * 10**6))

    def one(r):
        rng = make_rng(stream_entropy(base_seed, "design", rate_key, r))
        data = draw_sample(pop, rate, rng)
        out = []
        for model in MODELS:
            def estimator(d, kind, cfg, pr, truth=None):
                s = predict_finite_population(d, spec, kind, pr, cfg).summary
                return s.point, s.ci_lo, s.ci_hi

            (est, lo, hi), attempts = _fit_with_retries(
                estimator, data, model, chain, prior if model is ModelKind.UNER else None,
                truth, base_seed, ("design", rate_key, r),
            )
            out.append(ReplicationRecord(r, model.value, est, truth, lo, hi, attempts))
        return out

    records = [rec for recs in _pmap(one, range(reps), thread_count(workers)) for rec in recs]
    smse, coverage = {}, {}
    for model in MODELS:
        recs = [r for r in records if r.model == model.value]
        smse[model.value] = smse_from_records(recs)
        coverage[model.value] = metrics_from_records(recs)[2]
    return DesignSimResult(rate, list(pop.area_ids), pop.sizes, n, smse, coverage, records)
