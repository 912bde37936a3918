import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from uner.errors import DataError, DegreesOfFreedomError, DomainError
from uner.model import (
    AreaData,
    CompoundSymmetry,
    LatentState,
    ModelKind,
    ModelParams,
    PriorConfig,
    Strictness,
    UnitDataset,
    check_counts,
    cs_solve_logdet,
    estimate_sampling_variance,
    marginal_loglik,
    posterior_prob_u,
    posterior_var_mu,
    validate_conditions,
)

from conftest import area_with_residual, random_dataset


# -- oracles ------------------------------------------------------------------


def dense_solve_logdet(n, s2, c, rhs):
    A = s2 * np.eye(n) + c * np.ones((n, n))
    sign, logdet = np.linalg.slogdet(A)
    assert sign > 0
    return np.linalg.solve(A, rhs), logdet


def quadrature_posterior(n, resid, s2, t2, p):
    """Posterior P(u=1) and Var(v) by integrating the slab over v numerically.

    Only ybar enters the likelihood of v; the spike term is the likelihood at
    v = 0, used as the reference so the slab integral is a ratio to it.
    """
    prec = n / s2

    def log_g(v):
        return -0.5 * prec * ((resid - v) ** 2 - resid**2) - 0.5 * v * v / t2 - 0.5 * math.log(2 * math.pi * t2)

    lo_r, hi_r = min(0.0, resid), max(0.0, resid)
    mode = optimize.minimize_scalar(lambda v: -log_g(v), bounds=(lo_r - 1, hi_r + 1), method="bounded",
                                    options={"xatol": 1e-12}).x
    shift = log_g(mode)

    def g(v, k):
        return v**k * math.exp(log_g(v) - shift)

    w = min(math.sqrt(s2 / n), math.sqrt(t2))
    lo, hi = mode - 60 * w, mode + 60 * w
    opts = dict(points=[mode], epsabs=0.0, epsrel=1e-13, limit=500)
    i0 = integrate.quad(g, lo, hi, args=(0,), **opts)[0]
    i1 = integrate.quad(g, lo, hi, args=(1,), **opts)[0]
    i2 = integrate.quad(g, lo, hi, args=(2,), **opts)[0]
    log_odds = math.log(p) - math.log1p(-p) + math.log(i0) + shift
    pt = 1.0 / (1.0 + math.exp(-log_odds)) if log_odds > -700 else 0.0
    e1, e2 = i1 / i0, i2 / i0
    return pt, pt * e2 - (pt * e1) ** 2


def dense_area_loglik(area, params):
    r = area.y - area.X @ params.beta
    n = area.n
    slab = stats.multivariate_normal(np.zeros(n), params.sigma2 * np.eye(n) + params.tau2 * np.ones((n, n)))
    spike = stats.multivariate_normal(np.zeros(n), params.sigma2 * np.eye(n))
    if params.model_kind is ModelKind.NER:
        return slab.logpdf(r)
    return math.log(params.p * slab.pdf(r) + (1 - params.p) * spike.pdf(r))


# -- compound symmetry ----------------------------------------------------------


def test_cs_identity_block():
    sol, logdet = cs_solve_logdet(CompoundSymmetry(2, 1.0, 0.0), np.array([3.0, 4.0]))
    np.testing.assert_array_equal(sol, [3.0, 4.0])
    assert logdet == 0.0


def test_cs_logdet_small():
    _, logdet = cs_solve_logdet(CompoundSymmetry(3, 1.0, 1.0), np.zeros(3))
    assert logdet == pytest.approx(math.log(4.0), abs=1e-15)


def test_cs_matches_dense_n5(rng):
    rhs = rng.normal(size=5)
    sol, logdet = cs_solve_logdet(CompoundSymmetry(5, 0.7, 0.3), rhs)
    ref_sol, ref_logdet = dense_solve_logdet(5, 0.7, 0.3, rhs)
    np.testing.assert_allclose(sol, ref_sol, rtol=1e-10, atol=0)
    assert logdet == pytest.approx(ref_logdet, rel=1e-10)


def test_cs_matches_dense_random_cases(rng):
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        s2 = float(np.exp(rng.uniform(np.log(1e-2), np.log(10))))
        c = float(np.exp(rng.uniform(np.log(1e-3), np.log(10)))) if rng.uniform() > 0.1 else 0.0
        rhs = rng.normal(size=(n, 3))
        sol, logdet = cs_solve_logdet(CompoundSymmetry(n, s2, c), rhs)
        ref_sol, ref_logdet = dense_solve_logdet(n, s2, c, rhs)
        worst = max(worst, np.max(np.abs(sol - ref_sol)) / np.max(np.abs(ref_sol)))
        assert logdet == pytest.approx(ref_logdet, rel=1e-10, abs=1e-12)
    assert worst < 1e-10


def test_cs_rejects_bad_variance():
    with pytest.raises(DomainError):
        CompoundSymmetry(3, 0.0, 1.0)
    with pytest.raises(DomainError):
        CompoundSymmetry(3, 1.0, -0.1)
    with pytest.raises(DomainError):
        cs_solve_logdet(CompoundSymmetry(3, 1.0, 0.0), np.zeros(4))


# -- posterior indicator probability and variance -------------------------------


def _params(s2, t2, p, kind=ModelKind.UNER):
    return ModelParams(np.zeros(1), s2, t2, p, kind)


def test_prob_u_endpoints():
    area = area_with_residual(5, 0.8)
    assert posterior_prob_u(_params(1.0, 0.49, 1.0), area) == 1.0
    assert posterior_prob_u(_params(1.0, 0.49, 0.0), area) == 0.0


def test_prob_u_small_tau2_returns_prior():
    area = area_with_residual(5, 0.8)
    assert abs(posterior_prob_u(_params(1.0, 1e-12, 0.3), area) - 0.3) < 1e-6


def test_prob_u_generic_matches_quadrature():
    area = area_with_residual(5, 0.8)
    pt, var = quadrature_posterior(5, 0.8, 1.0, 0.49, 0.5)
    params = _params(1.0, 0.49, 0.5)
    assert posterior_prob_u(params, area) == pytest.approx(pt, abs=1e-8)
    assert posterior_var_mu(params, area) == pytest.approx(var, rel=1e-8)


def quadrature_grid(seed=2024, size=100):
    rng = np.random.default_rng(seed)
    for _ in range(size):
        n = int(rng.integers(1, 31))
        s2 = float(rng.uniform(0.1, 5.0))
        t2 = float(rng.uniform(0.01, 5.0))
        p = float(rng.uniform(0.01, 0.99))
        resid = float(rng.uniform(-4, 4) * math.sqrt(s2 / n + t2))
        yield n, resid, s2, t2, p


def test_prob_u_and_var_mu_quadrature_grid():
    for n, resid, s2, t2, p in quadrature_grid():
        area = area_with_residual(n, resid)
        pt, var = quadrature_posterior(n, resid, s2, t2, p)
        params = _params(s2, t2, p)
        assert posterior_prob_u(params, area) == pytest.approx(pt, abs=1e-8)
        assert posterior_var_mu(params, area) == pytest.approx(var, rel=1e-8, abs=1e-14)


def test_var_mu_reduces_to_shrinkage_variance():
    area = area_with_residual(6, 1.3)
    v = posterior_var_mu(_params(0.8, 0.4, 1.0), area)
    assert v == pytest.approx(0.8 * 0.4 / (0.8 + 6 * 0.4), rel=1e-14)
    assert posterior_var_mu(_params(0.8, 0.4, 0.0), area) == 0.0


def test_prob_u_large_residual():
    area = area_with_residual(4, 1000.0)
    assert posterior_prob_u(_params(1.0, 0.5, 0.3), area) > 1 - 1e-9
    # thousands of standard deviations: still finite and in [0, 1]
    for r in (1e3, -1e3, 1e4):
        area = area_with_residual(50, r * math.sqrt(1.0 / 50 + 1e-3))
        pt = posterior_prob_u(_params(1.0, 1e-3, 0.01), area)
        assert 0.0 <= pt <= 1.0 and math.isfinite(posterior_var_mu(_params(1.0, 1e-3, 0.01), area))


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 40),
    s2=st.floats(0.05, 10),
    t2=st.floats(1e-3, 10),
    p1=st.floats(0.0, 1.0),
    p2=st.floats(0.0, 1.0),
    r1=st.floats(-20, 20),
    r2=st.floats(-20, 20),
)
def test_prob_u_monotone(n, s2, t2, p1, p2, r1, r2):
    lo_p, hi_p = sorted((p1, p2))
    area = area_with_residual(n, r1)
    assert posterior_prob_u(_params(s2, t2, lo_p), area) <= posterior_prob_u(_params(s2, t2, hi_p), area)
    small, large = sorted((r1, r2), key=abs)
    p = 0.5 * (p1 + p2)
    assert posterior_prob_u(_params(s2, t2, p), area_with_residual(n, small)) <= posterior_prob_u(
        _params(s2, t2, p), area_with_residual(n, large)
    )
    assert posterior_var_mu(_params(s2, t2, p), area) >= 0.0


# -- marginal likelihood ------------------------------------------------------------


def test_loglik_degenerate_mixtures(rng):
    data = random_dataset(rng, m=6, n=4, q=2)
    beta = np.array([0.9, 0.6])
    ner = marginal_loglik(ModelParams(beta, 1.1, 0.4, 1.0, ModelKind.NER), data)
    assert marginal_loglik(ModelParams(beta, 1.1, 0.4, 1.0), data) == pytest.approx(ner, rel=1e-12)
    arr = data.arrays
    iid = float(np.sum(stats.norm.logpdf(arr.y, arr.X @ beta, math.sqrt(1.1))))
    assert marginal_loglik(ModelParams(beta, 1.1, 0.4, 0.0), data) == pytest.approx(iid, rel=1e-12)


def test_loglik_single_area_dense():
    area = AreaData("a", np.array([1.3, 0.2]), np.array([[1.0], [1.0]]))
    data = UnitDataset((area,))
    for params in (
        ModelParams(np.array([0.4]), 0.9, 0.6, 0.35),
        ModelParams(np.array([0.4]), 0.9, 0.6, 1.0, ModelKind.NER),
    ):
        assert marginal_loglik(params, data) == pytest.approx(dense_area_loglik(area, params), rel=1e-10)


def test_loglik_beta_length_checked(rng):
    data = random_dataset(rng, m=3, n=2, q=2)
    with pytest.raises(DomainError):
        marginal_loglik(ModelParams(np.zeros(3), 1.0, 1.0, 0.5), data)


# -- sampling variance estimate ----------------------------------------------------


def _null_dataset(rng, m=50, n=6):
    x = rng.uniform(1, 2, (m, n))
    y = 1.0 + 0.5 * x + rng.normal(0, 1, (m, n))
    X = np.column_stack([np.ones(m * n), x.ravel()])
    return UnitDataset.from_arrays(y.ravel(), X, np.repeat(np.arange(m), n))


def test_sampling_variance_monte_carlo():
    # With the N - m - q divisor and q = 2, the centred residual sum of squares
    # is sigma2 * chi2(N - m - 1); compare the hit rate of |V - 1| < 0.15 with it.
    hits, reps = 0, 400
    for seed in range(reps):
        hits += abs(estimate_sampling_variance(_null_dataset(np.random.default_rng(seed))) - 1.0) < 0.15
    df = 300 - 50 - 2
    chi = stats.chi2(300 - 50 - 1)
    prob = chi.cdf(1.15 * df) - chi.cdf(0.85 * df)
    se = math.sqrt(prob * (1 - prob) / reps)
    assert abs(hits / reps - prob) < 4 * se
    assert prob > 0.85


def test_sampling_variance_exact_fit_is_zero():
    m, n = 5, 4
    x = np.arange(m * n, dtype=float) % 7
    ids = np.repeat(np.arange(m), n)
    y = 2.0 * x + np.arange(m)[ids] * 3.0
    X = np.column_stack([np.ones(m * n), x])
    assert estimate_sampling_variance(UnitDataset.from_arrays(y, X, ids)) == pytest.approx(0.0, abs=1e-20)


def test_sampling_variance_needs_df():
    data = UnitDataset.from_arrays(np.arange(3.0), np.ones((3, 1)), [0, 0, 1])
    with pytest.raises(DegreesOfFreedomError):
        estimate_sampling_variance(data)


# -- propriety conditions ---------------------------------------------------------------


@pytest.mark.parametrize(
    "N,q,m,a,proper,finite",
    [
        (10, 2, 8, 5, True, True),
        (5, 3, 6, 5, False, False),
        (100, 4, 30, 5, True, True),
        (8, 2, 8, 5, True, False),
        (100, 2, 5, 5, False, False),
        (100, 2, 30, 3, True, False),
    ],
)
def test_check_counts(N, q, m, a, proper, finite):
    assert check_counts(N, q, m, a, Strictness.PROPRIETY).passed is proper
    assert check_counts(N, q, m, a, Strictness.FINITE_VARIANCE).passed is finite


def test_check_counts_names_inequality():
    rep = check_counts(5, 3, 6, 5)
    assert not rep and rep.failures == ("N > q + 2 violated (N=5, q+2=5)",)
    assert check_counts(100, 2, 4, 0).failures == ("a >= 1 violated (a=0)",)
    assert check_counts(100, 2, 5, 5).failures == ("m > a violated (m=5, a=5)",)


def test_validate_conditions_on_dataset(rng):
    data = random_dataset(rng, m=8, n=2, q=2)
    assert validate_conditions(data, PriorConfig(a=5), Strictness.FINITE_VARIANCE).passed
    assert not validate_conditions(data, PriorConfig(a=8)).passed


# -- domain types ----------------------------------------------------------------------------


def test_params_validation():
    with pytest.raises(DomainError):
        ModelParams(np.zeros(1), 0.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        ModelParams(np.zeros(1), 1.0, -1.0, 0.5)
    with pytest.raises(DomainError):
        ModelParams(np.zeros(1), 1.0, 1.0, 1.5)


def test_latent_state_coupling():
    s = LatentState(np.array([1, 0, 1]), np.array([0.3, 0.0, -0.2]))
    assert s.z == 2
    with pytest.raises(DomainError):
        LatentState(np.array([1, 0]), np.array([0.3, 0.1]))


def test_prior_config():
    assert PriorConfig().auto_hyper
    pc = PriorConfig.from_variance(0.031)
    assert (pc.b1, pc.b2) == pytest.approx((2.031, 0.031 * 1.031))
    with pytest.raises(ValueError):
        PriorConfig(a=5, b1=2.5, b2=1.0)
    with pytest.raises(ValueError):
        PriorConfig(a=0)


def test_dataset_validation():
    with pytest.raises(DataError):
        UnitDataset.from_arrays(np.arange(4.0), np.ones((4, 2)), [0, 0, 1, 1])
    a = AreaData(0, [1.0, 2.0], [[1.0], [3.0]])
    assert a.ybar == 1.5 and a.xbar[0] == 2.0
    with pytest.raises(DataError):
        UnitDataset((a, a))
    with pytest.raises(DataError):
        AreaData(0, [1.0, np.nan], [[1.0], [3.0]])


def test_dataset_grouping_ungrouped_rows():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    X = np.array([[1.0], [2.0], [3.0], [5.0]])
    data = UnitDataset.from_arrays(y, X, ["b", "a", "b", "a"])
    assert data.area_ids == ["b", "a"]
    np.testing.assert_array_equal(data.areas[0].y, [1.0, 3.0])
    assert data.N == 4 and data.m == 2 and data.q == 1
