import math

import numpy as np
import pytest
from scipy import stats

from uner.errors import ConfigError
from uner.samplers import ChainConfig, make_rng
from uner.simulation import (
    DESIGN_RATES,
    ScenarioConfig,
    derived_seed,
    draw_effects,
    draw_sample,
    gen_scenario,
    metrics_from_records,
    oracle_estimator,
    run_design_sim,
    run_model_sim,
    sample_size,
    scenario_covariates,
    srs_indices,
    stream_entropy,
    synthetic_populations,
)

QUICK = ChainConfig(600, 100)


# -- generators ---------------------------------------------------------------------


def test_s2_mixture_moments():
    v = draw_effects("S2", 10**5, make_rng(1))
    zero = np.mean(v == 0.0)
    assert abs(zero - 0.3) < 4 * math.sqrt(0.3 * 0.7 / v.size)
    assert abs(v[v != 0].var() / 0.49 - 1) < 0.02


def test_s1_has_no_zeros():
    assert np.count_nonzero(draw_effects("S1", 10**5, make_rng(2)) == 0.0) == 0


def test_s3_laplace_variance():
    v = draw_effects("S3", 10**5, make_rng(3))
    nz = v[v != 0]
    assert abs(nz.var() / 0.49 - 1) < 0.03
    assert stats.kurtosis(nz) > 1.5


def test_s4_heavy_tails():
    v = draw_effects("S4", 10**5, make_rng(4))
    nz = v[v != 0]
    assert stats.kurtosis(nz) > 1.0
    assert abs(nz.var() / 0.49 - 1) < 0.05


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        ScenarioConfig("S9", 6, 50)
    with pytest.raises(ConfigError):
        draw_effects("S9", 5, make_rng(0))


def test_covariates_fixed_across_replications():
    cfg = ScenarioConfig("S2", 6, 25)
    a, b = gen_scenario(cfg, 0), gen_scenario(cfg, 1)
    np.testing.assert_array_equal(a.data.arrays.X, b.data.arrays.X)
    assert not np.array_equal(a.data.arrays.y, b.data.arrays.y)
    np.testing.assert_array_equal(scenario_covariates(cfg), scenario_covariates(ScenarioConfig("S4", 6, 25)))
    assert a.data.q == 2 and a.data.m == 25 and a.data.N == 150


def test_truth_is_area_mean_target():
    cfg = ScenarioConfig("S3", 6, 25)
    rep = gen_scenario(cfg, 3)
    np.testing.assert_allclose(rep.mu, 1.0 + 0.5 * rep.data.arrays.xbar[:, 1] + rep.v, rtol=1e-15)


def test_seed_derivation():
    assert derived_seed(1, "S2", 0) == derived_seed(1, "S2", 0)
    assert derived_seed(1, "S2", 0) != derived_seed(1, "S2", 1)
    assert derived_seed(1, "S2", 0) != derived_seed(1, "S3", 0)
    assert 0 <= derived_seed(5, 7) < 2**64
    assert stream_entropy(3, 4, "x")[:2] == [3, 4]


# -- metrics --------------------------------------------------------------------------


def test_oracle_estimator_gives_zero_error():
    res = run_model_sim(ScenarioConfig("S2", 3, 10, reps=1), QUICK, QUICK, estimator=oracle_estimator)
    for row in res.rows:
        assert row.mse == 0.0 and row.bias == 0.0 and row.cp == 100.0


def test_metrics_recompute_and_parallel_equivalence():
    cfg = ScenarioConfig("S2", 3, 25, reps=6)
    serial = run_model_sim(cfg, QUICK, QUICK, workers=1)
    threaded = run_model_sim(cfg, QUICK, QUICK, workers=4)
    assert serial.rows == threaded.rows
    for model in ("uner", "ner"):
        recs = [r for r in serial.records if r.model == model]
        row = serial.row(model)
        assert metrics_from_records(recs) == (row.mse, row.bias, row.cp)
        assert metrics_from_records(list(reversed(recs))) == (row.mse, row.bias, row.cp)
        assert 0 <= row.cp <= 100 and row.mse >= 0 and row.bias >= 0


# -- design-based study ----------------------------------------------------------------


def test_srs_inclusion_probability():
    rng = make_rng(5)
    R = 10**5
    counts = np.zeros(10)
    for _ in range(R):
        idx = srs_indices(10, 4, rng)
        assert np.unique(idx).size == 4
        counts[idx] += 1
    freq = counts / R
    assert np.all(np.abs(freq - 0.4) < 4 * math.sqrt(0.4 * 0.6 / R))


@pytest.mark.parametrize("N,rate,n", [(25, 0.5, 13), (25, 0.3, 8), (5, 0.3, 2), (3, 0.1, 2), (20, 1.0, 20), (7, 0.5, 4)])
def test_sample_size_rounding(N, rate, n):
    assert sample_size(N, rate) == n


def test_sample_size_too_small():
    with pytest.raises(ConfigError):
        sample_size(1, 0.5)


def test_design_rates():
    assert DESIGN_RATES == (0.3, 0.5, 0.7, 0.9)


def test_synthetic_population_shape():
    pop = synthetic_populations(m=12, seed=3)
    assert pop.m == 12 and np.all(pop.sizes >= 20) and np.all(pop.sizes <= 45)
    data = draw_sample(pop, 0.5, make_rng(0))
    assert data.m == 12 and data.q == 2
    fixed = synthetic_populations(m=4, sizes=25, seed=3)
    assert np.all(fixed.sizes == 25)


def test_full_sampling_gives_zero_smse():
    pop = synthetic_populations(m=8, sizes=10, seed=2)
    res = run_design_sim(pop, 1.0, reps=2, chain=QUICK)
    for model in ("uner", "ner"):
        assert np.all(res.smse[model] == 0.0)
    assert np.all(np.isnan(res.ratio))


def test_design_sim_parallel_equivalence():
    pop = synthetic_populations(m=8, sizes=12, seed=2)
    a = run_design_sim(pop, 0.5, reps=3, chain=QUICK, workers=1)
    b = run_design_sim(pop, 0.5, reps=3, chain=QUICK, workers=3)
    for model in ("uner", "ner"):
        np.testing.assert_array_equal(a.smse[model], b.smse[model])
    assert np.all(a.n == 6)


def test_design_rate_validation():
    pop = synthetic_populations(m=6, sizes=10, seed=2)
    with pytest.raises(ConfigError):
        run_design_sim(pop, 0.0, reps=1, chain=QUICK)
