import dataclasses
import math

import numpy as np
import pytest

from gdp_testkit.distributions import Normal, sample
from gdp_testkit.errors import ConfigurationError
from gdp_testkit.mean import MeanEstParams, derive_params, gdp_mean, gdp_mean_auto
from gdp_testkit.privacy import NoiseSource, compose, derive_stream
from gdp_testkit.quantile import rank_error_bound

from oracles import clamped_mean_reference


def test_derived_schedule_at_ten_thousand():
    cfg = derive_params(10_000, 1.0)
    log_n = math.log(10_000)
    half = log_n**1.1
    assert cfg.a == pytest.approx(-half) and cfg.b == pytest.approx(half)
    assert cfg.steps == math.ceil(math.log2(2 * half * 10_000**2.5)) == 38
    assert cfg.split.eps_q == pytest.approx(1 / math.sqrt(log_n), rel=1e-12)
    assert cfg.tau == pytest.approx(math.sqrt(2 * 38 * (math.log(38) + 0.5 * log_n)) / cfg.split.eps_q, rel=1e-12)
    assert cfg.tau == pytest.approx(75.96, abs=0.01)
    assert cfg.q_l == pytest.approx((cfg.tau + 2) / 10_000)
    assert cfg.q_u == pytest.approx(1 - (cfg.tau + 1) / 10_000)
    assert not cfg.trim_fallback_applied


def test_tau_matches_quantile_bound_at_derived_beta():
    cfg = derive_params(5000, 2.0)
    assert cfg.beta == pytest.approx(5000**-0.5)
    assert cfg.tau == pytest.approx(rank_error_bound(cfg.steps, cfg.split.eps_q, cfg.beta), rel=1e-12)


def test_trim_fallback_small_sample():
    cfg = derive_params(100, 0.5)
    assert cfg.trim_fallback_applied
    assert (cfg.q_l, cfg.q_u) == (0.25, 0.75)


def test_prior_range_shifts_search_interval():
    cfg = derive_params(1000, 1.0, MeanEstParams(prior_range=(2.0, 4.0)))
    half = math.log(1000) ** 1.1
    assert cfg.a == pytest.approx(2 - half) and cfg.b == pytest.approx(4 + half)


@pytest.mark.parametrize("kw", [dict(v=0), dict(p=1.0), dict(eta=2.0), dict(k=0), dict(k=1.5),
                                dict(prior_range=(3.0, 1.0))])
def test_invalid_params(kw):
    with pytest.raises(ConfigurationError):
        MeanEstParams(**kw)


def test_tiny_samples_rejected():
    with pytest.raises(ConfigurationError):
        derive_params(2, 1.0)


def test_zero_noise_matches_deterministic_clamped_mean():
    data = np.arange(1, 101, dtype=float)
    cfg = dataclasses.replace(derive_params(100, 1.0), a=0.0, b=128.0, steps=12, q_l=0.05, q_u=0.95)
    est = gdp_mean(data, cfg, NoiseSource.zero())
    expected, lo, hi = clamped_mean_reference(data, cfg)
    assert (est.clamp_lo, est.clamp_hi) == (lo, hi)
    assert est.value == pytest.approx(expected, abs=1e-12)
    # the bisection lands within one bin of the 5th / 95th order statistics
    assert abs(lo - 5) <= cfg.b / 2**12 + 1 and abs(hi - 95) <= cfg.b / 2**12 + 1


def test_zero_noise_consistency_over_many_datasets():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        data = rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 3), size=int(rng.integers(50, 400)))
        cfg = derive_params(data.size, 1.0)
        est = gdp_mean(data, cfg, NoiseSource.zero())
        expected, _, _ = clamped_mean_reference(data, cfg)
        assert est.value == pytest.approx(expected, abs=1e-12)


def test_degenerate_constant_data():
    data = np.full(200, 0.7)
    est = gdp_mean_auto(data, 1.0, None, NoiseSource.zero())
    assert est.clamp_lo == est.clamp_hi
    assert abs(est.clamp_lo - 0.7) <= est.config.quantile_config("lower").bin_width
    assert est.value == pytest.approx(est.clamp_lo, rel=1e-15)
    assert est.noise_sd == 0


def test_budget_audit_composes_to_total():
    data = sample(Normal(3, 1), 2000, NoiseSource.seeded(1))
    for eps in (0.3, 1.0, 4.0):
        est = gdp_mean_auto(data, eps, None, NoiseSource.seeded(2))
        assert [name for name, _ in est.budget_calls] == ["quantile-lower", "quantile-upper", "mean-noise"]
        assert compose([e for _, e in est.budget_calls]).epsilon == pytest.approx(eps, rel=1e-12)
        assert est.budget_spent.epsilon == pytest.approx(eps, rel=1e-12)


def test_noise_sd_matches_clamp_width():
    data = sample(Normal(0, 1), 1000, NoiseSource.seeded(3))
    est = gdp_mean_auto(data, 1.0, None, NoiseSource.seeded(4))
    width = est.clamp_hi - est.clamp_lo
    assert est.noise_sd == pytest.approx(width / (1000 * est.config.split.eps_m), rel=1e-12)


def test_deterministic_given_seed():
    data = sample(Normal(3, 1), 500, NoiseSource.seeded(5))
    first = gdp_mean_auto(data, 1.0, None, derive_stream(9, 0, "m")).value
    second = gdp_mean_auto(data, 1.0, None, derive_stream(9, 0, "m")).value
    other = gdp_mean_auto(data, 1.0, None, derive_stream(9, 1, "m")).value
    assert first == second and first != other


def test_data_size_must_match_config():
    with pytest.raises(ConfigurationError):
        gdp_mean(np.zeros(10), derive_params(11, 1.0), NoiseSource.zero())


def test_large_budget_error_bounded_by_rank_slack():
    # as eps grows the only error left is the clamping bias, at most (max-min)(2 tau + 4)/n
    for seed in range(20):
        data = sample(Normal(0, 1), 2000, NoiseSource.seeded(seed))
        est = gdp_mean_auto(data, 1e6, None, NoiseSource.seeded(1000 + seed))
        tau = est.config.tau
        bound = (data.max() - data.min()) * (2 * tau + 4) / data.size
        assert abs(est.value - data.mean()) <= bound


def test_median_error_regression_large_n():
    n, reps = 100_000, 30
    cfg = derive_params(n, 1.0)
    errors = []
    for r in range(reps):
        data = sample(Normal(3, 1), n, derive_stream(77, r, "data"))
        errors.append(abs(gdp_mean(data, cfg, derive_stream(77, r, "mech")).value - data.mean()))
    log_n = math.log(n)
    bound = 5 * log_n**1.5 * math.sqrt(cfg.steps * math.log(cfg.steps)) / n
    assert np.median(errors) <= bound


def test_prior_range_does_not_hurt():
    n, reps = 1000, 500
    none_err, prior_err = [], []
    prior = MeanEstParams(prior_range=(2.0, 4.0))
    for r in range(reps):
        data = sample(Normal(3, 1), n, derive_stream(31, r, "data"))
        none_err.append(abs(gdp_mean_auto(data, 1.0, None, derive_stream(31, r, "a")).value - 3))
        prior_err.append(abs(gdp_mean_auto(data, 1.0, prior, derive_stream(31, r, "b")).value - 3))
    assert np.median(prior_err) <= 1.1 * np.median(none_err)
