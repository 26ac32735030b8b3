import math

import numpy as np
import pytest

from gdp_testkit.baselines import (
    ClampRange,
    naive_dd_mean,
    ncllr_statistic,
    ncllr_test,
    nonprivate_llr_test,
    nonprivate_mean,
)
from gdp_testkit.distributions import Normal, StudentT, llr_vector, parse_distribution, sample
from gdp_testkit.errors import ConfigurationError
from gdp_testkit.mean import gdp_mean_auto
from gdp_testkit.privacy import NoiseSource, derive_stream

T_MIXTURE = parse_distribution("mixture(0.5:t(1),0.5:nct(1.1,0.1))")


def test_nonprivate_mean():
    assert nonprivate_mean([1, 2, 3]) == 2.0


def test_ncllr_inactive_clamp_zero_noise_is_mean_llr():
    data = sample(T_MIXTURE, 500, NoiseSource.seeded(1))
    ell = llr_vector(data, StudentT(1), T_MIXTURE).values
    assert ell.min() > -2 and ell.max() < 2
    stat = ncllr_statistic(data, StudentT(1), T_MIXTURE, ClampRange(), 1.0, NoiseSource.zero())
    assert stat == pytest.approx(ell.mean(), abs=1e-15)


def test_ncllr_zero_noise_matches_nonprivate_verdict():
    data = sample(T_MIXTURE, 400, NoiseSource.seeded(2))
    priv = ncllr_test(data, StudentT(1), T_MIXTURE, ClampRange(), 1.0, 0.05, 99,
                      NoiseSource.zero(), null_source=NoiseSource.seeded(3))
    plain = nonprivate_llr_test(data, StudentT(1), T_MIXTURE, 0.05, 99, NoiseSource.seeded(3))
    assert priv.statistic == pytest.approx(plain.statistic, abs=1e-15)
    assert np.allclose(priv.null_statistics, plain.null_statistics, rtol=0, atol=1e-15)
    assert priv.p_value == plain.p_value and priv.reject == plain.reject


def test_ncllr_active_clamp():
    data = np.array([-3.0, 0.0, 3.0])
    stat = ncllr_statistic(data, Normal(0, 1), Normal(1, 1), ClampRange(-1, 1), 1.0, NoiseSource.zero())
    # LLR = x - 1/2 -> (-3.5, -0.5, 2.5) clamped to (-1, -0.5, 1)
    assert stat == pytest.approx(-0.5 / 3)


def test_ncllr_noise_scale():
    noise = NoiseSource.scripted([1.0])
    stat = ncllr_statistic(np.zeros(4), Normal(0, 1), Normal(0, 1), ClampRange(-2, 2), 2.0, noise)
    assert stat == pytest.approx(4 / 4 / 2)


def test_clamp_range_validation():
    with pytest.raises(ConfigurationError):
        ClampRange(1.0, 1.0)


def test_naive_dd_identities():
    data = np.array([-100.0, 0.0, 1.0, 100.0, 2.0])
    est = naive_dd_mean(data, 1.0, NoiseSource.zero())
    half = math.log(5)
    assert (est.clamp_lo, est.clamp_hi) == (-half, half)
    assert est.value == pytest.approx((-half + 0 + 1 + half + half) / 5)
    assert est.noise_sd == pytest.approx(2 * half / 5)
    shifted = naive_dd_mean(data, 0.5, NoiseSource.scripted([1.0]))
    assert shifted.value - est.value == pytest.approx(2 * (2 * half / 5))


def test_naive_dd_biased_far_from_origin():
    # the fixed clamp cuts off a mean of 20 at log n
    data = sample(Normal(20, 1), 1000, NoiseSource.seeded(5))
    est = naive_dd_mean(data, 1.0, NoiseSource.seeded(6))
    assert est.value < math.log(1000) + 0.1


def test_gdp_mean_beats_naive_dd_off_centre():
    errs_gdp, errs_dd = [], []
    for r in range(100):
        data = sample(Normal(3, 1), 1000, derive_stream(4, r, "data"))
        errs_gdp.append(abs(gdp_mean_auto(data, 1.0, None, derive_stream(4, r, "g")).value - data.mean()))
        errs_dd.append(abs(naive_dd_mean(data, 1.0, derive_stream(4, r, "d")).value - data.mean()))
    assert np.median(errs_gdp) < np.median(errs_dd)


def test_nonprivate_test_type_one_error_small():
    rejections = 0
    for r in range(200):
        data = sample(StudentT(1), 200, derive_stream(9, r, "data"))
        rejections += nonprivate_llr_test(data, StudentT(1), T_MIXTURE, 0.05, 39, derive_stream(9, r, "null")).reject
    # alpha + 3 binomial standard errors
    assert rejections / 200 <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 200)


def test_nonprivate_test_dominates_ncllr_on_easy_alternative():
    null, alt = Normal(0, 1), Normal(0.3, 1)
    np_hits = nc_hits = 0
    for r in range(100):
        data = sample(alt, 200, derive_stream(10, r, "data"))
        np_hits += nonprivate_llr_test(data, null, alt, 0.05, 39, derive_stream(10, r, "n")).reject
        nc_hits += ncllr_test(data, null, alt, ClampRange(), 0.5, 0.05, 39, derive_stream(10, r, "c")).reject
    assert np_hits >= nc_hits
