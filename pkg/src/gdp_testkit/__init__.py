"""Gaussian-DP quantiles, adaptively clamped means and near-optimal private tests."""

from .baselines import ClampRange, naive_dd_mean, ncllr_test, nonprivate_llr_test, nonprivate_mean
from .distributions import (
    Family,
    Gamma,
    Logistic,
    Mixture,
    NoncentralT,
    Normal,
    StatisticVector,
    StudentT,
    llr_vector,
    log_density,
    mlr_statistic,
    parse_distribution,
    parse_family,
    sample,
)
from .errors import ConfigurationError, DataError
from .mean import DerivedMeanConfig, MeanEstimate, MeanEstParams, derive_params, gdp_mean, gdp_mean_auto
from .privacy import (
    BudgetSplit,
    NoiseSource,
    PrivacyBudget,
    compose,
    derive_stream,
    gaussian_mechanism,
    split_budget,
)
from .private_tests import (
    TestSpec,
    TestVerdict,
    mc_pvalue,
    one_sided_test,
    run_test,
    simple_test,
    two_sided_test,
)
from .quantile import QuantileConfig, QuantileResult, gdp_quant, rank_error, rank_error_bound

__version__ = "0.1.0"
