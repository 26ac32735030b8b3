"""Comparator mechanisms: fixed-clamp noisy LLR test, Naive-DD mean, non-private references."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Distribution, as_sample, llr_vector
from .errors import ConfigurationError
from .mean import MeanEstimate
from .privacy import NoiseSource, PrivacyBudget, gaussian_mechanism, gaussian_sd
from .private_tests import calibrated_verdict, check_calibration, simulate_null


@dataclass(frozen=True)
class ClampRange:
    lo: float = -2.0
    hi: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ConfigurationError(f"clamp range needs finite lo < hi, got [{self.lo}, {self.hi}]")


def ncllr_statistic(data, null: Distribution, alt: Distribution, clamp: ClampRange,
                    eps: PrivacyBudget | float, noise: NoiseSource) -> float:
    """Mean of the LLR clamped to [lo, hi] plus noise for sensitivity (hi - lo)/n."""
    ell = llr_vector(data, null, alt).values
    n = ell.size
    clamped = float(np.mean(np.clip(ell, clamp.lo, clamp.hi)))
    return gaussian_mechanism(clamped, (clamp.hi - clamp.lo) / n, eps, noise)


def ncllr_test(
    data,
    null: Distribution,
    alt: Distribution,
    clamp: ClampRange,
    eps: PrivacyBudget | float,
    alpha: float,
    mc_reps: int,
    noise: NoiseSource,
    *,
    null_source: NoiseSource | None = None,
):
    x = as_sample(data)
    eps = eps if isinstance(eps, PrivacyBudget) else PrivacyBudget(eps)
    check_calibration(alpha, mc_reps)

    def stat(sample_x, stream):
        return ncllr_statistic(sample_x, null, alt, clamp, eps, stream)

    observed = stat(x, noise.child("observed"))
    nulls = simulate_null(stat, null, x.size, mc_reps, noise, null_source)
    return calibrated_verdict(observed, nulls, alpha, budget=eps, method="ncllr")


def naive_dd_mean(data, eps: PrivacyBudget | float, noise: NoiseSource) -> MeanEstimate:
    """Mean clamped to [-log n, log n] plus noise for sensitivity 2 log(n)/n.

    The clamp is centred at 0 and grows with n but ignores the data.
    """
    x = as_sample(data)
    n = x.size
    if n < 2:
        raise ConfigurationError("naive_dd_mean needs n >= 2")
    eps = eps.epsilon if isinstance(eps, PrivacyBudget) else PrivacyBudget(eps).epsilon
    half = math.log(n)
    sensitivity = 2 * half / n
    value = gaussian_mechanism(float(np.mean(np.clip(x, -half, half))), sensitivity, eps, noise)
    return MeanEstimate(
        value=value,
        clamp_lo=-half,
        clamp_hi=half,
        noise_sd=gaussian_sd(sensitivity, eps),
        config=None,
        budget_calls=(("mean-noise", eps),),
    )


def nonprivate_mean(data) -> float:
    return float(np.mean(as_sample(data)))


def nonprivate_llr_test(data, null: Distribution, alt: Distribution, alpha: float, mc_reps: int,
                        noise: NoiseSource):
    """Mean-LLR (Neyman-Pearson) test calibrated on simulated null datasets.

    ``noise`` only drives the null simulation; the statistic itself is exact.
    """
    x = as_sample(data)
    check_calibration(alpha, mc_reps)

    def stat(sample_x, _stream):
        return float(np.mean(llr_vector(sample_x, null, alt).values))

    observed = stat(x, None)
    nulls = simulate_null(stat, null, x.size, mc_reps, noise)
    return calibrated_verdict(observed, nulls, alpha, budget=None, method="nonprivate-llr")
