"""Private mean estimation with data-adaptive clamping at private tail quantiles.

The estimator spends eps_q on each of two private quantile searches (a low
and a high tail level), clamps the data to the interval they return and adds
Gaussian noise calibrated to that interval with the remaining budget eps_m,
where 2 eps_q^2 + eps_m^2 = eps^2.

Noise sub-streams are consumed in a fixed order: ``quantile-lower``,
``quantile-upper``, ``mean-noise``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .distributions import as_sample
from .errors import ConfigurationError
from .privacy import (
    BudgetSplit,
    NoiseSource,
    PrivacyBudget,
    gaussian_mechanism,
    gaussian_sd,
    split_budget,
)
from .quantile import QuantileConfig, QuantileResult, _quant_sorted, clamped_sorted

FALLBACK_TRIM_LEVEL = 0.25


@dataclass(frozen=True)
class MeanEstParams:
    """Schedule constants: range scale ``v``, range log-exponent ``p``,
    bin-resolution exponent ``eta`` and budget-split exponent ``k``.

    ``prior_range`` (lo, hi) shifts the search range to
    [lo - v (log n)^p, hi + v (log n)^p] when a range for the mean is known.
    """

    v: float = 1.0
    p: float = 1.1
    eta: float = 2.5
    k: float = 0.5
    prior_range: tuple[float, float] | None = None

    def __post_init__(self):
        if not (self.v > 0 and self.p > 1 and self.eta > 2 and 0 < self.k <= 1):
            raise ConfigurationError(
                f"need v > 0, p > 1, eta > 2, 0 < k <= 1; got v={self.v}, p={self.p}, "
                f"eta={self.eta}, k={self.k}"
            )
        if self.prior_range is not None:
            lo, hi = (float(t) for t in self.prior_range)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ConfigurationError(f"prior range needs finite lo <= hi, got {self.prior_range}")
            object.__setattr__(self, "prior_range", (lo, hi))


@dataclass(frozen=True)
class DerivedMeanConfig:
    n: int
    a: float
    b: float
    steps: int
    q_l: float
    q_u: float
    split: BudgetSplit
    tau: float
    beta: float
    trim_fallback_applied: bool = False

    def quantile_config(self, which: str) -> QuantileConfig:
        q = self.q_l if which == "lower" else self.q_u
        return QuantileConfig(self.a, self.b, self.steps, q, PrivacyBudget(self.split.eps_q), self.beta)


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    clamp_lo: float
    clamp_hi: float
    noise_sd: float
    config: DerivedMeanConfig | None
    budget_calls: tuple = ()
    quantiles: tuple[QuantileResult, ...] = field(default=(), repr=False)

    @property
    def budget_spent(self) -> PrivacyBudget:
        return PrivacyBudget(math.sqrt(math.fsum(e * e for _, e in self.budget_calls)))


def derive_params(n: int, eps: PrivacyBudget | float, params: MeanEstParams | None = None) -> DerivedMeanConfig:
    """Search range, step count, budget split and tail levels for sample size ``n``."""
    params = params or MeanEstParams()
    eps = eps if isinstance(eps, PrivacyBudget) else PrivacyBudget(eps)
    return _derive(int(n), eps, params)


@lru_cache(maxsize=256)
def _derive(n: int, eps: PrivacyBudget, params: MeanEstParams) -> DerivedMeanConfig:
    if n < 3:
        raise ConfigurationError(f"mean estimation needs n >= 3, got {n}")
    split = split_budget(eps, n, params.k)
    log_n = math.log(n)
    half_width = params.v * log_n**params.p
    lo_mu, hi_mu = params.prior_range or (0.0, 0.0)
    a, b = lo_mu - half_width, hi_mu + half_width
    steps = math.ceil(math.log2(b - a) + params.eta * math.log2(n))
    steps = max(steps, 1)
    # failure probability n^(2 - eta); log(T / beta) = log T + (eta - 2) log n > 0
    beta = math.exp((2 - params.eta) * log_n)
    tau = math.sqrt(2 * steps * (math.log(steps) + (params.eta - 2) * log_n)) / split.eps_q
    q_l = (tau + 2) / n
    q_u = 1 - (tau + 1) / n
    fallback = q_l >= q_u
    if fallback:
        q_l = min(q_l, FALLBACK_TRIM_LEVEL)
        q_u = max(q_u, 1 - FALLBACK_TRIM_LEVEL)
    return DerivedMeanConfig(
        n=n, a=a, b=b, steps=steps, q_l=q_l, q_u=q_u, split=split, tau=tau, beta=beta,
        trim_fallback_applied=fallback,
    )


def gdp_mean(data, cfg: DerivedMeanConfig, noise: NoiseSource) -> MeanEstimate:
    x = as_sample(data)
    if x.size != cfg.n:
        raise ConfigurationError(f"config was derived for n={cfg.n}, data has n={x.size}")
    xs = clamped_sorted(x, cfg.a, cfg.b)
    lower = _quant_sorted(xs, cfg.quantile_config("lower"), noise.child("quantile-lower"))
    upper = _quant_sorted(xs, cfg.quantile_config("upper"), noise.child("quantile-upper"))
    clamp_lo = lower.value
    clamp_hi = max(upper.value, clamp_lo)
    clamped_mean = float(np.mean(np.clip(x, clamp_lo, clamp_hi)))
    sensitivity = (clamp_hi - clamp_lo) / cfg.n
    eps_m = cfg.split.eps_m
    value = gaussian_mechanism(clamped_mean, sensitivity, eps_m, noise.child("mean-noise"))
    eps_q = cfg.split.eps_q
    return MeanEstimate(
        value=value,
        clamp_lo=clamp_lo,
        clamp_hi=clamp_hi,
        noise_sd=gaussian_sd(sensitivity, eps_m),
        config=cfg,
        budget_calls=(("quantile-lower", eps_q), ("quantile-upper", eps_q), ("mean-noise", eps_m)),
        quantiles=(lower, upper),
    )


def gdp_mean_auto(
    data, eps: PrivacyBudget | float, params: MeanEstParams | None, noise: NoiseSource
) -> MeanEstimate:
    """Private mean of ``data`` at total budget ``eps``; ``params=None`` uses the defaults."""
    x = as_sample(data)
    return gdp_mean(x, derive_params(x.size, eps, params), noise)
