"""Private quantile selection by noisy binary search.

Each of the ``T`` halving steps releases the count #{x <= mid} (sensitivity 1
under change-one-record neighbours) through the Gaussian mechanism at budget
eps/sqrt(T), i.e. noise variance T/eps^2; the T releases compose to eps-GDP.
Midpoints are dyadic points of [a, b], never rounded to integers, so after T
steps the search interval has width exactly (b - a)/2^T.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import as_sample
from .errors import ConfigurationError
from .privacy import NoiseSource, PrivacyBudget, gaussian_sd


@dataclass(frozen=True)
class QuantileConfig:
    a: float
    b: float
    steps: int
    q: float
    eps: PrivacyBudget
    beta: float = 0.05

    def __post_init__(self):
        if not isinstance(self.eps, PrivacyBudget):
            object.__setattr__(self, "eps", PrivacyBudget(self.eps))
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ConfigurationError(f"search range needs finite a < b, got [{self.a}, {self.b}]")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"step count must be a positive integer, got {self.steps}")
        if not (0 < self.q < 1):
            raise ConfigurationError(f"quantile level must lie in (0, 1), got {self.q}")
        if not (0 < self.beta < 1):
            raise ConfigurationError(f"failure probability must lie in (0, 1), got {self.beta}")
        if not self.bin_width > 0:
            raise ConfigurationError("bin width (b - a)/2^T underflows to zero")

    @property
    def bin_width(self) -> float:
        return math.ldexp(self.b - self.a, -int(self.steps))

    @property
    def step_noise_sd(self) -> float:
        return gaussian_sd(1.0, self.eps.epsilon / math.sqrt(self.steps))


@dataclass(frozen=True)
class QuantileResult:
    value: float
    bin_width: float
    tau: float
    steps_taken: int
    step_noise_sd: float
    trace: tuple = ()

    @property
    def step_noise_variance(self) -> float:
        return self.step_noise_sd**2


def rank_error_bound(steps: int, eps: PrivacyBudget | float, beta: float) -> float:
    """tau = sqrt(2 T log(T / beta)) / eps, or 0 when T/beta <= 1."""
    eps = eps.epsilon if isinstance(eps, PrivacyBudget) else PrivacyBudget(eps).epsilon
    if steps < 1 or not (0 < beta < 1):
        raise ConfigurationError("rank_error_bound needs T >= 1 and 0 < beta < 1")
    log_term = math.log(steps / beta)
    if log_term <= 0:
        return 0.0
    return math.sqrt(2 * steps * log_term) / eps


def target_rank(n: int, q: float) -> int:
    """n*q rounded half up."""
    return math.floor(n * q + 0.5)


def rank_error(data, value: float, q: float) -> int:
    """|#{x_i <= value} - round(n q)|."""
    x = as_sample(data)
    count = int(np.count_nonzero(x <= value))
    return abs(count - target_rank(x.size, q))


def _search(
    sorted_x: Sequence[float],
    a: float,
    b: float,
    steps: int,
    target: float,
    z: Sequence[float],
    trace: list | None = None,
) -> float:
    left, right = a, b
    mid = (left + right) / 2
    for t in range(steps):
        noisy_count = bisect_right(sorted_x, mid) + z[t]
        if trace is not None:
            trace.append((left, right, mid, noisy_count))
        if noisy_count < target:
            left = mid
        else:
            right = mid
        mid = (left + right) / 2
    return mid


def clamped_sorted(data, a: float, b: float) -> list[float]:
    return np.sort(np.clip(as_sample(data), a, b)).tolist()


def gdp_quant(
    data, cfg: QuantileConfig, noise: NoiseSource, *, record_trace: bool = False
) -> QuantileResult:
    """Return a private ``cfg.q`` quantile of ``data`` searched over [a, b].

    At step t the search moves right when #{x <= mid} + Z_t < n q and left
    otherwise, with Z_1..Z_T drawn up front from N(0, T/eps^2).
    """
    xs = clamped_sorted(data, cfg.a, cfg.b)
    return _quant_sorted(xs, cfg, noise, record_trace=record_trace)


def _quant_sorted(xs, cfg: QuantileConfig, noise: NoiseSource, *, record_trace=False):
    sd = cfg.step_noise_sd
    z = noise.standard_normal(cfg.steps) * sd
    trace = [] if record_trace else None
    value = _search(xs, cfg.a, cfg.b, cfg.steps, len(xs) * cfg.q, z.tolist(), trace)
    return QuantileResult(
        value=value,
        bin_width=cfg.bin_width,
        tau=rank_error_bound(cfg.steps, cfg.eps, cfg.beta),
        steps_taken=cfg.steps,
        step_noise_sd=sd,
        trace=tuple(trace) if trace is not None else (),
    )
