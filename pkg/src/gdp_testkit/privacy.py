"""Gaussian-DP budget arithmetic, the Gaussian mechanism and noise streams.

Budgets are GDP parameters ``mu`` (called ``epsilon`` throughout): a mechanism
is eps-GDP when distinguishing neighbouring datasets is no easier than telling
N(0, 1) from N(eps, 1).  Sequential releases compose as the root sum of squares.

Randomness
----------
Every random draw goes through a :class:`NoiseSource`.  The seeded kind wraps a
``numpy.random.Generator`` over ``PCG64``; Gaussian deviates come from
``Generator.standard_normal`` (NumPy's ziggurat).  Seeds for derived streams
are computed as::

    key(root)         = SHA-256(b"gdp-testkit|" + str(seed))
    key(child(label)) = SHA-256(key(parent) + b"|" + label)
    generator         = Generator(PCG64(int.from_bytes(key[:16], "little")))

so a stream depends only on its seed and the path of labels leading to it,
never on the order in which sibling streams are consumed.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError

SEEDED = "seeded-gaussian"
ZERO = "zero"
SCRIPTED = "scripted"


@dataclass(frozen=True)
class PrivacyBudget:
    """A Gaussian-DP budget."""

    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (math.isfinite(eps) and eps > 0):
            raise ConfigurationError(f"epsilon must be positive and finite, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)


@dataclass(frozen=True)
class BudgetSplit:
    """Allocation of a total budget over two quantile calls and the mean noise."""

    eps_q: float
    eps_m: float
    eps_total: float

    def __post_init__(self):
        for name in ("eps_q", "eps_m", "eps_total"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
        if not (self.eps_q < self.eps_total and self.eps_m < self.eps_total):
            raise ConfigurationError("each part of a budget split must be below the total")
        lhs = 2 * self.eps_q**2 + self.eps_m**2
        if abs(lhs - self.eps_total**2) > 1e-12 * self.eps_total**2:
            raise ConfigurationError("budget split violates 2*eps_q^2 + eps_m^2 = eps_total^2")

    def parts(self) -> list[PrivacyBudget]:
        """Budgets in consumption order: lower quantile, upper quantile, mean noise."""
        return [PrivacyBudget(self.eps_q), PrivacyBudget(self.eps_q), PrivacyBudget(self.eps_m)]


def _as_eps(eps) -> float:
    if isinstance(eps, PrivacyBudget):
        return eps.epsilon
    return PrivacyBudget(eps).epsilon


def compose(budgets: Iterable[PrivacyBudget | float]) -> PrivacyBudget:
    """Budget of the sequential release of mechanisms with the given budgets."""
    values = [_as_eps(b) for b in budgets]
    if not values:
        raise ConfigurationError("cannot compose an empty list of budgets")
    return PrivacyBudget(math.sqrt(math.fsum(v * v for v in values)))


def split_budget(eps_total: PrivacyBudget | float, n: int, k: float) -> BudgetSplit:
    """Split ``eps_total`` as eps_q = eps/(log n)^k, eps_m = eps*sqrt(1 - 2/(log n)^(2k))."""
    eps = _as_eps(eps_total)
    if n < 3:
        raise ConfigurationError(f"budget split needs n >= 3, got n={n}")
    if not (0 < k <= 1):
        raise ConfigurationError(f"split exponent k must lie in (0, 1], got {k}")
    log_n = math.log(n)
    inflation = log_n ** (2 * k)
    if inflation <= 2:
        raise ConfigurationError(
            f"sample too small for split exponent k: (log n)^(2k) = {inflation:.4g} <= 2"
        )
    eps_q = eps / log_n**k
    # eps_m from the identity itself keeps the composition exact to rounding.
    eps_m = math.sqrt(eps * eps - 2 * eps_q * eps_q)
    return BudgetSplit(eps_q=eps_q, eps_m=eps_m, eps_total=eps)


class NoiseSource:
    """A stream of standard normal deviates (plus a generator for data sampling).

    Instances are stateful and single-owner.  Use :meth:`child` to obtain an
    independent stream for a sub-computation instead of sharing one.

    The ``zero`` and ``scripted`` kinds exist for tests: ``zero`` returns 0 for
    every draw, ``scripted`` hands out a fixed list of standard deviates in
    order.  Children of these kinds share the parent's behaviour (scripted
    children consume the same queue), so a script is read in call order.
    """

    def __init__(self, kind: str, *, key: bytes | None = None, script=None):
        if kind not in (SEEDED, ZERO, SCRIPTED):
            raise ConfigurationError(f"unknown noise kind {kind!r}")
        self.kind = kind
        self._key = key
        self._rng = None
        self._queue = script

    @classmethod
    def seeded(cls, seed: int) -> "NoiseSource":
        seed = int(seed)
        if not (-(2**63) <= seed < 2**64):
            raise ConfigurationError("seed must fit in 64 bits")
        return cls(SEEDED, key=hashlib.sha256(f"gdp-testkit|{seed}".encode()).digest())

    @classmethod
    def zero(cls) -> "NoiseSource":
        return cls(ZERO)

    @classmethod
    def scripted(cls, values: Sequence[float]) -> "NoiseSource":
        return cls(SCRIPTED, script=deque(float(v) for v in values))

    @property
    def is_release_safe(self) -> bool:
        return self.kind == SEEDED

    @property
    def rng(self) -> np.random.Generator:
        """The underlying generator; only seeded streams have one."""
        if self.kind != SEEDED:
            raise ConfigurationError(f"a {self.kind} noise source cannot generate data")
        if self._rng is None:
            seed = int.from_bytes(self._key[:16], "little")
            self._rng = np.random.Generator(np.random.PCG64(seed))
        return self._rng

    def child(self, label: str) -> "NoiseSource":
        if self.kind == SEEDED:
            key = hashlib.sha256(self._key + b"|" + str(label).encode()).digest()
            return NoiseSource(SEEDED, key=key)
        if self.kind == ZERO:
            return self
        return NoiseSource(SCRIPTED, script=self._queue)

    def standard_normal(self, size: int | None = None):
        if self.kind == SEEDED:
            return self.rng.standard_normal(size)
        if self.kind == ZERO:
            return 0.0 if size is None else np.zeros(size)
        count = 1 if size is None else int(size)
        if len(self._queue) < count:
            raise ConfigurationError(
                f"scripted noise exhausted: needed {count}, {len(self._queue)} left"
            )
        draws = [self._queue.popleft() for _ in range(count)]
        return draws[0] if size is None else np.array(draws)

    def remaining(self) -> int:
        """Number of unread scripted values (0 for other kinds)."""
        return len(self._queue) if self.kind == SCRIPTED else 0

    def __repr__(self):
        if self.kind == SEEDED:
            return f"NoiseSource({self.kind}, key={self._key[:6].hex()}...)"
        return f"NoiseSource({self.kind})"


def derive_stream(master_seed: int, replicate: int, label: str) -> NoiseSource:
    """Stream for one replicate of one labelled computation."""
    return NoiseSource.seeded(master_seed).child(f"replicate={int(replicate)}").child(label)


def require_release_noise(noise: NoiseSource) -> None:
    """Refuse test-only noise kinds on paths that release results about real data."""
    if not noise.is_release_safe:
        raise ConfigurationError(f"{noise.kind} noise is test-only and cannot be used for a release")


def gaussian_sd(l2_sensitivity: float, eps: PrivacyBudget | float) -> float:
    """Noise standard deviation that makes a release with this sensitivity eps-GDP."""
    if not l2_sensitivity >= 0:
        raise ConfigurationError(f"sensitivity must be nonnegative, got {l2_sensitivity}")
    return l2_sensitivity / _as_eps(eps)


def gaussian_mechanism(
    value: float, l2_sensitivity: float, eps: PrivacyBudget | float, noise: NoiseSource
) -> float:
    """Release ``value + N(0, (l2_sensitivity/eps)^2)``."""
    sd = gaussian_sd(l2_sensitivity, eps)
    z = noise.standard_normal()
    if sd == 0 or z == 0:
        return float(value)
    return float(value + sd * z)
