"""Distributions used by the simulation designs, plus LLR and MLR statistics.

Six families are supported: normal, logistic, gamma (shape/rate), Student t,
noncentral t and finite mixtures of these.  Each has a ``logpdf`` and a
``sample`` method; :func:`parse_distribution` reads the text form shared with
the CLI and config files::

    normal(3,1)  logistic(5,2)  gamma(2,0.5)  t(1)  nct(1.1,0.1)
    mixture(0.5:t(1),0.5:nct(1.1,0.1))

One-parameter families for the MLR tests use the same grammar with ``theta``
marking the free parameter, e.g. ``normal(theta,1)`` or ``gamma(2,theta)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .privacy import NoiseSource

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _check(cond: bool, msg: str):
    if not cond:
        raise ConfigurationError(msg)


def _fmt(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        _check(self.sd > 0 and math.isfinite(self.mean), f"invalid normal parameters {self}")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.sd)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.sd, n)

    @property
    def expectation(self) -> float:
        return self.mean

    def __str__(self):
        return f"normal({_fmt(self.mean)},{_fmt(self.sd)})"


@dataclass(frozen=True)
class Logistic:
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        _check(self.scale > 0 and math.isfinite(self.location), f"invalid logistic parameters {self}")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.location) / self.scale
        # log f = -|z| - 2 log(1 + exp(-|z|)) - log s, symmetric and overflow-free
        a = np.abs(z)
        return -a - 2 * np.log1p(np.exp(-a)) - math.log(self.scale)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.logistic(self.location, self.scale, n)

    @property
    def expectation(self) -> float:
        return self.location

    def __str__(self):
        return f"logistic({_fmt(self.location)},{_fmt(self.scale)})"


@dataclass(frozen=True)
class Gamma:
    shape: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        _check(self.shape > 0 and self.rate > 0, f"invalid gamma parameters {self}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        pos = x > 0
        xp = x[pos]
        out[pos] = (
            self.shape * math.log(self.rate)
            - math.lgamma(self.shape)
            + (self.shape - 1) * np.log(xp)
            - self.rate * xp
        )
        return out if out.ndim else float(out)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, n)

    @property
    def expectation(self) -> float:
        return self.shape / self.rate

    def __str__(self):
        return f"gamma({_fmt(self.shape)},{_fmt(self.rate)})"


@dataclass(frozen=True)
class StudentT:
    df: float = 1.0

    def __post_init__(self):
        _check(self.df > 0, f"invalid t parameters {self}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        v = self.df
        const = math.lgamma((v + 1) / 2) - math.lgamma(v / 2) - 0.5 * math.log(v * math.pi)
        return const - (v + 1) / 2 * np.log1p(x * x / v)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_t(self.df, n)

    @property
    def expectation(self) -> float:
        return 0.0 if self.df > 1 else math.nan

    def __str__(self):
        return f"t({_fmt(self.df)})"


@dataclass(frozen=True)
class NoncentralT:
    """Law of (Z + ncp) / sqrt(V / df), Z ~ N(0,1), V ~ chi^2(df).

    The density is evaluated from the power series obtained by expanding
    exp(x * ncp * s) inside the mixing integral over s = sqrt(V/df)::

        f(x) = exp(-ncp^2/2) df^(df/2) / (sqrt(pi) Gamma(df/2) (df+x^2)^((df+1)/2))
               * sum_j Gamma((df+j+1)/2) / j! * y^j,   y = sqrt(2) x ncp / sqrt(df+x^2)

    Since |y| < sqrt(2)|ncp| the series converges for every x; terms are
    summed until they drop below 1e-17 of the running total.  Cancellation in
    the alternating series (x * ncp < 0) limits accuracy once |ncp| grows past
    a few units; the experiments here use ncp = 0.1.
    """

    df: float = 1.0
    ncp: float = 0.0

    def __post_init__(self):
        _check(self.df > 0 and math.isfinite(self.ncp), f"invalid noncentral t parameters {self}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        v, d = self.df, self.ncp
        q = v + x * x
        log_front = (
            -0.5 * d * d
            + 0.5 * v * math.log(v)
            - 0.5 * math.log(math.pi)
            - math.lgamma(v / 2)
            - (v + 1) / 2 * np.log(q)
        )
        y = math.sqrt(2.0) * d * x / np.sqrt(q)
        lg0 = math.lgamma((v + 1) / 2)
        total = np.ones_like(y)
        power = np.ones_like(y)
        max_abs_y = float(np.max(np.abs(y))) if y.size else 0.0
        j = 0
        while j < 2000:
            j += 1
            power = power * y
            coef = math.exp(math.lgamma((v + j + 1) / 2) - lg0 - math.lgamma(j + 1))
            term = coef * power
            total = total + term
            bound = coef * max_abs_y**j
            if bound < 1e-17 * max(float(np.min(np.abs(total))), 1e-300) or bound == 0:
                break
        return log_front + lg0 + np.log(total)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(n)
        chi2 = rng.chisquare(self.df, n)
        return (z + self.ncp) / np.sqrt(chi2 / self.df)

    @property
    def expectation(self) -> float:
        if self.df <= 1:
            return math.nan
        v = self.df
        return self.ncp * math.sqrt(v / 2) * math.exp(math.lgamma((v - 1) / 2) - math.lgamma(v / 2))

    def __str__(self):
        return f"nct({_fmt(self.df)},{_fmt(self.ncp)})"


@dataclass(frozen=True)
class Mixture:
    weights: tuple
    components: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(self.components))
        _check(len(w) == len(self.components) and len(w) > 0, "mixture needs one weight per component")
        _check(all(x >= 0 for x in w), "mixture weights must be nonnegative")
        _check(abs(math.fsum(w) - 1) <= 1e-12, f"mixture weights must sum to 1, got {math.fsum(w)}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        parts = np.stack(
            [
                (math.log(w) if w > 0 else -np.inf) + np.asarray(c.logpdf(x), dtype=float)
                for w, c in zip(self.weights, self.components)
            ]
        )
        top = np.max(parts, axis=0)
        safe_top = np.where(np.isfinite(top), top, 0.0)
        return safe_top + np.log(np.sum(np.exp(parts - safe_top), axis=0))

    def sample_with_labels(self, n: int, rng: np.random.Generator):
        labels = rng.choice(len(self.weights), size=n, p=np.array(self.weights))
        out = np.empty(n)
        for i, comp in enumerate(self.components):
            idx = np.flatnonzero(labels == i)
            if idx.size:
                out[idx] = comp.sample(idx.size, rng)
        return out, labels

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample_with_labels(n, rng)[0]

    @property
    def expectation(self) -> float:
        return math.fsum(w * c.expectation for w, c in zip(self.weights, self.components))

    def __str__(self):
        inner = ",".join(f"{_fmt(w)}:{c}" for w, c in zip(self.weights, self.components))
        return f"mixture({inner})"


Distribution = Normal | Logistic | Gamma | StudentT | NoncentralT | Mixture


@dataclass(frozen=True)
class StatisticVector:
    """Per-observation statistic with its kind (``llr`` or ``mlr``)."""

    values: np.ndarray
    label: str

    def __post_init__(self):
        if self.label not in ("llr", "mlr"):
            raise ConfigurationError(f"unknown statistic label {self.label!r}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("statistic vector has non-finite entries")

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def as_sample(data) -> np.ndarray:
    """Validate a dataset: non-empty, one-dimensional, finite."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DataError("a sample must be a non-empty one-dimensional array")
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise DataError(f"sample contains a non-finite value at index {bad[0]}")
    return x


def sample(dist: Distribution, n: int, noise: NoiseSource) -> np.ndarray:
    """Draw ``n`` i.i.d. values; requires a seeded noise source."""
    if int(n) < 1:
        raise ConfigurationError(f"sample size must be positive, got {n}")
    return dist.sample(int(n), noise.rng)


def log_density(dist: Distribution, x):
    """Natural-log density; -inf outside the support."""
    out = dist.logpdf(x)
    return float(out) if np.ndim(out) == 0 else out


def _logpdf_checked(dist, x, which):
    lp = np.asarray(dist.logpdf(x), dtype=float)
    bad = np.flatnonzero(~np.isfinite(lp))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"observation {i} (x={x[i]!r}) is outside the support of the {which} {dist}")
    return lp


def llr_vector(data, null_dist: Distribution, alt_dist: Distribution) -> StatisticVector:
    """Per-point log(f_alt(x) / f_null(x)); large values favour the alternative."""
    x = as_sample(data)
    lp_null = _logpdf_checked(null_dist, x, "null")
    lp_alt = _logpdf_checked(alt_dist, x, "alternative")
    return StatisticVector(lp_alt - lp_null, "llr")


_FAMILY_SLOTS = {"normal": 2, "logistic": 2, "gamma": 2}


@dataclass(frozen=True)
class Family:
    """One-parameter family with monotone likelihood ratio in ``statistic(x)``.

    ``normal`` and ``logistic`` vary the location (``fixed`` is sd/scale);
    ``gamma`` varies the rate with known shape ``fixed``.  Raising the gamma
    rate shifts mass towards zero, so its statistic is ``-x``.
    """

    name: str
    fixed: float

    def __post_init__(self):
        if self.name not in _FAMILY_SLOTS:
            raise ConfigurationError(
                f"unsupported MLR family {self.name!r}; expected one of {sorted(_FAMILY_SLOTS)}"
            )
        _check(self.fixed > 0, f"fixed parameter of {self.name} family must be positive")

    def at(self, theta: float) -> Distribution:
        if self.name == "normal":
            return Normal(theta, self.fixed)
        if self.name == "logistic":
            return Logistic(theta, self.fixed)
        return Gamma(self.fixed, theta)

    def statistic(self, x: np.ndarray) -> np.ndarray:
        return -x if self.name == "gamma" else x.copy()

    def __str__(self):
        if self.name == "gamma":
            return f"gamma({_fmt(self.fixed)},theta)"
        return f"{self.name}(theta,{_fmt(self.fixed)})"


def mlr_statistic(data, family: Family) -> StatisticVector:
    """Per-point sufficient statistic of an MLR family."""
    if not isinstance(family, Family):
        raise ConfigurationError(f"mlr_statistic needs a Family, got {family!r}")
    x = as_sample(data)
    if family.name == "gamma":
        bad = np.flatnonzero(x <= 0)
        if bad.size:
            raise DataError(f"observation {bad[0]} is outside the gamma support")
    return StatisticVector(family.statistic(x), "mlr")


# -- text grammar -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z_0-9]*)|([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(.))")

_ALIASES = {
    "normal": "normal",
    "gaussian": "normal",
    "logistic": "logistic",
    "gamma": "gamma",
    "t": "t",
    "student_t": "t",
    "nct": "nct",
    "noncentral_t": "nct",
    "mixture": "mixture",
}
_ARITY = {"normal": 2, "logistic": 2, "gamma": 2, "t": 1, "nct": 2}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = []
        for m in _TOKEN.finditer(text):
            name, num, sym = m.groups()
            if name:
                self.tokens.append(("name", name))
            elif num:
                self.tokens.append(("num", float(num)))
            elif sym and not sym.isspace():
                self.tokens.append(("sym", sym))
        self.pos = 0

    def fail(self, msg):
        raise ConfigurationError(f"cannot parse distribution {self.text!r}: {msg}")

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, kind, value=None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            self.fail(f"expected {value or kind} at token {self.pos}")
        self.pos += 1
        return tok[1]

    def dist(self, allow_theta=False):
        raw = self.take("name")
        name = _ALIASES.get(raw.lower())
        if name is None:
            self.fail(f"unknown family {raw!r}")
        self.take("sym", "(")
        if name == "mixture":
            weights, comps = [], []
            while True:
                weights.append(self.take("num"))
                self.take("sym", ":")
                comps.append(self.dist())
                if self.peek() == ("sym", ","):
                    self.pos += 1
                    continue
                break
            self.take("sym", ")")
            return Mixture(tuple(weights), tuple(comps))
        args = []
        while True:
            tok = self.peek()
            if tok[0] == "name" and tok[1] == "theta" and allow_theta:
                self.pos += 1
                args.append(None)
            else:
                args.append(self.take("num"))
            if self.peek() == ("sym", ","):
                self.pos += 1
                continue
            break
        self.take("sym", ")")
        if len(args) != _ARITY[name]:
            self.fail(f"{name} takes {_ARITY[name]} parameters, got {len(args)}")
        if allow_theta:
            return name, args
        return {
            "normal": Normal,
            "logistic": Logistic,
            "gamma": Gamma,
            "t": StudentT,
            "nct": NoncentralT,
        }[name](*args)

    def done(self):
        if self.pos != len(self.tokens):
            self.fail("trailing input")


def parse_distribution(text: str) -> Distribution:
    p = _Parser(text)
    d = p.dist()
    p.done()
    return d


def parse_family(text: str) -> Family:
    """Parse ``normal(theta,1)``, ``logistic(theta,1)`` or ``gamma(2,theta)``.

    A bare family name uses the fixed parameter 1 (normal, logistic) or 2 (gamma).
    """
    stripped = text.strip()
    if stripped in _FAMILY_SLOTS:
        return Family(stripped, 2.0 if stripped == "gamma" else 1.0)
    p = _Parser(text)
    name, args = p.dist(allow_theta=True)
    p.done()
    expected_free = 1 if name == "gamma" else 0
    if name not in _FAMILY_SLOTS or args.count(None) != 1 or args[expected_free] is not None:
        raise ConfigurationError(
            f"unsupported MLR family {text!r}; use normal(theta,sd), logistic(theta,scale) or gamma(shape,theta)"
        )
    return Family(name, float(args[1 - expected_free]))


def as_distribution(value: Distribution | str) -> Distribution:
    return parse_distribution(value) if isinstance(value, str) else value
