"""Simulation runner for the mean-estimation and testing designs.

An experiment is a full factorial over distributions (or alternatives),
sample sizes, budgets, methods and replicates.  Every replicate draws its
data from a stream derived from ``(master_seed, replicate, data label)``, so
all methods in a cell see the same dataset, and its mechanism noise from a
stream keyed additionally by method and budget.  Results therefore do not
depend on execution order or the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .baselines import ClampRange, naive_dd_mean, ncllr_test, nonprivate_llr_test, nonprivate_mean
from .distributions import parse_distribution, parse_family, sample
from .errors import ConfigurationError
from .mean import MeanEstParams, gdp_mean_auto
from .privacy import NoiseSource, PrivacyBudget, derive_stream
from .private_tests import TestSpec, run_test

log = logging.getLogger(__name__)

SCHEMA = "gdp-testkit.experiment/1"
CSV_HEADER = ("experiment", "method", "distribution", "n", "epsilon", "replicate", "metric_name", "metric_value")
THREADS_ENV = "GDP_TESTKIT_THREADS"

MEAN_COMPARISON = "mean-comparison"
SIMPLE_HT = "simple-ht"
ONE_SIDED_HT = "one-sided-ht"
TWO_SIDED_HT = "two-sided-ht"
EXPERIMENTS = (MEAN_COMPARISON, SIMPLE_HT, ONE_SIDED_HT, TWO_SIDED_HT)
TEST_EXPERIMENTS = (SIMPLE_HT, ONE_SIDED_HT, TWO_SIDED_HT)


class ResultRow(NamedTuple):
    experiment: str
    method: str
    distribution: str
    n: int
    epsilon: float
    replicate: int
    metric_name: str
    metric_value: float


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    methods: tuple
    n_grid: tuple
    eps_grid: tuple
    replications: int = 200
    master_seed: int = 0
    alpha: float = 0.05
    mc_reps: int = 199
    distributions: tuple = ()
    null: str | None = None
    family: str | None = None
    theta0: float = 0.0
    alternatives: tuple = ()
    mean_params: MeanEstParams = MeanEstParams()
    ncllr_clamp: ClampRange = ClampRange()
    mechanism_noise: str = "seeded"
    schema: str = SCHEMA

    def __post_init__(self):
        if self.schema != SCHEMA:
            raise ConfigurationError(f"unsupported config schema {self.schema!r}; expected {SCHEMA!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        for name in ("methods", "n_grid", "eps_grid"):
            if not getattr(self, name):
                raise ConfigurationError(f"{name} must be non-empty")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if any(int(n) != n or n < 3 for n in self.n_grid):
            raise ConfigurationError(f"sample sizes must be integers >= 3, got {self.n_grid}")
        for eps in self.eps_grid:
            PrivacyBudget(eps)
        if self.mechanism_noise not in ("seeded", "zero"):
            raise ConfigurationError("mechanism_noise must be 'seeded' or 'zero'")
        if self.experiment == MEAN_COMPARISON:
            if not self.distributions:
                raise ConfigurationError("mean-comparison needs a non-empty 'distributions' list")
            for d in self.distributions:
                parse_distribution(d)
        else:
            if not self.alternatives:
                raise ConfigurationError(f"{self.experiment} needs a non-empty 'alternatives' list")
            if self.experiment == SIMPLE_HT:
                if self.null is None:
                    raise ConfigurationError("simple-ht needs a 'null' distribution")
                parse_distribution(self.null)
                for d in self.alternatives:
                    parse_distribution(d)
            else:
                if self.family is None:
                    raise ConfigurationError(f"{self.experiment} needs a 'family'")
                parse_family(self.family)
        for method in self.methods:
            resolve_method(self.experiment, method)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        if "schema" not in raw:
            raise ConfigurationError(f"config must declare \"schema\": \"{SCHEMA}\"")
        for key in ("methods", "n_grid", "eps_grid", "distributions", "alternatives"):
            if key in raw:
                raw[key] = tuple(raw[key])
        if "n_grid" in raw:
            raw["n_grid"] = tuple(int(n) if float(n).is_integer() else n for n in raw["n_grid"])
        if "eps_grid" in raw:
            raw["eps_grid"] = tuple(float(e) for e in raw["eps_grid"])
        if isinstance(raw.get("mean_params"), dict):
            mp = dict(raw["mean_params"])
            if mp.get("prior_range") is not None:
                mp["prior_range"] = tuple(mp["prior_range"])
            raw["mean_params"] = MeanEstParams(**mp)
        if "ncllr_clamp" in raw:
            lo, hi = raw["ncllr_clamp"]
            raw["ncllr_clamp"] = ClampRange(float(lo), float(hi))
        return cls(**raw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"config is not valid JSON: {err}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ncllr_clamp"] = [self.ncllr_clamp.lo, self.ncllr_clamp.hi]
        for key, value in list(out.items()):
            if isinstance(value, tuple):
                out[key] = list(value)
        return out


# -- method registry ------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    """One (distribution/alternative, n, eps) setting of an experiment."""

    cfg: ExperimentConfig
    label: str
    n: int
    eps: float
    alt_theta: float | None = None

    @property
    def data_distribution(self):
        if self.cfg.experiment in (ONE_SIDED_HT, TWO_SIDED_HT):
            return parse_family(self.cfg.family).at(self.alt_theta)
        return parse_distribution(self.label)


EstimatorFn = Callable[[np.ndarray, float, MeanEstParams, NoiseSource], float]
TestFn = Callable[[np.ndarray, Cell, NoiseSource, NoiseSource | None], object]


@dataclass
class _Registry:
    estimators: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    reserved: dict = field(default_factory=dict)


REGISTRY = _Registry()


def register_estimator(method_id: str, fn: EstimatorFn) -> None:
    REGISTRY.estimators[method_id] = fn


def register_test(method_id: str, experiments: Sequence[str], fn: TestFn) -> None:
    REGISTRY.tests[method_id] = (tuple(experiments), fn)


def resolve_method(experiment: str, method_id: str):
    if method_id in REGISTRY.reserved:
        raise ConfigurationError(f"method {method_id!r} is reserved but not implemented: {REGISTRY.reserved[method_id]}")
    if experiment == MEAN_COMPARISON:
        if method_id not in REGISTRY.estimators:
            raise ConfigurationError(
                f"unknown estimator {method_id!r} for {experiment}; known: {sorted(REGISTRY.estimators)}"
            )
        return REGISTRY.estimators[method_id]
    if method_id not in REGISTRY.tests:
        raise ConfigurationError(f"unknown test {method_id!r}; known: {sorted(REGISTRY.tests)}")
    experiments, fn = REGISTRY.tests[method_id]
    if experiment not in experiments:
        raise ConfigurationError(f"method {method_id!r} does not apply to {experiment}")
    return fn


def _test_spec(cell: Cell) -> TestSpec:
    cfg = cell.cfg
    common = dict(alpha=cfg.alpha, mc_reps=cfg.mc_reps, eps=PrivacyBudget(cell.eps), mean_params=cfg.mean_params)
    if cfg.experiment == SIMPLE_HT:
        return TestSpec.simple(parse_distribution(cfg.null), parse_distribution(cell.label), **common)
    family = parse_family(cfg.family)
    if cfg.experiment == ONE_SIDED_HT:
        return TestSpec.one_sided(family, cfg.theta0, **common)
    return TestSpec.two_sided(family, cfg.theta0, **common)


def _null_and_alt(cell: Cell):
    cfg = cell.cfg
    if cfg.experiment == SIMPLE_HT:
        return parse_distribution(cfg.null), parse_distribution(cell.label)
    family = parse_family(cfg.family)
    return family.at(cfg.theta0), family.at(cell.alt_theta)


def _gdp_test(data, cell, noise, null_source):
    return run_test(data, _test_spec(cell), noise, null_source=null_source)


def _ncllr(data, cell, noise, null_source):
    null, alt = _null_and_alt(cell)
    return ncllr_test(data, null, alt, cell.cfg.ncllr_clamp, cell.eps, cell.cfg.alpha, cell.cfg.mc_reps,
                      noise, null_source=null_source)


def _nonprivate_llr(data, cell, noise, null_source):
    null, alt = _null_and_alt(cell)
    return nonprivate_llr_test(data, null, alt, cell.cfg.alpha, cell.cfg.mc_reps, null_source or noise)


register_estimator("gdp-mean", lambda x, eps, params, noise: gdp_mean_auto(x, eps, params, noise).value)
register_estimator("naive-dd", lambda x, eps, params, noise: naive_dd_mean(x, eps, noise).value)
register_estimator("nonprivate-mean", lambda x, eps, params, noise: nonprivate_mean(x))
register_test("gdp-llr", (SIMPLE_HT,), _gdp_test)
register_test("gdp-mlr", (ONE_SIDED_HT, TWO_SIDED_HT), _gdp_test)
register_test("ncllr", (SIMPLE_HT,), _ncllr)
register_test("nonprivate-llr", TEST_EXPERIMENTS, _nonprivate_llr)
REGISTRY.reserved.update(
    {
        "coinpress": "CoinPress private mean estimator (external method)",
        "shifted-cm": "Shifted-Clipped-Mean estimator (external method)",
        "private-ks": "private Kolmogorov-Smirnov test (external method)",
        "private-cvm": "private Cramer-von Mises test (external method)",
    }
)


# -- running ----------------------------------------------------------------------------

def cells(cfg: ExperimentConfig) -> list[Cell]:
    out = []
    if cfg.experiment == MEAN_COMPARISON:
        labels = [(str(parse_distribution(d)), None) for d in cfg.distributions]
    elif cfg.experiment == SIMPLE_HT:
        labels = [(str(parse_distribution(d)), None) for d in cfg.alternatives]
    else:
        family = parse_family(cfg.family)
        labels = [(str(family.at(float(t))), float(t)) for t in cfg.alternatives]
    for label, theta in labels:
        for n in cfg.n_grid:
            for eps in cfg.eps_grid:
                out.append(Cell(cfg, label, int(n), float(eps), theta))
    return out


def _mechanism_stream(cfg, cell, method, rep):
    return derive_stream(cfg.master_seed, rep, f"mechanism|{method}|{cell.label}|n={cell.n}|eps={cell.eps!r}")


def _data_stream(cfg, cell, rep):
    return derive_stream(cfg.master_seed, rep, f"data|{cell.label}|n={cell.n}")


def run_replicate(cell: Cell, rep: int) -> list[ResultRow]:
    cfg = cell.cfg
    data = sample(cell.data_distribution, cell.n, _data_stream(cfg, cell, rep))
    rows = []
    for method in cfg.methods:
        fn = resolve_method(cfg.experiment, method)
        stream = _mechanism_stream(cfg, cell, method, rep)
        if cfg.mechanism_noise == "zero":
            noise, null_source = NoiseSource.zero(), stream
        else:
            noise, null_source = stream, None

        def row(metric, value):
            return ResultRow(cfg.experiment, method, cell.label, cell.n, cell.eps, rep, metric, float(value))

        if cfg.experiment == MEAN_COMPARISON:
            estimate = fn(data, cell.eps, cfg.mean_params, noise)
            sample_mean = float(np.mean(data))
            rows.append(row("abs_error", abs(estimate - sample_mean)))
            rows.append(row("abs_error_vs_true_mean", abs(estimate - cell.data_distribution.expectation)))
        else:
            verdict = fn(data, cell, noise, null_source)
            rows.append(row("reject", 1.0 if verdict.reject else 0.0))
    return rows


def _run_chunk(args):
    cell, reps = args
    out = []
    for rep in reps:
        out.extend(run_replicate(cell, rep))
    return out


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        return max(1, value)
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, chunk_size: int = 25) -> Iterator[ResultRow]:
    """Yield result rows in grid order (cell, replicate, method, metric)."""
    for method in cfg.methods:
        resolve_method(cfg.experiment, method)
    tasks = []
    for cell in cells(cfg):
        for start in range(0, cfg.replications, chunk_size):
            tasks.append((cell, range(start, min(start + chunk_size, cfg.replications))))
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(tasks) == 1:
        for task in tasks:
            yield from _run_chunk(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for rows in pool.map(_run_chunk, tasks):
            yield from rows


def _fmt_float(x: float) -> str:
    return repr(float(x))


def write_csv(rows: Iterable[ResultRow], stream) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    count = 0
    for r in rows:
        if not math.isfinite(r.metric_value):
            raise ValueError(f"non-finite metric value in row {r}")
        writer.writerow(
            [r.experiment, r.method, r.distribution, str(int(r.n)), _fmt_float(r.epsilon), str(int(r.replicate)),
             r.metric_name, _fmt_float(r.metric_value)]
        )
        count += 1
    return count


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(stream) -> list[ResultRow]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header) != CSV_HEADER:
        raise ConfigurationError(f"unexpected CSV header {header}; expected {','.join(CSV_HEADER)}")
    return [
        ResultRow(e, m, d, int(n), float(eps), int(rep), name, float(value))
        for e, m, d, n, eps, rep, name, value in reader
    ]


# -- summaries --------------------------------------------------------------------------

SUMMARY_STATS = ("count", "mean", "median", "se")


def summarize(rows: Iterable[ResultRow], group_by: Sequence[str] = ("method", "n", "epsilon")) -> list[dict]:
    """Mean, median and Monte Carlo standard error of the metric per group.

    ``metric_name`` is always part of the grouping.  For ``reject`` metrics the
    mean is reported as ``power`` as well.
    """
    keys = list(group_by)
    for key in keys:
        if key not in ResultRow._fields or key in ("metric_value",):
            raise ConfigurationError(f"cannot group by {key!r}")
    if "metric_name" not in keys:
        keys.append("metric_name")
    groups: dict[tuple, list[float]] = {}
    experiments = set()
    for r in rows:
        experiments.add(r.experiment)
        groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(r.metric_value)
    if len(experiments) > 1 and "experiment" not in keys:
        raise ConfigurationError(f"rows mix experiments {sorted(experiments)}; group by experiment too")
    out = []
    for key in sorted(groups):
        values = [v for v in groups[key] if math.isfinite(v)]
        if not values:
            log.warning("group %s has no finite values; omitted", key)
            continue
        k = len(values)
        mean = math.fsum(values) / k
        se = statistics.stdev(values) / math.sqrt(k) if k > 1 else 0.0
        record = dict(zip(keys, key))
        record.update(count=k, mean=mean, median=statistics.median(values), se=se)
        if record["metric_name"] == "reject":
            record["power"] = mean
        out.append(record)
    return out


def write_summary_csv(summary: list[dict], stream) -> None:
    if not summary:
        return
    fields = list(summary[0].keys())
    if any("power" in s for s in summary) and "power" not in fields:
        fields.append("power")
    writer = csv.DictWriter(stream, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for s in summary:
        writer.writerow({k: (_fmt_float(v) if isinstance(v, float) else v) for k, v in s.items()})


# -- designs ----------------------------------------------------------------------------

_N_MEAN = [round(10 ** (2 + 0.5 * i)) for i in range(7)]
_N_TEST = [100, 200, 400, 800, 1600, 3200]

DESIGNS = {
    MEAN_COMPARISON: dict(
        experiment=MEAN_COMPARISON,
        methods=["gdp-mean", "naive-dd", "nonprivate-mean"],
        distributions=["gamma(2,0.5)", "logistic(5,2)", "normal(3,1)"],
        n_grid=_N_MEAN,
        eps_grid=[0.5, 1.0, 2.0],
    ),
    SIMPLE_HT: dict(
        experiment=SIMPLE_HT,
        methods=["gdp-llr", "ncllr", "nonprivate-llr"],
        null="t(1)",
        alternatives=["mixture(0.5:t(1),0.5:nct(1.1,0.1))"],
        n_grid=_N_TEST,
        eps_grid=[0.5, 1.0, 2.0],
    ),
    ONE_SIDED_HT: dict(
        experiment=ONE_SIDED_HT,
        methods=["gdp-mlr", "nonprivate-llr"],
        family="normal(theta,1)",
        theta0=0.0,
        alternatives=[0.05, 0.1, 0.2],
        n_grid=_N_TEST,
        eps_grid=[0.5, 1.0, 2.0],
    ),
    TWO_SIDED_HT: dict(
        experiment=TWO_SIDED_HT,
        methods=["gdp-mlr", "nonprivate-llr"],
        family="logistic(theta,1)",
        theta0=0.0,
        alternatives=[-0.2, -0.1, -0.05, 0.05, 0.1, 0.2],
        n_grid=_N_TEST,
        eps_grid=[0.5, 1.0, 2.0],
    ),
}


def design_config(experiment: str, **overrides) -> dict:
    """Raw config dict for one of the built-in simulation designs."""
    if experiment not in DESIGNS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    raw = {"schema": SCHEMA, "replications": 200, "master_seed": 2024, "alpha": 0.05, "mc_reps": 199}
    raw.update(DESIGNS[experiment])
    raw.update(overrides)
    return raw
