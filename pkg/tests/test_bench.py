import io
import json
import math

import numpy as np
import pytest

from gdp_testkit.bench import (
    CSV_HEADER,
    THREADS_ENV,
    ExperimentConfig,
    ResultRow,
    default_workers,
    design_config,
    read_csv,
    rows_to_csv,
    run_experiment,
    summarize,
)
from gdp_testkit.distributions import parse_distribution, sample
from gdp_testkit.errors import ConfigurationError
from gdp_testkit.mean import derive_params
from gdp_testkit.privacy import derive_stream

from oracles import clamped_mean_reference


def small_test_config(**kw):
    raw = design_config("two-sided-ht", n_grid=[100, 200], eps_grid=[1.0], alternatives=[-0.2, 0.2],
                        replications=3, mc_reps=19, master_seed=17)
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


def small_mean_config(**kw):
    raw = design_config("mean-comparison", n_grid=[100, 1000], eps_grid=[0.5, 1.0], replications=4, master_seed=3)
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


def test_row_count_for_test_experiment():
    cfg = small_test_config()
    rows = list(run_experiment(cfg, workers=1))
    assert len(rows) == len(cfg.methods) * len(cfg.n_grid) * len(cfg.eps_grid) * len(cfg.alternatives) * 3
    assert {r.metric_name for r in rows} == {"reject"}
    assert all(r.metric_value in (0.0, 1.0) for r in rows)


def test_mean_rows_carry_two_metrics():
    cfg = small_mean_config()
    rows = list(run_experiment(cfg, workers=1))
    assert len(rows) == 3 * 2 * 2 * 3 * 4 * 2
    assert all(math.isfinite(r.metric_value) and r.metric_value >= 0 for r in rows)


def test_rerun_is_byte_identical():
    cfg = small_mean_config()
    assert rows_to_csv(run_experiment(cfg, workers=1)) == rows_to_csv(run_experiment(cfg, workers=1))


def test_parallel_matches_serial():
    cfg = small_test_config()
    serial = rows_to_csv(run_experiment(cfg, workers=1, chunk_size=2))
    parallel = rows_to_csv(run_experiment(cfg, workers=2, chunk_size=1))
    assert serial == parallel


def test_seed_changes_output():
    a = rows_to_csv(run_experiment(small_mean_config(), workers=1))
    b = rows_to_csv(run_experiment(small_mean_config(master_seed=4), workers=1))
    assert a != b


def test_csv_format_and_round_trip():
    cfg = small_mean_config(replications=1, n_grid=[100])
    text = rows_to_csv(run_experiment(cfg, workers=1))
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "\r" not in text
    rows = read_csv(io.StringIO(text))
    assert rows_to_csv(rows) == text


@pytest.mark.parametrize("method", ["no-such-method", "coinpress", "private-ks"])
def test_unknown_or_reserved_methods_fail_up_front(method):
    raw = design_config("mean-comparison", methods=["gdp-mean", method])
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(raw)


def test_method_experiment_mismatch():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(design_config("mean-comparison", methods=["gdp-llr"]))


@pytest.mark.parametrize("mutate", [
    lambda raw: raw.pop("schema"),
    lambda raw: raw.update(schema="gdp-testkit.experiment/0"),
    lambda raw: raw.update(colour="blue"),
    lambda raw: raw.update(n_grid=[]),
    lambda raw: raw.update(replications=0),
    lambda raw: raw.update(eps_grid=[0.0]),
    lambda raw: raw.update(distributions=["normal(0)"]),
    lambda raw: raw.update(mechanism_noise="scripted"),
])
def test_schema_validation(mutate):
    raw = design_config("mean-comparison")
    mutate(raw)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(raw)


def test_config_json_round_trip():
    cfg = small_test_config()
    assert ExperimentConfig.from_json(json.dumps(cfg.to_dict())) == cfg
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json("{not json")


def test_zero_noise_rows_match_pipeline_trace():
    cfg = small_mean_config(methods=["gdp-mean", "naive-dd", "nonprivate-mean"], distributions=["normal(3,1)"],
                            n_grid=[500], eps_grid=[1.0], replications=1, mechanism_noise="zero")
    rows = {r.method + "/" + r.metric_name: r.metric_value for r in run_experiment(cfg, workers=1)}
    data = sample(parse_distribution("normal(3,1)"), 500, derive_stream(3, 0, "data|normal(3,1)|n=500"))
    expected, _, _ = clamped_mean_reference(data, derive_params(500, 1.0))
    assert rows["gdp-mean/abs_error"] == pytest.approx(abs(expected - data.mean()), abs=1e-12)
    assert rows["gdp-mean/abs_error_vs_true_mean"] == pytest.approx(abs(expected - 3), abs=1e-12)
    dd = float(np.mean(np.clip(data, -math.log(500), math.log(500))))
    assert rows["naive-dd/abs_error"] == pytest.approx(abs(dd - data.mean()), abs=1e-12)
    assert rows["nonprivate-mean/abs_error"] == pytest.approx(0.0, abs=1e-12)


def _rows(values, method="m", n=10):
    return [ResultRow("simple-ht", method, "d", n, 1.0, i, "reject", float(v)) for i, v in enumerate(values)]


def test_summarize_bernoulli_power():
    rng = np.random.default_rng(0)
    values = rng.integers(0, 2, 1000)
    (summary,) = summarize(_rows(values))
    assert abs(summary["power"] - 0.5) <= 0.047
    assert summary["se"] == pytest.approx(0.0158, abs=0.0005)
    assert summary["count"] == 1000


def test_summarize_single_row():
    (summary,) = summarize(_rows([1.0]))
    assert summary["mean"] == summary["median"] == 1.0 and summary["se"] == 0.0


def test_summarize_group_count():
    rows = _rows([0, 1, 1], "a", 10) + _rows([1, 1], "b", 10) + _rows([0], "a", 20)
    summary = summarize(rows, ["method", "n"])
    assert len(summary) == len({(r.method, r.n) for r in rows}) == 3


def test_summarize_rejects_bad_key_and_mixed_experiments():
    with pytest.raises(ConfigurationError):
        summarize(_rows([1.0]), ["colour"])
    mixed = _rows([1.0]) + [ResultRow("one-sided-ht", "m", "d", 10, 1.0, 0, "reject", 0.0)]
    with pytest.raises(ConfigurationError):
        summarize(mixed, ["method"])


def test_thread_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert default_workers() == 3
    monkeypatch.setenv(THREADS_ENV, "lots")
    with pytest.raises(ConfigurationError):
        default_workers()


def test_design_config_unknown():
    with pytest.raises(ConfigurationError):
        design_config("fig-9")
