"""Command line interface: ``gdp-testkit {run,summarize,design,quantile,mean,test}``.

``quantile``, ``mean`` and ``test`` release results about an input file (one
float per line) and always use seeded Gaussian noise.  Without ``--seed`` a
fresh seed is drawn from the operating system.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from pathlib import Path

import numpy as np

from . import bench
from .distributions import parse_distribution, parse_family
from .errors import ConfigurationError, DataError
from .mean import MeanEstParams, gdp_mean_auto
from .privacy import NoiseSource, PrivacyBudget, require_release_noise
from .private_tests import TestSpec, run_test
from .quantile import QuantileConfig, gdp_quant


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    return lo, hi


def _read_values(path: str) -> np.ndarray:
    source = sys.stdin if path == "-" else open(path, encoding="utf-8")
    with source:
        values = []
        for lineno, line in enumerate(source, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
    if not values:
        raise DataError(f"{path}: no values")
    return np.array(values)


def _release_noise(args) -> NoiseSource:
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    args.seed = seed
    noise = NoiseSource.seeded(seed)
    require_release_noise(noise)
    return noise


def _cmd_run(args) -> int:
    cfg = bench.ExperimentConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    rows = bench.run_experiment(cfg, workers=args.workers)
    if args.out == "-":
        count = bench.write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            count = bench.write_csv(rows, fh)
    logging.getLogger(__name__).info("wrote %d rows", count)
    return 0


def _cmd_summarize(args) -> int:
    with open(args.input, encoding="utf-8", newline="") as fh:
        rows = bench.read_csv(fh)
    keys = [k.strip() for k in args.group.split(",") if k.strip()]
    summary = bench.summarize(rows, keys)
    if args.out == "-":
        bench.write_summary_csv(summary, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            bench.write_summary_csv(summary, fh)
    return 0


def _cmd_design(args) -> int:
    overrides = {}
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    raw = bench.design_config(args.experiment, **overrides)
    bench.ExperimentConfig.from_dict(raw)
    json.dump(raw, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _cmd_quantile(args) -> int:
    data = _read_values(args.input)
    a, b = args.range
    cfg = QuantileConfig(a, b, args.steps, args.level, PrivacyBudget(args.epsilon), args.beta)
    result = gdp_quant(data, cfg, _release_noise(args))
    record = {
        "value": result.value,
        "bin_width": result.bin_width,
        "tau": result.tau,
        "steps": result.steps_taken,
        "epsilon": args.epsilon,
        "seed": args.seed,
    }
    print(json.dumps(record))
    return 0


def _cmd_mean(args) -> int:
    data = _read_values(args.input)
    params = MeanEstParams(v=args.v, p=args.p, eta=args.eta, k=args.k, prior_range=args.prior_range)
    est = gdp_mean_auto(data, PrivacyBudget(args.epsilon), params, _release_noise(args))
    cfg = est.config
    record = {
        "value": est.value,
        "clamp_lo": est.clamp_lo,
        "clamp_hi": est.clamp_hi,
        "noise_sd": est.noise_sd,
        "n": cfg.n,
        "search_range": [cfg.a, cfg.b],
        "steps": cfg.steps,
        "q_l": cfg.q_l,
        "q_u": cfg.q_u,
        "eps_q": cfg.split.eps_q,
        "eps_m": cfg.split.eps_m,
        "trim_fallback_applied": cfg.trim_fallback_applied,
        "epsilon": args.epsilon,
        "seed": args.seed,
    }
    print(json.dumps(record))
    return 0


def _cmd_test(args) -> int:
    data = _read_values(args.input)
    params = MeanEstParams(v=args.v, p=args.p, eta=args.eta, k=args.k)
    common = dict(alpha=args.alpha, mc_reps=args.mc_reps, eps=PrivacyBudget(args.epsilon), mean_params=params)
    if args.kind == "simple":
        if not (args.null and args.alt):
            raise ConfigurationError("--kind simple needs --null and --alt")
        spec = TestSpec.simple(parse_distribution(args.null), parse_distribution(args.alt), **common)
    else:
        if not args.family or args.theta0 is None:
            raise ConfigurationError(f"--kind {args.kind} needs --family and --theta0")
        family = parse_family(args.family)
        build = TestSpec.one_sided if args.kind == "one-sided" else TestSpec.two_sided
        spec = build(family, args.theta0, **common)
    verdict = run_test(data, spec, _release_noise(args))
    tails = f" p_lower={verdict.tails[0]!r} p_upper={verdict.tails[1]!r}" if verdict.tails else ""
    print(
        f"kind={args.kind} statistic={verdict.statistic!r} p_value={verdict.p_value!r} "
        f"reject={str(verdict.reject).lower()} alpha={args.alpha!r} M={verdict.mc_reps} "
        f"epsilon={args.epsilon!r} seed={args.seed}{tails}"
    )
    if args.json:
        detail = verdict.as_record()
        detail["kind"] = args.kind
        detail["seed"] = args.seed
        est = verdict.estimate
        detail["budget_audit"] = [{"call": label, "epsilon": eps} for label, eps in est.budget_calls]
        detail["clamp"] = [est.clamp_lo, est.clamp_hi]
        text = json.dumps(detail, indent=2)
        if args.json == "-":
            print(text)
        else:
            Path(args.json).write_text(text + "\n", encoding="utf-8")
    return 0


def _add_schedule_flags(p):
    defaults = MeanEstParams()
    p.add_argument("--v", type=float, default=defaults.v, help="search range scale")
    p.add_argument("--p", type=float, default=defaults.p, help="search range log-exponent (> 1)")
    p.add_argument("--eta", type=float, default=defaults.eta, help="bin resolution exponent (> 2)")
    p.add_argument("--k", type=float, default=defaults.k, help="budget split exponent in (0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdp-testkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default: ${bench.THREADS_ENV} or CPU count)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("summarize", help="summarize a results CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--group", default="method,n,epsilon")
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("design", help="print the config of a built-in simulation design")
    p.add_argument("experiment", choices=bench.EXPERIMENTS)
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("quantile", help="private quantile of an input file")
    p.add_argument("--input", required=True)
    p.add_argument("--range", type=_pair, required=True, help="search range 'a,b'")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.05, help="failure probability for the reported tau")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_quantile)

    p = sub.add_parser("mean", help="private mean of an input file")
    p.add_argument("--input", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    _add_schedule_flags(p)
    p.add_argument("--prior-range", type=_pair, default=None, help="known range 'lo,hi' for the mean")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_mean)

    p = sub.add_parser("test", help="private hypothesis test on an input file")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("simple", "one-sided", "two-sided"), required=True)
    p.add_argument("--null")
    p.add_argument("--alt")
    p.add_argument("--family", help="e.g. normal(theta,1), logistic(theta,1), gamma(2,theta)")
    p.add_argument("--theta0", type=float)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mc-reps", type=int, default=199)
    p.add_argument("--epsilon", type=float, required=True)
    _add_schedule_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--json", nargs="?", const="-", default=None,
                   help="also write a JSON detail record (to stdout, or to the given path)")
    p.set_defaults(func=_cmd_test)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, DataError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
