"""Command-line entry point.

Subcommands: rate, renorm, deviation, selftest.  Flags override values
from an optional key=value config file (--config); the TORUSLAB_THREADS
environment variable supplies the worker count when --threads is absent.

T-grid syntax: either a comma list ("50,200") or "a:b:dyadic" for the
powers-of-two sweep a, 2a, 4a, ..., up to b.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (ExperimentConfig, run_deviation_experiment, run_rate_experiment,
                      run_renorm_experiment, run_selftest)


def parse_t_grid(text: str) -> tuple:
    if ":" in text:
        lo_s, hi_s, kind = text.split(":")
        if kind != "dyadic":
            raise ValueError(f"unknown t-grid kind {kind!r}")
        lo, hi = float(lo_s), float(hi_s)
        grid = []
        t = lo
        while t <= hi * (1 + 1e-12):
            grid.append(t)
            t *= 2.0
        return tuple(grid)
    return tuple(float(x) for x in text.split(",") if x)


def parse_drift(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x)


def parse_eps(text: str):
    if text == "paper" or text.startswith("logpow:"):
        return text
    return float(text)


def read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


_PARSERS = {
    "alpha": float, "dim": int, "drift": parse_drift, "tgrid": parse_t_grid,
    "replicas": int, "estimator": str, "grid_n": int, "eps": parse_eps,
    "seed": int, "out": str, "threads": int, "step": lambda s: s if s == "auto" else float(s),
    "p": float, "g_mode": int, "slope_tol": float, "crosscheck_replicas": int,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toruslab",
                                     description="occupation-measure convergence laboratory "
                                                 "on flat tori")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in ("rate", "renorm", "deviation", "selftest"):
        sp = sub.add_parser(kind)
        sp.add_argument("--config", default=None, help="key=value config file")
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--dim", type=int, default=None)
        sp.add_argument("--drift", type=str, default=None, help="z1,...,zd")
        sp.add_argument("--tgrid", type=str, default=None, help="'a:b:dyadic' or 'a,b,c'")
        sp.add_argument("--replicas", type=int, default=None)
        sp.add_argument("--estimator", type=str, default=None,
                        choices=["circular", "discrete_ot", "spectral_proxy"])
        sp.add_argument("--grid-n", dest="grid_n", type=int, default=None)
        sp.add_argument("--eps", type=str, default=None,
                        help="'paper', a number, or 'logpow:G'")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--step", type=str, default=None, help="'auto' or a number")
        sp.add_argument("--p", type=float, default=None)
        sp.add_argument("--g-mode", dest="g_mode", type=int, default=None)
        sp.add_argument("--slope-tol", dest="slope_tol", type=float, default=None)
        sp.add_argument("--crosscheck-replicas", dest="crosscheck_replicas",
                        type=int, default=None)
    return parser


_CFG_FIELDS = {
    "alpha": "alpha", "dim": "dim", "drift": "drift", "tgrid": "t_grid",
    "replicas": "replicas", "estimator": "estimator", "grid_n": "grid_n",
    "eps": "eps_policy", "seed": "seed", "out": "out", "threads": "threads",
    "step": "step", "p": "p", "g_mode": "g_mode", "slope_tol": "slope_tol",
    "crosscheck_replicas": "crosscheck_replicas",
}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    merged: dict = {}
    if getattr(args, "config", None):
        raw = read_config_file(args.config)
        for key, text in raw.items():
            if key not in _PARSERS:
                raise ValueError(f"unknown config key {key!r}")
            merged[_CFG_FIELDS[key]] = _PARSERS[key](text)
    for key, field_name in _CFG_FIELDS.items():
        cli_attr = {"tgrid": "tgrid", "eps": "eps"}.get(key, key)
        value = getattr(args, cli_attr, None)
        if value is None:
            continue
        parse = _PARSERS[key]
        merged[field_name] = parse(value) if isinstance(value, str) else value
    kind_defaults = {
        "rate": {"t_grid": parse_t_grid("64:16384:dyadic")},
        "renorm": {"t_grid": parse_t_grid("256:16384:dyadic"), "alpha": 0.5,
                   "dim": 3, "replicas": 32, "estimator": "spectral_proxy"},
        "deviation": {"t_grid": (50.0, 200.0), "replicas": 10_000},
        "selftest": {"t_grid": (1.0, 2.0)},
    }
    for field_name, value in kind_defaults[args.kind].items():
        merged.setdefault(field_name, value)
    return ExperimentConfig(kind=args.kind, **merged)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.kind == "selftest":
        seed = args.seed if args.seed is not None else 20260810
        report = run_selftest(seed=seed)
        return 0 if report.passed else 1
    cfg = config_from_args(args)
    if args.kind == "rate":
        report = run_rate_experiment(cfg)
        pred = report.prediction
        print(f"rate[{cfg.estimator}] slope = {report.slope:+.4f} "
              f"(+- {report.slope_stderr:.4f}), predicted {pred.exponent:+.4f} "
              f"[{pred.regime}], tol {report.tolerance}: "
              f"{'PASS' if report.passed else 'FAIL'}")
        return 0 if report.passed else 1
    if args.kind == "renorm":
        report = run_renorm_experiment(cfg)
        last = report.rows[-1]
        print(f"renorm ratio at T={last[0]:g}: {last[1]:.5f} "
              f"(target {report.target:.5f}); trend {'ok' if report.trend_ok else 'BROKEN'}, "
              f"within 30%: {report.within_30pct}: "
              f"{'PASS' if report.passed else 'FAIL'}")
        return 0 if report.passed else 1
    report = run_deviation_experiment(cfg)
    print(f"deviation: gamma = {report.gamma_fitted:.4g}, sigma^2 = {report.sigma_sq:.4g}, "
          f"m = {report.m_value:.4g}, dominance "
          f"{'holds at all validation points' if report.dominance else 'FAILS'}")
    return 0 if report.dominance else 1


if __name__ == "__main__":
    sys.exit(main())
