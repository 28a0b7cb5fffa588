"""Command-line interface.

Subcommands: simulate, fit, study, hybrid, report. Every failure exits
nonzero with a single machine-parseable stderr line of the form
"<ERROR_CLASS>: <message>" where the class is one of E_PARSE,
E_DIM_MISMATCH, E_METHOD_INPUT, E_CONFIG, E_IO. The TWOSTAGE_SEED
environment variable overrides any configured seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from ._version import __version__
from .engines import (ChainConfig, METHOD_KINDS, MethodSpec, StageOneInfo,
                      run_chain)
from .errors import (ConfigError, DimensionMismatchError, MethodInputError,
                     NotPositiveDefiniteError, ParseError, TwoStageError)
from .experiments import (HybridDesign, hybrid_generate, hybrid_mean_variant,
                          mortality_standin, run_study,
                          simulate_replication_data)
from .io import (ingest_dataset, ingest_draws, load_fit, load_study,
                 resolve_design, write_dataset, write_draws, write_fit,
                 write_report, write_simulation, write_study, _fmt,
                 _write_csv, _write_json)
from .model import (PriorConfig, analytic_partial_posterior, equicorrelation)
from .rng import SeededStream

DEFAULT_SEED = 20260810
STANDIN_DESIGN = "mortality-standin"


def _error_class(exc: Exception) -> str:
    if isinstance(exc, ParseError):
        return "E_PARSE"
    if isinstance(exc, DimensionMismatchError):
        return "E_DIM_MISMATCH"
    if isinstance(exc, MethodInputError):
        return "E_METHOD_INPUT"
    if isinstance(exc, (ConfigError, NotPositiveDefiniteError, ValueError)):
        return "E_CONFIG"
    if isinstance(exc, OSError):
        return "E_IO"
    if isinstance(exc, TwoStageError):
        return "E_CONFIG"
    return "E_CONFIG"


def _env_seed() -> int | None:
    raw = os.environ.get("TWOSTAGE_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"TWOSTAGE_SEED must be an integer, got {raw!r}") from None


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _build(cls, data: dict, label: str):
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"invalid {label} settings: {exc}") from exc


def cmd_simulate(args) -> int:
    seed = _env_seed() if _env_seed() is not None else args.seed
    if args.design == STANDIN_DESIGN:
        dataset, draws, meta = mortality_standin(seed if seed is not None
                                                 else 20260404)
        write_simulation(dataset, draws, args.out, meta=meta)
        print(f"wrote stand-in dataset (n={dataset.n}, p={dataset.p}, "
              f"draws={draws.n_draws}) to {args.out}")
        return 0
    design = resolve_design(args.design)
    if seed is not None:
        design = dataclasses.replace(design, base_seed=seed)
    stream = SeededStream(design.base_seed, 0)
    data = simulate_replication_data(design, stream)
    write_simulation(data.dataset, data.draws, args.out, z=data.z,
                     meta={"design": design.to_dict()})
    if data.test_dataset is not None:
        test_dir = os.path.join(args.out, "test")
        os.makedirs(test_dir, exist_ok=True)
        write_dataset(data.test_dataset, test_dir, z=data.test_z)
        write_draws(data.test_draws, os.path.join(test_dir, "draws.csv"))
    print(f"wrote simulated dataset for design {design.name!r} to {args.out}")
    return 0


def cmd_fit(args) -> int:
    if args.method not in METHOD_KINDS:
        raise ConfigError(f"unknown method {args.method!r}; "
                          f"expected one of {METHOD_KINDS}")
    config = _load_config(args.config)
    draws = ingest_draws(args.draws)
    dataset, z = ingest_dataset(args.data, covariates_path=args.covariates,
                                log_outcome=args.log_outcome)
    if draws.n_units != dataset.n:
        raise DimensionMismatchError(
            f"draws cover {draws.n_units} units but data has {dataset.n} rows")

    prior = _build(PriorConfig, config.get("prior", {}), "prior")
    chain_cfg = dict(config.get("chain", {}))
    if args.store_zeta:
        chain_cfg["store_zeta"] = True
    chain = _build(ChainConfig, chain_cfg, "chain")
    spec = _build(MethodSpec, {"kind": args.method, **config.get("method", {})},
                  "method")

    stage_one = None
    if args.method == "oracle-gibbs":
        s1 = config.get("stage_one")
        if s1 is None:
            raise MethodInputError(
                "oracle-gibbs requires stage_one covariance settings in the config")
        if z is None:
            raise MethodInputError("oracle-gibbs requires a z column in the data")
        try:
            cov_u = equicorrelation(dataset.n, s1["sigma_u_sq"], s1.get("rho", 0.0))
            cov_z = equicorrelation(dataset.n, s1["sigma_zeta_sq"], s1.get("rho", 0.0))
        except KeyError as exc:
            raise ConfigError(f"stage_one config missing {exc}") from None
        mean, cov = analytic_partial_posterior(z, cov_u, cov_z)
        stage_one = StageOneInfo(zeta_hat=mean, cov=cov)
    if args.method == "plugin-z" and z is None:
        raise MethodInputError("plugin-z requires a z column in the data")

    env = _env_seed()
    seed = env if env is not None else config.get("seed", DEFAULT_SEED)
    stream = SeededStream(int(seed), int(config.get("stream_id", 0)))
    sample = run_chain(dataset, draws, spec, prior, chain, stream,
                       stage_one=stage_one, z=z)
    os.makedirs(args.out, exist_ok=True)
    write_fit(sample, dataset, args.out, z=z)
    print(f"fit {args.method} for {sample.n_retained} retained sweeps; "
          f"posterior mean theta_zeta={float(np.mean(sample.theta_zeta)):.4f}; "
          f"wrote {args.out}")
    return 0


def cmd_study(args) -> int:
    design = resolve_design(args.design)
    replacements = {}
    if args.reps is not None:
        replacements["reps"] = args.reps
    env = _env_seed()
    if env is not None:
        replacements["base_seed"] = env
    if replacements:
        design = dataclasses.replace(design, **replacements)
    parallel = args.parallel if args.parallel is not None else os.cpu_count()
    result = run_study(design, parallel=parallel)
    write_study(result, args.out)
    n_fail = len(result.failures)
    print(f"study {design.name!r}: {design.reps} replications, "
          f"{n_fail} failures; wrote {args.out}")
    return 0


def cmd_hybrid(args) -> int:
    sample, dataset, _ = load_fit(args.source)
    env = _env_seed()
    design = HybridDesign(source=sample, dataset=dataset,
                          theta_star=args.theta_star,
                          num_datasets=args.num_datasets,
                          seed=env if env is not None else args.seed)
    os.makedirs(args.out, exist_ok=True)
    if dataset.p:
        _write_csv(os.path.join(args.out, "covariates.csv"),
                   [f"x_{j + 1}" for j in range(dataset.p)],
                   ([_fmt(v) for v in row] for row in dataset.X))
    datasets = hybrid_generate(design)
    width = len(str(len(datasets)))
    for k, hybrid in enumerate(datasets, start=1):
        _write_csv(os.path.join(args.out, f"hybrid_{k:0{width}d}.csv"), ["y"],
                   ([_fmt(v)] for v in hybrid.y))
    if args.mean_variant:
        mean_ds = hybrid_mean_variant(design)
        _write_csv(os.path.join(args.out, "hybrid_mean.csv"), ["y"],
                   ([_fmt(v)] for v in mean_ds.y))
    _write_json({"kind": "hybrid", "version": __version__,
                 "theta_star": design.theta_star,
                 "num_datasets": design.num_datasets,
                 "seed": design.seed,
                 "log_outcome": dataset.log_outcome,
                 "source_sweeps": [int(d.truth["source_sweep"]) for d in datasets]},
                os.path.join(args.out, "meta.json"))
    print(f"wrote {len(datasets)} hybrid datasets (theta_star={args.theta_star}) "
          f"to {args.out}")
    return 0


def cmd_report(args) -> int:
    result = load_study(args.in_dir)
    out = args.out if args.out else os.path.join(args.in_dir, "report")
    write_report(result, out, fmt=args.format)
    print(f"wrote report for design {result.design.name!r} to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twostage",
        description="Joint Bayesian inference for two-stage models")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one dataset from a design")
    p.add_argument("--design", required=True,
                   help=f"built-in design name, design JSON file, or "
                        f"'{STANDIN_DESIGN}'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one method to a dataset")
    p.add_argument("--method", required=True,
                   help="one of " + ", ".join(METHOD_KINDS))
    p.add_argument("--draws", required=True, help="stage-one draws CSV")
    p.add_argument("--data", required=True, help="dataset CSV (column y, optional z)")
    p.add_argument("--covariates", default=None, help="extra covariate CSV")
    p.add_argument("--log-outcome", action="store_true")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--store-zeta", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("study", help="run a full simulation study")
    p.add_argument("--design", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--parallel", type=int, default=None,
                   help="worker count (default: all cores); results are "
                        "independent of this value")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("hybrid", help="generate hybrid datasets from a stored fit")
    p.add_argument("--source", required=True, help="fit output directory")
    p.add_argument("--theta-star", type=float, required=True)
    p.add_argument("--num-datasets", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean-variant", action="store_true",
                   help="also write the sweep-averaged variant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hybrid)

    p = sub.add_parser("report", help="aggregate a study directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"{_error_class(exc)}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
