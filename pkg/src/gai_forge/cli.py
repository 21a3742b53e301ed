"""Command line entry point: ``gai-forge <subcommand> [--config FILE] [--set key=value ...]``.

Exit codes: 0 success, 1 runtime or contract failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiment import (
    SWEEPS,
    ConfigError,
    ExperimentConfig,
    assemble,
    base_model,
    export_samples,
    generate_data,
    parse_value,
    run_ablation,
    run_coverage,
    run_experiment,
)
from .trainkit import Method

log = logging.getLogger("gai_forge")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config (defaults apply to missing keys)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one dotted config key, e.g. --set gai.tau=0.25 (repeatable)")
    common.add_argument("--output", help="output directory (same as --set output=...)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gai-forge", description="Few-shot forgery detection experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="render the real pool and every family dataset")
    sub.add_parser("coverage", parents=[common], help="cross-family detection matrix and taxonomy")
    sub.add_parser("assemble", parents=[common], help="build the few-shot train/test benchmark")
    sub.add_parser("train-base", parents=[common], help="train the majority-only base model per seed")
    run = sub.add_parser("run", parents=[common], help="train and evaluate one method over all seeds")
    run.add_argument("--method", choices=[m.value for m in Method])
    abl = sub.add_parser("ablate", parents=[common], help="sweep one hyper-parameter and tabulate the results")
    abl.add_argument("--sweep", required=True, choices=sorted(SWEEPS))
    abl.add_argument("--values", help="comma separated sweep values (default depends on --sweep)")
    abl.add_argument("--method", choices=[m.value for m in Method])
    exp = sub.add_parser("export-samples", parents=[common], help="dump interpolated samples for inspection")
    exp.add_argument("--seed", type=int, default=None, help="default: first configured seed")
    exp.add_argument("--count", type=int, default=4)
    return p


def _config(args) -> ExperimentConfig:
    overrides = list(args.overrides)
    if getattr(args, "method", None):
        overrides.append(f'method.name="{args.method}"')
    cfg = ExperimentConfig.load(args.config, overrides)
    if args.output:
        cfg.raw["output"] = args.output
    return cfg


def _dispatch(args) -> None:
    cfg = _config(args)
    cmd = args.command
    if cmd == "gen-data":
        print(generate_data(cfg))
    elif cmd == "coverage":
        cov, out = run_coverage(cfg)
        print(cov.to_csv(), end="")
        print(out)
    elif cmd == "assemble":
        print(assemble(cfg))
    elif cmd == "train-base":
        for s in cfg.seeds:
            m = base_model(cfg, s)
            print(f"seed {s}: base checksum {m.checksum()[:16]}")
    elif cmd == "run":
        agg, out = run_experiment(cfg)
        print(f"{cfg.method.value}: " + ", ".join(f"{k} {agg.mean[k]:.2f}±{agg.std[k]:.2f}" for k in agg.mean))
        print(out)
    elif cmd == "ablate":
        values = None
        if args.values:
            values = [parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("--values is empty")
        _, out = run_ablation(cfg, args.sweep, values)
        print(out.read_text(), end="")
        print(out)
    elif cmd == "export-samples":
        if args.count < 1:
            raise ConfigError("--count must be >= 1")
        print(export_samples(cfg, cfg.seeds[0] if args.seed is None else args.seed, args.count))


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"gai-forge: usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"gai-forge: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
