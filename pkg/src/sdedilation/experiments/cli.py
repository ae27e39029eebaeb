"""Command line entry point.

Exit codes: 0 success, 1 acceptance failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .builtins import BUILTINS
from .config import EXPERIMENTS, ConfigError, default_config, load_config


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdedilation", description="Dilated SDE emulation experiments.")
    sub = p.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file or by name with defaults")
    run.add_argument("name", nargs="?", choices=EXPERIMENTS, help="experiment to run with its default config")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--out-dir", default="results")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--threads", type=int, default=1)
    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("--config", required=True)
    sub.add_parser("list-builtins", help="list the built-in systems and experiments")
    return p


def _load(args):
    if args.config and args.name:
        raise ConfigError("give either an experiment name or --config, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.name:
        cfg = default_config(args.name)
    else:
        raise ConfigError("run needs an experiment name or --config")
    if getattr(args, "seed", None) is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "list-builtins":
        for name, fn in BUILTINS.items():
            doc = (fn.__doc__ or "").strip().splitlines()
            print(f"{name}: {doc[0] if doc else ''}")
        print("experiments: " + ", ".join(EXPERIMENTS))
        return 0
    try:
        if args.verb == "validate":
            cfg = load_config(args.config)
            print(f"{args.config}: ok ({cfg.experiment})")
            return 0
        cfg = _load(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2
    from .runners import run_experiment

    summary, ok = run_experiment(cfg, args.out_dir, threads=args.threads)
    print(f"{cfg.experiment}: {'ok' if ok else 'FAILED'} ({summary['runtime']:.1f}s) -> {args.out_dir}/{cfg.experiment}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
