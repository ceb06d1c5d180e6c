"""Command-line front end: validate, run, sweep and compare scenarios.

Exit codes: 0 success, 1 validation failure (malformed or ill-posed
scenario), 2 runtime error (including a missing stage prerequisite).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError, SweepSpec
from .model import InvalidNetworkError, StructuralError
from .pipeline import STAGES, Pipeline, StageError, run_sweep, validation_summary

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load(args):
    cfg = config_mod.load(args.config)
    return cfg.with_overrides(seed=getattr(args, "seed", None), horizon=getattr(args, "horizon", None))


def _out(args, cfg) -> Path:
    return Path(args.out) if args.out else cfg.output_dir


def cmd_validate(args) -> int:
    cfg = _load(args)
    ok, lines = validation_summary(cfg)
    print("\n".join(lines))
    print("valid" if ok else "INVALID")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_run(args) -> int:
    cfg = _load(args)
    stages = list(STAGES) if args.all or not args.stage else args.stage
    Pipeline(cfg, _out(args, cfg)).run(stages)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    Pipeline(cfg, _out(args, cfg)).run(["control", "compare"])
    return EXIT_OK


def _range(text, n, what):
    parts = [float(v) for v in text.split(":")]
    if len(parts) != n:
        raise ValueError(f"--{what} expects {n} colon-separated numbers, got {text!r}")
    return parts


def cmd_sweep(args) -> int:
    cfg = _load(args)
    spec = cfg.sweep
    if any(v is not None for v in (args.node, args.T1, args.s0, args.k_eval)):
        if spec is None and not all(v is not None for v in (args.T1, args.s0, args.k_eval)):
            raise ValueError("without a sweep section, --T1, --s0 and --k-eval are all required")
        node = spec.node if spec else 0
        if args.node is not None:
            if args.node not in cfg.names:
                raise ValueError(f"unknown node {args.node!r}")
            node = cfg.names.index(args.node)
        T1 = spec.T1 if spec else None
        if args.T1 is not None:
            lo, hi = _range(args.T1, 2, "T1")
            T1 = np.arange(int(lo), int(hi) + 1)
        s0 = spec.s0_hat if spec else None
        if args.s0 is not None:
            lo, hi, step = _range(args.s0, 3, "s0")
            s0 = np.round(np.arange(lo, hi + step / 2, step), 12)
        spec = SweepSpec(node, T1, s0, args.k_eval if args.k_eval is not None else spec.k_eval)
    run_sweep(cfg, _out(args, cfg), spec)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netsir", description="Networked SIR simulation, estimation and control")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("config", help="scenario file, or builtin:NAME for a shipped one")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--horizon", type=int, default=None, help="override the scenario horizon")
        if out:
            p.add_argument("--out", default=None, help="run directory (default: scenario output_dir)")

    p = sub.add_parser("validate", help="check a scenario and print a report")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run pipeline stages and write CSV outputs")
    common(p)
    p.add_argument("--stage", action="append", choices=STAGES, help="stage to run (repeatable)")
    p.add_argument("--all", action="store_true", help="run every stage")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="estimation-error surface over T1 and s_hat(0)")
    common(p)
    p.add_argument("--node", default=None, help="node name to sweep")
    p.add_argument("--T1", default=None, help="start-day range LO:HI (inclusive)")
    p.add_argument("--s0", default=None, help="initial-guess grid LO:HI:STEP")
    p.add_argument("--k-eval", type=int, default=None, help="step at which the error is measured")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="controlled vs uncontrolled runs and release windows")
    common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidNetworkError as exc:
        print(f"validation failed:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, StructuralError) as exc:
        print(f"structural error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        msg = str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID if msg.startswith("scenario fails validation") else EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
