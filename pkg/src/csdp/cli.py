"""Command-line front end.

    csdp run --config fig3a --out results/
    csdp run --config my_sweep.yaml --seed 7 --threads 4 --format json
    csdp acceptance --seed 0 --out results/

Exit codes: 0 success, 1 acceptance or invariant failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .model import DEFAULT_ENUMERATION_CAP, ModelError
from .sweeps import PRESETS, load_config, run

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csdp",
        description="Leakage bounds and release experiments for correlated sequences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a sweep from a preset or config file")
    run_p.add_argument("--config", required=True,
                       help=f"preset name ({', '.join(sorted(PRESETS))}) or YAML path")
    run_p.add_argument("--seed", type=int, default=None, help="root seed override")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--threads", type=int, default=None)
    run_p.add_argument("--cap", type=int, default=None,
                       help="enumeration cap on the product state space")
    run_p.add_argument("--format", choices=("csv", "json"), default=None)

    acc_p = sub.add_parser("acceptance", help="run the release-gate criteria")
    acc_p.add_argument("--seed", type=int, default=0)
    acc_p.add_argument("--out", default=None, help="directory for the report file")
    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.cap is not None:
            overrides["cap"] = args.cap
        if args.format is not None:
            overrides["fmt"] = args.format
        if overrides:
            config = replace(config, **overrides)
    except (ModelError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, paths, violations = run(config)
    except (ModelError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in paths:
        print(f"wrote {path}")
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_VIOLATION if code else EXIT_OK


def _cmd_acceptance(args) -> int:
    from .acceptance import acceptance

    results = acceptance(seed=args.seed)
    lines = [r.line() for r in results]
    body = "\n".join(lines) + "\n"
    print(body, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "acceptance.txt")
        with open(path, "w") as fh:
            fh.write(body)
        print(f"wrote {path}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches the config-error code
        return int(exc.code) if exc.code else EXIT_OK
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_acceptance(args)


if __name__ == "__main__":
    sys.exit(main())
