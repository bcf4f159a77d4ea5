"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure during a
run, 3 a --check validation failed.  Errors print as a single machine-
parseable line on stderr: ``reconcap-error code=<n> kind=<name> msg=<text>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import SCENARIO_NAMES, ConfigError, default_config, load_config
from .scenarios import CheckError, run_scenario
from .transport import DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_CHECK = 3


def _fail(code: int, kind: str, msg: str) -> int:
    text = " ".join(str(msg).split())
    print(f"reconcap-error code={code} kind={kind} msg={text}", file=sys.stderr)
    return code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reconcap",
        description="Run capacity, incompatibility, and dissipation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write its outputs")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="path to a JSON experiment config")
    src.add_argument(
        "--scenario", choices=SCENARIO_NAMES, help="run a scenario with its defaults"
    )
    run.add_argument(
        "--out-dir",
        default=None,
        help="output directory (default: RECONCAP_OUT_DIR or <output_dir>/<scenario>)",
    )
    run.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker processes for sweep cells (default: RECONCAP_WORKERS or 1)",
    )
    run.add_argument(
        "--check",
        action="store_true",
        help="validate the scenario's summary after the run",
    )

    val = sub.add_parser("validate", help="parse and validate a config, then exit")
    val.add_argument("config", help="path to a JSON experiment config")

    sub.add_parser("scenarios", help="list available scenarios")
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "version":
        print(__version__)
        return EXIT_OK

    if args.command == "scenarios":
        for name in SCENARIO_NAMES:
            print(name)
        return EXIT_OK

    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except (ConfigError, OSError) as exc:
            return _fail(EXIT_CONFIG, "config", exc)
        print(f"ok scenario={cfg.scenario} dim={cfg.dim} seed={cfg.master_seed}")
        return EXIT_OK

    try:
        if args.config is not None:
            cfg = load_config(args.config)
        else:
            cfg = default_config(args.scenario)
    except (ConfigError, OSError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)

    out_dir = args.out_dir or os.environ.get("RECONCAP_OUT_DIR") or None
    if args.workers is not None:
        workers = args.workers
    else:
        try:
            workers = int(os.environ.get("RECONCAP_WORKERS", "1"))
        except ValueError:
            return _fail(EXIT_CONFIG, "config", "RECONCAP_WORKERS must be an integer")
    if workers < 1:
        return _fail(EXIT_CONFIG, "config", "workers must be >= 1")

    try:
        summary = run_scenario(cfg, out_dir=out_dir, workers=workers, check=args.check)
    except CheckError as exc:
        return _fail(EXIT_CHECK, "check", exc)
    except (DivergenceError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
