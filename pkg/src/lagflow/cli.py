"""Command-line entry point: ``simulate run`` and ``simulate validate``.

Heavy numerical imports are deferred until after ``--threads`` has pinned the
BLAS/FFT thread-count environment variables, so single-threaded runs are
genuinely single-threaded and bitwise reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Run or validate incompressible-flow scenario "
                    "configurations.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser(
        "run", help="execute a scenario and write its artifacts")
    run_p.add_argument("config", help="path to a JSON configuration file")
    run_p.add_argument("--threads", type=int, default=1,
                       help="worker threads for the numerics libraries "
                            "(default 1; pinned before those libraries load)")
    run_p.add_argument("--output", default=None,
                       help="artifact directory (overrides SIM_OUTPUT_DIR "
                            "and the configuration's output_dir)")

    val_p = sub.add_parser(
        "validate", help="check a configuration and list the checks it runs")
    val_p.add_argument("config", help="path to a JSON configuration file")
    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise _ConfigFileError(f"configuration file not found: {path}")
    except json.JSONDecodeError as exc:
        raise _ConfigFileError(
            f"configuration is not valid JSON: {path}: line {exc.lineno} "
            f"column {exc.colno}: {exc.msg}")


class _ConfigFileError(Exception):
    pass


def _resolve_output_dir(args, config: dict) -> str:
    if args.output:
        return args.output
    env = os.environ.get("SIM_OUTPUT_DIR")
    if env:
        return env
    configured = config.get("output_dir")
    if configured:
        return configured
    return os.path.join(os.getcwd(), "sim_output")


def _cmd_run(args) -> int:
    if args.threads < 1:
        print("error: --threads must be a positive integer", file=sys.stderr)
        return EXIT_CONFIG
    for var in _THREAD_VARS:
        os.environ.setdefault(var, str(args.threads))

    try:
        raw = _load_config(args.config)
    except _ConfigFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from . import scenarios
    from .errors import ConfigError, SimulationError

    try:
        config = scenarios.parse_config(raw)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    output_dir = _resolve_output_dir(args, config)
    try:
        result = scenarios.run_scenario(config, output_dir=output_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_FAILURE

    steps = max(len(result.records) - 1, 0)
    print(f"scenario {result.scenario}: {steps} steps in "
          f"{result.runtime_seconds:.2f}s; artifacts in {output_dir}")
    for check in result.checks:
        print(check.line())
    if not result.checks:
        print("no checks enabled for this configuration")
    if result.all_passed:
        return EXIT_OK
    print("one or more checks failed", file=sys.stderr)
    return EXIT_FAILURE


def _cmd_validate(args) -> int:
    try:
        raw = _load_config(args.config)
    except _ConfigFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from . import scenarios
    from .errors import ConfigError

    try:
        config = scenarios.parse_config(raw)
        lines = scenarios.check_descriptions(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    print(f"configuration valid: scenario {config['scenario']}")
    if "time" in config and "steps" in config.get("time", {}):
        tsec = config["time"]
        print(f"  {tsec['steps']} steps of dt={tsec['dt']} "
              f"to T={tsec['T']}, reporting every {tsec['report_every']}")
    if lines:
        print("checks that will run:")
        for line in lines:
            print(f"  - {line}")
    else:
        print("warning: no checks enabled for this configuration")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
