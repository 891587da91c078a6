"""
main.py
=======
CLI entry point for the relay-assisted cognitive OFDMA sweep runner.

This script reads a YAML scenario config, sweeps one parameter over a list of
values, runs independent replications of each selected system at every value
and writes result tables to an output directory.

Responsibilities
----------------
- Parse command-line flags and the environment overrides.
- Load and validate the scenario config and the sweep request.
- Coordinate the replications via `SweepRunner` and write its outputs.

Flags
-----
    --config PATH        scenario YAML (required; an empty file means defaults)
    --sweep NAME         q_act | receive_snr_dB | K | sigma_e2
    --values LIST        comma-separated values, e.g. 0.1,0.2,0.3
    --systems LIST       comma-separated: proposed, baseline0, baseline2, baseline3
    --trials N           replications per (value, system), default 200
    --workers N          worker processes, default 1
    --output-dir PATH    default ./results
    --seed N             master seed, default the config's seed
    --trace LEVEL        0 (metrics), 1 (+ links), 2 (+ curves and dual iterations)

Environment
-----------
- `RELAYSIM_OUTPUT_DIR` (optional): output directory when --output-dir is absent.
- `RELAYSIM_WORKERS` (optional): worker count when --workers is absent.
- `LOG_LEVEL` (optional): Set to 1 (INFO) or 2 (DEBUG) to enable logging.
- `LOG_FILE` (optional): Path to a file where logs should be written.

Exit Codes
----------
- 0: Success
- 1: Config, sweep, replication or output error

Usage
-----
    $ python -m src.main --config scenarios/default.yaml --sweep q_act \\
          --values 0.1,0.2,0.3,0.4,0.5 --systems proposed,baseline2
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import yaml
from loguru import logger
from pydantic import ValidationError

from src.ScenarioConfig import SWEEPABLE_PARAMETERS, load_config
from src.SweepRunner import SweepRunner, SweepSpec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaysim",
        description="Relay-assisted cognitive OFDMA downlink sweep runner",
    )
    parser.add_argument("--config", required=True, help="scenario YAML file")
    parser.add_argument(
        "--sweep", required=True, choices=SWEEPABLE_PARAMETERS, help="swept parameter"
    )
    parser.add_argument(
        "--values", required=True, help="comma-separated parameter values"
    )
    parser.add_argument("--systems", help="comma-separated system names")
    parser.add_argument("--trials", type=int, help="replications per point")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--output-dir", help="directory for the result files")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--trace", type=int, default=0, help="trace level 0-2")
    return parser


def _split(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def spec_from_args(args: argparse.Namespace) -> SweepSpec:
    """
    Build the sweep request; environment overrides apply to absent flags.

    Raises:
        pydantic.ValidationError: on an invalid request
    """
    data: dict[str, Any] = {
        "parameter": args.sweep,
        "values": _split(args.values),
        "trace": args.trace,
        "show_progress": sys.stderr.isatty(),
    }
    if args.systems:
        data["systems"] = _split(args.systems)
    if args.trials is not None:
        data["trials"] = args.trials
    if args.seed is not None:
        data["seed"] = args.seed

    output_dir = args.output_dir or os.getenv("RELAYSIM_OUTPUT_DIR", "").strip()
    if output_dir:
        data["output_dir"] = output_dir
    workers = args.workers
    if workers is None and os.getenv("RELAYSIM_WORKERS", "").strip():
        workers = os.getenv("RELAYSIM_WORKERS", "").strip()
    if workers is not None:
        data["workers"] = workers
    return SweepSpec.model_validate(data)


def run_sweep(config_path: Union[str, Path], spec: SweepSpec) -> int:
    logger.info("Running sweep with config file: {}", config_path)
    try:
        config = load_config(config_path)
    except FileNotFoundError:
        logger.error("Config file not found: {}", config_path)
        return 1
    except yaml.YAMLError as e:
        logger.error("Config file is not valid YAML: {}", e)
        return 1
    except ValueError as e:
        logger.error("Invalid config: {}", e)
        return 1

    try:
        runner = SweepRunner(config, spec)
    except ValueError as e:
        logger.error("Invalid sweep values: {}", e)
        return 1

    try:
        runner.run()
    except Exception as e:
        logger.error("Replication failed: {}", e)
        return 1

    try:
        runner.write_outputs()
    except OSError as e:
        logger.error("Failed to write outputs to '{}': {}", spec.output_dir, e)
        return 1
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
    except ValidationError as e:
        logger.error("Invalid sweep request: {}", e)
        return 1
    return run_sweep(args.config, spec)


def configure_logging() -> None:
    logger.remove()
    log_level_env = os.getenv("LOG_LEVEL", "0").strip()
    log_file = os.getenv("LOG_FILE", "").strip()

    if log_level_env == "2":
        log_level = "DEBUG"
    elif log_level_env == "1":
        log_level = "INFO"
    else:
        return  # Silent -- No Logging

    if log_file:
        try:
            if not os.path.exists(log_file):
                print(f"Log file does not exist: '{log_file}'")
                sys.exit(1)
            logger.add(log_file, rotation="1 MB", level=log_level)
        except Exception as e:
            print(f"Failed to configure log file '{log_file}': {e}")
            exit(1)
    else:
        logger.add(sys.stderr, level=log_level)


if __name__ == "__main__":
    configure_logging()
    sys.exit(main())
