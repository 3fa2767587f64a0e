"""
Command-line driver for the reconstruction pipeline.

    python -m src.backend.api.cli all --preset rotator --out runs/rotator --seed 0
    python -m src.backend.api.cli config --defaults
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from src.backend.core.pipelines.reconstruction.core.stages import StageError
from src.backend.core.pipelines.reconstruction.flow.reconstruction_flow import STAGE_ORDER, run_pipeline, run_stage
from src.backend.core.pipelines.reconstruction.pipeline_schema import PipelineConfig, describe_defaults

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gs360", description="Anchor-guided dynamic Gaussian reconstruction")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="PipelineConfig JSON file")
    common.add_argument("--seed", type=int, help="Run seed (overrides the config)")
    common.add_argument("--out", help="Workspace directory for all outputs")
    common.add_argument("--preset", help="Synthetic scene preset (rotator, static, articulated)")
    common.add_argument("--ablation", help="full | no_anchor | no_3d_init")
    common.add_argument("--threads", type=int, help="Worker threads inside tracking and rendering")
    common.add_argument("--bundle", help="Existing scene bundle to read instead of <out>/bundle")
    common.add_argument("--no-prefect", action="store_true", help="Run `all` without the Prefect flow")

    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGE_ORDER:
        sub.add_parser(stage, parents=[common], help=f"Run the {stage} stage")
    sub.add_parser("all", parents=[common], help="Run every stage")
    config_cmd = sub.add_parser("config", parents=[common], help="Print the resolved configuration")
    config_cmd.add_argument("--defaults", action="store_true", help="Print every default with its description")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """
    File values, then CLI overrides.

    Raises:
        ValidationError: On invalid values
        ValueError: On unreadable config files
    """
    overrides: Dict[str, Any] = {
        "seed": args.seed,
        "workspace": args.out,
        "preset": args.preset,
        "ablation": args.ablation,
        "threads": args.threads,
        "bundle_dir": args.bundle,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.no_prefect:
        overrides["use_prefect"] = False
    if args.config:
        return PipelineConfig.from_file(args.config, **overrides)
    return PipelineConfig(**overrides)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "config" and args.defaults:
        print(json.dumps(describe_defaults(), indent=2, sort_keys=True))
        return EXIT_OK

    try:
        config = resolve_config(args)
    except (ValidationError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if args.command == "config":
        print(config.model_dump_json(indent=2))
        return EXIT_OK

    try:
        if args.command == "all":
            result = run_pipeline(config)
            print(f"done: manifest at {result['manifest']}")
        else:
            summary = run_stage(config, args.command)
            print(json.dumps(summary, sort_keys=True, default=str))
    except StageError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
