"""
Main entry point - StreetK3 command-line interface
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from controllers.pipeline_controller import VERSION, PipelineController
from models.errors import InputError, PipelineError
from models.settings import ENV_LOG_LEVEL, PipelineConfig
from models.synthetic import SyntheticGenerator
from views.console_report import format_run_summary, format_stage_summary, format_validation

logger = logging.getLogger('streetk3')

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_INTERNAL_ERROR = 2

# PipelineConfig fields that command-line flags can override
OVERRIDES = (
    'detections', 'footprints', 'census', 'schema', 'annotations', 'predictions', 'out_dir',
    'max_range_m', 'seed', 'anova_threshold', 'exhaustive_limit', 'allow_large', 'iou_threshold',
    'mask_iou', 'histogram_bins', 'histogram_lo', 'histogram_hi', 'vulnerable_below', 'threads',
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="INI config file")
    common.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

    stage = argparse.ArgumentParser(add_help=False)
    inputs = stage.add_argument_group('inputs')
    for name in ('detections', 'footprints', 'census', 'schema', 'annotations', 'predictions'):
        inputs.add_argument(f'--{name}', metavar='PATH')
    params = stage.add_argument_group('parameters')
    params.add_argument('--out-dir', dest='out_dir', metavar='DIR')
    params.add_argument('--max-range-m', dest='max_range_m', type=float)
    params.add_argument('--seed', type=int)
    params.add_argument('--anova-threshold', dest='anova_threshold', type=float)
    params.add_argument('--exhaustive-limit', dest='exhaustive_limit', type=int)
    params.add_argument('--allow-large', dest='allow_large', action='store_true', default=None,
                        help="permit more than 100,000 households")
    params.add_argument('--iou-threshold', dest='iou_threshold', type=float)
    params.add_argument('--mask-iou', dest='mask_iou', action='store_true', default=None)
    params.add_argument('--histogram-bins', dest='histogram_bins', type=int)
    params.add_argument('--histogram-lo', dest='histogram_lo', type=float)
    params.add_argument('--histogram-hi', dest='histogram_hi', type=float)
    params.add_argument('--vulnerable-below', dest='vulnerable_below', type=float)
    params.add_argument('--threads', type=int)

    parser = argparse.ArgumentParser(
        prog='streetk3',
        description="Link street-view building attributes to census household vulnerability (K3)")
    parser.add_argument('--version', action='version', version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('validate', parents=[common, stage], help="check every input file")
    commands.add_parser('geocode', parents=[common, stage], help="match detections to footprints")
    commands.add_parser('k3', parents=[common, stage], help="cluster households and compute block K3")
    commands.add_parser('eval', parents=[common, stage], help="score predictions against annotations")
    commands.add_parser('correlate', parents=[common, stage], help="relate building profiles to K3")
    commands.add_parser('run', parents=[common, stage], help="all stages end to end")

    generate = commands.add_parser('generate', parents=[common], help="write a synthetic dataset")
    generate.add_argument('out', metavar='DIR')
    generate.add_argument('--blocks', type=int, default=100)
    generate.add_argument('--households-per-block', type=int, default=50)
    generate.add_argument('--buildings-per-block', type=int, default=15)
    generate.add_argument('--strength', type=float, default=0.8)
    generate.add_argument('--label-noise', type=float, default=0.1)
    generate.add_argument('--seed', type=int, default=0)
    return parser


def configure_logging(args: argparse.Namespace) -> None:
    level = (args.log_level or os.environ.get(ENV_LOG_LEVEL) or ('DEBUG' if args.verbose else 'INFO')).upper()
    if not isinstance(logging.getLevelName(level), int):
        level = 'INFO'
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logging.getLogger().setLevel(level)


def load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.load_from_file(args.config) if args.config else PipelineConfig()
    overrides = {name: getattr(args, name, None) for name in OVERRIDES}
    return config.with_overrides(**overrides)


def dispatch(args: argparse.Namespace) -> int:
    if args.command == 'generate':
        try:
            generator = SyntheticGenerator(
                n_blocks=args.blocks,
                households_per_block=args.households_per_block,
                buildings_per_block=args.buildings_per_block,
                strength=args.strength,
                label_noise=args.label_noise,
                seed=args.seed,
            )
        except ValueError as e:
            raise InputError(str(e))
        PipelineController.cmd_generate(args.out, generator)
        print(f"Synthetic dataset written to {args.out}; run it with --config {os.path.join(args.out, 'pipeline.ini')}")
        return EXIT_OK

    controller = PipelineController(load_config(args))
    if args.command == 'validate':
        report = controller.validate()
        print(format_validation(report))
        return EXIT_OK if report.ok else EXIT_INPUT_ERROR
    if args.command == 'run':
        manifest = controller.cmd_run()
        print(format_run_summary(manifest, controller.config.out_dir))
        return EXIT_OK

    stages = {
        'geocode': controller.cmd_geocode,
        'k3': controller.cmd_k3,
        'eval': controller.cmd_eval,
        'correlate': controller.cmd_correlate,
    }
    paths = stages[args.command]()
    print(format_stage_summary(args.command, paths))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    # Load environment variables
    load_dotenv()

    args = build_parser().parse_args(argv)
    configure_logging(args)

    try:
        return dispatch(args)
    except PipelineError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except Exception:
        logger.exception("Internal error")
        return EXIT_INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
