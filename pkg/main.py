"""
Command-line entry point for the TransforMAP prefetching toolkit

Exit codes: 0 success, 2 configuration error, 3 input error, 4 runtime failure.
"""
import argparse
import sys
import traceback
from typing import Dict, List, Optional

from commands import dataset_commands, model_commands, simulation_commands
from src.config import Config, RunConfig
from src.errors import TransformapError, exit_code_for
from src.utils.config_loader import load_run_config, parse_overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='transformap',
        description='Learn memory-access patterns with a Transformer and evaluate them as a cache prefetcher',
    )
    parser.add_argument('--config', default=None, help='Flat key = value experiment file')
    parser.add_argument('--seed', type=int, default=None, help='Master seed for every random sub-stream')
    parser.add_argument('--out-dir', dest='out_dir', default=None, help='Directory for all outputs')
    parser.add_argument('--set', dest='settings', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one config key (repeatable)')
    parser.add_argument('--quiet', action='store_true', help='Suppress progress output')

    subparsers = parser.add_subparsers(dest='command', required=True)
    dataset_commands.register(subparsers)
    model_commands.register(subparsers)
    simulation_commands.register(subparsers)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, object]:
    """Command-line values whose destination is a RunConfig key (None = flag not given)"""
    overrides = {key: getattr(args, key) for key in RunConfig.model_fields if hasattr(args, key)}
    if args.quiet:
        overrides['verbose'] = False
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        Config.validate()
        config = load_run_config(args.config, overrides=collect_overrides(args),
                                 settings=parse_overrides(args.settings), verbose=not args.quiet)
        return args.handler(args, config)
    except TransformapError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return exit_code_for(e)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        print(f"❌ Unexpected error: {e}", file=sys.stderr)
        if Config.DEBUG_CHECKS:
            traceback.print_exc()
        return exit_code_for(e)


if __name__ == '__main__':
    sys.exit(main())
