"""
Simulation commands: cache simulation and report merging
"""
import argparse
import os
from pathlib import Path

from commands.common import banner, output_paths, require_file, tail_start
from commands.model_commands import load_model, model_geometry
from src.config import RunConfig
from src.errors import ConfigurationError
from src.model.inference import read_predictions
from src.prefetchers import build_prefetcher
from src.simulator.simulate import average_by_prefetcher, merge_reports, simulate, write_sim_report
from src.traces.trace_io import read_trace


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    """Simulate one prefetcher against the no-prefetch baseline; writes ``sim_<prefetcher>.json/.csv``"""
    require_file(args.trace, "trace file")
    paths = output_paths(config)
    address = config.address_config()
    name = config.prefetcher

    if config.verbose:
        banner(f"🧪 SIMULATE - prefetcher={name}")
        print(f"📋 Trace: {args.trace}")
        print(f"📋 Cache: {config.cache_sets} sets x {config.cache_ways} ways, prefetch_delay={config.prefetch_delay}")

    trace = read_trace(args.trace, address)
    start = tail_start(len(trace), config.train_fraction)
    first_position = start or 0
    evaluated = trace[first_position:]

    prefetcher = None
    prediction_source = None
    if name == 'transformap':
        if config.predictions:
            require_file(config.predictions, "predictions file")
            prediction_source = read_predictions(config.predictions)
        elif config.checkpoint:
            model, meta = load_model(config, config.checkpoint)
            _, history_length, k_max = model_geometry(config, meta)
            live_config = config.model_copy(update={'history_length': history_length, 'k_max': k_max})
            prefetcher = build_prefetcher(name, live_config, model=model)
        else:
            raise ConfigurationError("prefetcher 'transformap' needs --checkpoint or --predictions")
    else:
        prefetcher = build_prefetcher(name, config)

    report = simulate(evaluated, prefetcher, config.cache_config(), address, prediction_source=prediction_source,
                      prefetch_delay=config.prefetch_delay, first_position=first_position,
                      trace_name=Path(args.trace).stem, verbose=config.verbose)
    json_path = os.path.join(config.out_dir, f"sim_{report.prefetcher}.json")
    csv_path = os.path.join(config.out_dir, f"sim_{report.prefetcher}.csv")
    write_sim_report(report, json_path, csv_path)
    if config.verbose:
        print(f"✅ Report written to {json_path}")
        print("=" * 80 + "\n")
    return 0


def cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    """Merge simulation CSVs into ``report.csv`` (and ``report_average.csv`` for several traces)"""
    for path in args.csv:
        require_file(path, "simulation CSV")
    paths = output_paths(config)
    merged = merge_reports(args.csv)
    merged.to_csv(paths['report'], index=False, lineterminator='\n')
    averaged = average_by_prefetcher(merged)
    if averaged is not None:
        averaged.to_csv(paths['report_average'], index=False, lineterminator='\n')

    if config.verbose:
        banner("📊 PREFETCHER COMPARISON")
        print(merged[['trace', 'prefetcher', 'accuracy', 'coverage', 'mpki_improvement']].to_string(index=False))
        if averaged is not None:
            print("-" * 80)
            print(averaged.to_string(index=False))
        print("=" * 80)
        print(f"✓ Wrote {paths['report']}")
    return 0


def register(subparsers):
    """Add the ``simulate`` and ``report`` subcommands"""
    sim = subparsers.add_parser('simulate', help='Simulate a prefetcher on a trace')
    sim.add_argument('trace', help='Trace file')
    sim.add_argument('--prefetcher', choices=['none', 'nextline', 'bo', 'isb', 'transformap'], default=None)
    sim.add_argument('--checkpoint', default=None, help='Model file for live transformap prediction')
    sim.add_argument('--predictions', default=None, help='Predictions file to replay for transformap')
    sim.add_argument('--prefetch-delay', dest='prefetch_delay', type=int, default=None)
    sim.add_argument('--cache-sets', dest='cache_sets', type=int, default=None)
    sim.add_argument('--cache-ways', dest='cache_ways', type=int, default=None)
    sim.add_argument('--train-fraction', dest='train_fraction', type=float, default=None)
    sim.set_defaults(handler=cmd_simulate)

    report = subparsers.add_parser('report', help='Merge simulation CSVs into one comparison table')
    report.add_argument('csv', nargs='+', help='sim_<prefetcher>.csv files')
    report.set_defaults(handler=cmd_report)
