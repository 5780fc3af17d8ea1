"""
Dataset commands: synthetic trace generation and dataset building
"""
import argparse
from typing import Dict, List, Optional

from pydantic import BaseModel

from commands.common import banner, output_paths, require_file, split_point
from src.config import RunConfig
from src.errors import ConfigurationError
from src.traces.labeling import DatasetMeta, build_dataset, label_length_histogram, write_dataset
from src.traces.trace_io import SYNTHETIC_KINDS, SyntheticSpec, generate_mixed_benchmark, generate_synthetic, \
    read_trace, write_trace


class DatasetSummary(BaseModel):
    """Written next to the dataset file"""

    trace: str
    trace_records: int
    training_records: int
    samples: int
    samples_with_labels: int
    label_length_histogram: Dict[int, int]
    history_length: int
    window: int
    k_max: int
    address_bits: int
    page_bits: int
    block_bits: int


def _parse_addresses(raw: Optional[str]) -> Optional[List[int]]:
    if not raw:
        return None
    try:
        return [int(part.strip(), 0) for part in raw.split(',') if part.strip()]
    except ValueError:
        raise ConfigurationError(f"synth_addresses must be comma-separated integers, got {raw!r}") from None


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    """Write a synthetic trace to ``trace.txt`` (or --output)"""
    paths = output_paths(config)
    address = config.address_config()
    kind = config.synth_kind
    if kind == 'mixed':
        records = generate_mixed_benchmark(config.synth_length, config.effective_synth_seed, address,
                                           instr_gap=config.synth_instr_gap, pages=config.synth_pages,
                                           period=config.synth_period, train_fraction=config.train_fraction)
    else:
        if kind not in SYNTHETIC_KINDS:
            raise ConfigurationError(
                f"unsupported synthetic kind '{kind}' (expected one of {', '.join(SYNTHETIC_KINDS + ('mixed',))})"
            )
        spec = SyntheticSpec(
            kind=kind, length=config.synth_length, seed=config.effective_synth_seed, start=config.synth_start,
            stride=config.synth_stride, pages=config.synth_pages, period=config.synth_period,
            addresses=_parse_addresses(config.synth_addresses), instr_gap=config.synth_instr_gap,
        )
        records = generate_synthetic(spec, address)

    target = args.output or paths['trace']
    write_trace(records, target, header=f"synthetic {kind} seed={config.effective_synth_seed} length={len(records)}")
    if config.verbose:
        print(f"✓ Wrote {len(records)} {kind} records to {target}")
    return 0


def cmd_build(args: argparse.Namespace, config: RunConfig) -> int:
    """Label a trace and write ``dataset.tsv`` plus ``dataset_summary.json``"""
    require_file(args.trace, "trace file")
    paths = output_paths(config)
    address = config.address_config()

    if config.verbose:
        banner("📋 BUILD DATASET")
        print(f"📋 Trace: {args.trace}")
    trace = read_trace(args.trace, address)
    cut = split_point(len(trace), config.train_fraction)
    head = trace[:cut]
    if config.verbose and cut < len(trace):
        print(f"✓ Using the first {cut} of {len(trace)} records (train_fraction={config.train_fraction})")

    samples = build_dataset(head, address, config.history_length, config.window, config.k_max,
                            workers=args.workers, verbose=config.verbose)
    meta = DatasetMeta(address_config=address, history_length=config.history_length,
                       window=config.window, k_max=config.k_max)
    write_dataset(samples, paths['dataset'], meta)

    summary = DatasetSummary(
        trace=str(args.trace),
        trace_records=len(trace),
        training_records=len(head),
        samples=len(samples),
        samples_with_labels=sum(1 for s in samples if len(s.target) > 1),
        label_length_histogram=label_length_histogram(samples),
        history_length=config.history_length,
        window=config.window,
        k_max=config.k_max,
        address_bits=address.address_bits,
        page_bits=address.page_bits,
        block_bits=address.block_bits,
    )
    with open(paths['dataset_summary'], 'w', encoding='utf-8') as f:
        f.write(summary.model_dump_json(indent=2) + '\n')

    if config.verbose:
        print(f"📊 Label lengths: {summary.label_length_histogram}")
        print(f"✅ Dataset written to {paths['dataset']}")
        print("=" * 80 + "\n")
    return 0


def register(subparsers):
    """Add the ``synth`` and ``build`` subcommands"""
    synth = subparsers.add_parser('synth', help='Generate a synthetic trace')
    synth.add_argument('--kind', dest='synth_kind', choices=list(SYNTHETIC_KINDS) + ['mixed'], default=None)
    synth.add_argument('--length', dest='synth_length', type=int, default=None)
    synth.add_argument('--synth-seed', dest='synth_seed', type=int, default=None,
                       help='Generator seed (default: --seed)')
    synth.add_argument('--start', dest='synth_start', type=lambda v: int(v, 0), default=None)
    synth.add_argument('--stride', dest='synth_stride', type=int, default=None)
    synth.add_argument('--pages', dest='synth_pages', type=int, default=None)
    synth.add_argument('--period', dest='synth_period', type=int, default=None)
    synth.add_argument('--addresses', dest='synth_addresses', default=None,
                       help='Comma-separated addresses for temporal-stream')
    synth.add_argument('--instr-gap', dest='synth_instr_gap', type=int, default=None)
    synth.add_argument('--train-fraction', dest='train_fraction', type=float, default=None,
                       help='mixed: lay out segment heads before segment tails for this split')
    synth.add_argument('--output', default=None, help='Trace path (default: <out-dir>/trace.txt)')
    synth.set_defaults(handler=cmd_synth)

    build = subparsers.add_parser('build', help='Build a labeled dataset from a trace')
    build.add_argument('trace', help='Trace file')
    build.add_argument('--history-length', dest='history_length', type=int, default=None)
    build.add_argument('--window', type=int, default=None)
    build.add_argument('--k-max', dest='k_max', type=int, default=None)
    build.add_argument('--train-fraction', dest='train_fraction', type=float, default=None)
    build.add_argument('--workers', type=int, default=1, help='Worker processes for labeling')
    build.set_defaults(handler=cmd_build)
