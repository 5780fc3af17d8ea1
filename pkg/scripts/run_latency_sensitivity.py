#!/usr/bin/env python3
"""
Latency sensitivity
Compares how much coverage the model and a degree-1 next-line prefetcher lose
when every prefetch fills ``--delay`` demand accesses late
"""
import argparse
import os
import sys
from typing import Optional

import pandas as pd

from experiment_utils import evaluation_start, prediction_table, simulate_named, train_on_head

from src.traces.trace_io import SyntheticSpec, generate_synthetic
from src.utils.config_loader import load_run_config

TRAIN_FRACTION = 0.8


def relative_loss(on_time: Optional[float], late: Optional[float]) -> Optional[float]:
    """Fraction of on-time coverage lost; None when there was nothing to lose"""
    if not on_time or late is None:
        return None
    return (on_time - late) / on_time


def run_latency(config_path=None, seeds=(0, 1, 2), length: int = 20000, delay: int = 10,
                train_fraction: float = TRAIN_FRACTION) -> pd.DataFrame:
    """Coverage of next-line and the model on the held-out tail, on time and ``delay`` accesses late"""
    rows = []
    for seed in seeds:
        config = load_run_config(config_path, overrides={'seed': seed, 'nextline_degree': 1,
                                                         'train_fraction': train_fraction}, verbose=True)
        print("\n" + "=" * 80)
        print(f"🧪 LATENCY SENSITIVITY - seed {seed}, delay {delay}")
        print("=" * 80)

        trace = generate_synthetic(SyntheticSpec(kind='page-local-permutation', length=length, seed=seed,
                                                 pages=config.synth_pages, period=config.synth_period),
                                   config.address_config())
        start = evaluation_start(trace, config)
        model, _ = train_on_head(trace, config)
        predictions = prediction_table(model, trace, config, start)

        for name in ('nextline', 'transformap'):
            table = predictions if name == 'transformap' else None
            on_time = simulate_named(trace, config, name, start, table, prefetch_delay=0)
            late = simulate_named(trace, config, name, start, table, prefetch_delay=delay)
            loss = relative_loss(on_time.coverage, late.coverage)
            rows.append({'seed': seed, 'prefetcher': name, 'coverage': on_time.coverage,
                         'coverage_delayed': late.coverage, 'relative_loss': loss})
            print(f"   {name:12s} coverage {on_time.coverage} -> {late.coverage}  (loss {loss})")
    return pd.DataFrame(rows)


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument('--config', default=None)
    parser.add_argument('--seeds', type=int, nargs='+', default=[0, 1, 2])
    parser.add_argument('--length', type=int, default=20000)
    parser.add_argument('--delay', type=int, default=10)
    parser.add_argument('--train-fraction', type=float, default=TRAIN_FRACTION)
    parser.add_argument('--out', default=os.path.join('out', 'latency.csv'))
    args = parser.parse_args()

    results = run_latency(args.config, args.seeds, args.length, args.delay, args.train_fraction)
    os.makedirs(os.path.dirname(args.out) or '.', exist_ok=True)
    results.to_csv(args.out, index=False, lineterminator='\n')

    passed = True
    for seed, frame in results.groupby('seed'):
        losses = frame.set_index('prefetcher')['relative_loss']
        holds = pd.notna(losses['transformap']) and pd.notna(losses['nextline']) \
            and losses['transformap'] < losses['nextline']
        passed = passed and holds
        print(f"{'✓' if holds else '✗'} seed {seed}: model loses {losses['transformap']}, "
              f"next-line loses {losses['nextline']}")
    print(f"✓ Results written to {args.out}")
    sys.exit(0 if passed else 1)
