#!/usr/bin/env python3
"""
Relative ordering on the mixed synthetic benchmark
For each seed: train on the head of every pattern, then simulate none / bo / isb / transformap
and check that the model beats both simplified baselines on coverage and MPKI
improvement on the held-out tails while every prefetcher beats no prefetching
"""
import argparse
import os
import sys
from typing import List

import pandas as pd

from experiment_utils import evaluation_start, prediction_table, simulate_named, train_on_head

from src.traces.trace_io import generate_mixed_benchmark
from src.utils.config_loader import load_run_config

PREFETCHERS = ['none', 'bo', 'isb', 'transformap']
TRAIN_FRACTION = 0.8


def ordering_holds(frame: pd.DataFrame) -> bool:
    """transformap > bo, isb on coverage and MPKI improvement; bo, isb, transformap coverage > 0"""
    by_name = frame.set_index('prefetcher')
    model = by_name.loc['transformap']
    for baseline in ('bo', 'isb'):
        for metric in ('coverage', 'mpki_improvement'):
            if not model[metric] > by_name.loc[baseline, metric]:
                return False
    return all(by_name.loc[name, 'coverage'] > 0 for name in ('bo', 'isb', 'transformap'))


def run_benchmark(config_path=None, seeds: List[int] = (0, 1, 2), length: int = 30000,
                  train_fraction: float = TRAIN_FRACTION) -> pd.DataFrame:
    """Train on the head of each pattern, score every prefetcher on the tails"""
    rows = []
    for seed in seeds:
        config = load_run_config(config_path, overrides={'seed': seed, 'train_fraction': train_fraction},
                                 verbose=True)
        print("\n" + "=" * 80)
        print(f"🧪 MIXED BENCHMARK - seed {seed}")
        print("=" * 80)

        trace = generate_mixed_benchmark(length, seed, config.address_config(), pages=config.synth_pages,
                                         period=config.synth_period, train_fraction=config.train_fraction)
        start = evaluation_start(trace, config)
        model, _ = train_on_head(trace, config)
        predictions = prediction_table(model, trace, config, start)

        for name in PREFETCHERS:
            report = simulate_named(trace, config, name, start,
                                    predictions=predictions if name == 'transformap' else None,
                                    trace_name=f"mixed-seed{seed}")
            rows.append({**report.model_dump(exclude={'notes'}), 'seed': seed})
            print(f"   {name:12s} accuracy {report.accuracy}  coverage {report.coverage}  "
                  f"MPKI improvement {report.mpki_improvement}")
    return pd.DataFrame(rows)


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument('--config', default=None)
    parser.add_argument('--seeds', type=int, nargs='+', default=[0, 1, 2])
    parser.add_argument('--length', type=int, default=30000)
    parser.add_argument('--train-fraction', type=float, default=TRAIN_FRACTION)
    parser.add_argument('--out', default=os.path.join('out', 'benchmark.csv'))
    args = parser.parse_args()

    results = run_benchmark(args.config, args.seeds, args.length, args.train_fraction)
    os.makedirs(os.path.dirname(args.out) or '.', exist_ok=True)
    results.to_csv(args.out, index=False, lineterminator='\n')

    print("\n" + "=" * 80)
    print("📊 ORDERING PER SEED")
    print("=" * 80)
    passed = True
    for seed, frame in results.groupby('seed'):
        holds = ordering_holds(frame)
        passed = passed and holds
        print(f"{'✓' if holds else '✗'} seed {seed}")
    print(f"✓ Results written to {args.out}")
    sys.exit(0 if passed else 1)
