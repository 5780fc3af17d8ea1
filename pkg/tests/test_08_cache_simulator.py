import os
import sys

import pandas as pd
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import AddressConfig, CacheConfig
from src.errors import InputError, SchemaError
from src.prefetchers import NextLinePrefetcher, NoPrefetcher, Prefetcher
from src.simulator import (REPORT_COLUMNS, SetAssociativeCache, SimReport, average_by_prefetcher, merge_reports,
                           mpki_scale, run_pass, simulate, write_sim_report)
from src.traces.trace_io import SyntheticSpec, TraceRecord, generate_synthetic

GEOMETRY = AddressConfig()
A, B, C = 0x1000, 0x2000, 0x3000


class FutureOracle(Prefetcher):
    """Prefetches exactly the next demand address"""

    name = 'oracle'

    def __init__(self, trace):
        super().__init__(GEOMETRY)
        self.addresses = [r.addr for r in trace]
        self.position = 0

    def on_access(self, pc, addr, was_miss):
        self.position += 1
        if self.position < len(self.addresses):
            return [self.addresses[self.position]]
        return []


def stride_trace(length=100):
    return generate_synthetic(SyntheticSpec(kind='constant-stride', length=length, start=0x100000, stride=64))


def test_lru_hit_after_reuse():
    print("\n" + "=" * 50)
    print("TEST: LRU micro-cases")
    print("=" * 50)

    cache = SetAssociativeCache(CacheConfig(sets=1, ways=2))
    assert [cache.access(a) for a in (A, B, A)] == [False, False, True]

    cache = SetAssociativeCache(CacheConfig(sets=1, ways=2))
    assert [cache.access(a) for a in (A, B, C, A)] == [False, False, False, False]
    assert cache.counters.demand_misses == 4
    assert cache.occupancy() == 2
    print("\n✅ LRU micro-cases passed")


def test_lru_order_updated_on_hit():
    cache = SetAssociativeCache(CacheConfig(sets=1, ways=2))
    for a in (A, B, A, C):
        cache.access(a)
    assert cache.contains(A) and cache.contains(C) and not cache.contains(B)


def test_set_index_is_block_mod_sets():
    cache = SetAssociativeCache(CacheConfig(sets=4, ways=1))
    block = 64
    results = [cache.access(a) for a in (0, 4 * block, 0, block, 0)]
    # blocks 0 and 4 share set 0, block 1 lives in set 1
    assert results == [False, False, False, False, True]


def test_prefetch_then_demand_is_useful():
    cache = SetAssociativeCache(CacheConfig(sets=1, ways=4))
    assert cache.access(A, is_prefetch=True) is False
    assert cache.access(A) is True
    assert cache.access(A) is True
    counters = cache.counters
    assert (counters.prefetch_fills, counters.useful_prefetches, counters.demand_hits) == (1, 1, 2)


def test_prefetch_of_resident_block_is_not_a_fill():
    cache = SetAssociativeCache(CacheConfig(sets=1, ways=4))
    cache.access(A)
    assert cache.access(A + 8, is_prefetch=True) is True
    assert cache.counters.prefetch_requests == 1
    assert cache.counters.prefetch_fills == 0


def test_unused_prefetch_eviction_counted():
    cache = SetAssociativeCache(CacheConfig(sets=1, ways=1))
    cache.access(A, is_prefetch=True)
    cache.access(B)
    assert cache.counters.useless_evictions == 1
    assert cache.counters.useful_prefetches == 0


def test_empty_trace_metrics_are_undefined():
    report = simulate([], NextLinePrefetcher(GEOMETRY), CacheConfig(), GEOMETRY)
    assert report.demand_accesses == 0
    assert report.accuracy is None and report.coverage is None
    assert report.base_mpki is None and report.mpki_improvement is None


def test_no_prefetcher_has_zero_coverage():
    trace = stride_trace()
    report = simulate(trace, NoPrefetcher(GEOMETRY), CacheConfig(), GEOMETRY)
    assert report.base_misses == report.pref_misses == 100
    assert report.coverage == 0.0
    assert report.accuracy is None
    assert report.prefetches_issued == 0


def test_oracle_prefetcher_is_fully_accurate():
    print("\n" + "=" * 50)
    print("TEST: Oracle prefetcher")
    print("=" * 50)

    trace = stride_trace()
    report = simulate(trace, FutureOracle(trace), CacheConfig(), GEOMETRY, verbose=True)

    assert report.accuracy == 1.0
    assert report.pref_misses == 1
    assert report.coverage == pytest.approx(0.99)
    assert report.mpki_improvement == pytest.approx(0.99)
    print("\n✅ Oracle passed")


def test_mpki_uses_instruction_span():
    trace = stride_trace()
    report = simulate(trace, NoPrefetcher(GEOMETRY), CacheConfig(), GEOMETRY)
    assert report.mpki_denominator == 'instructions'
    assert report.instruction_span == 990
    assert report.base_mpki == pytest.approx(100 / 0.99)

    untimed = [TraceRecord(instr_id=i, pc=1, addr=r.addr, has_instr_id=False) for i, r in enumerate(trace)]
    assert mpki_scale(untimed)[:2] == (0.1, 'accesses')


def test_prefetch_delay_makes_next_line_late():
    trace = stride_trace()
    on_time = simulate(trace, NextLinePrefetcher(GEOMETRY), CacheConfig(), GEOMETRY)
    late = simulate(trace, NextLinePrefetcher(GEOMETRY), CacheConfig(), GEOMETRY, prefetch_delay=1)

    # The last access's prefetch is still pending when the trace ends
    assert on_time.prefetches_issued == 99
    assert on_time.useful_prefetches == 99
    assert on_time.coverage == pytest.approx(0.99)
    assert late.useful_prefetches == 0
    assert late.coverage == 0.0


def test_simulation_is_deterministic():
    trace = generate_synthetic(SyntheticSpec(kind='random', length=400, seed=3, pages=4))
    config = CacheConfig(sets=4, ways=2)
    first = run_pass(trace, NextLinePrefetcher(GEOMETRY), config)
    second = run_pass(trace, NextLinePrefetcher(GEOMETRY), config)
    assert first == second


def test_prediction_replay_and_position_check():
    trace = stride_trace(10)
    predictions = {p: [trace[p + 1].addr] for p in range(4, 9)}
    tail = trace[4:]
    report = simulate(tail, None, CacheConfig(), GEOMETRY, prediction_source=predictions, first_position=4)
    assert report.prefetcher == 'transformap'
    assert report.pref_misses == 1

    with pytest.raises(InputError):
        simulate(tail, None, CacheConfig(), GEOMETRY, prediction_source={20: [0]}, first_position=4)
    with pytest.raises(InputError):
        simulate(tail, None, CacheConfig(), GEOMETRY, prediction_source={3: [0]}, first_position=4)


def _write_report(tmp_path, name, trace, prefetcher, improvement):
    report = SimReport(trace=trace, prefetcher=prefetcher, mpki_improvement=improvement,
                       accuracy=0.5, coverage=improvement)
    json_path, csv_path = tmp_path / f"{name}.json", tmp_path / f"{name}.csv"
    write_sim_report(report, json_path, csv_path)
    return csv_path


def test_merge_reports_sorts_best_first(tmp_path):
    paths = [
        _write_report(tmp_path, 'a', 'lbm', 'bo', 0.10),
        _write_report(tmp_path, 'b', 'lbm', 'transformap', 0.40),
        _write_report(tmp_path, 'c', 'mcf', 'isb', None),
        _write_report(tmp_path, 'd', 'mcf', 'bo', 0.40),
    ]
    merged = merge_reports(paths)
    print(merged[['trace', 'prefetcher', 'mpki_improvement']])

    assert list(merged['prefetcher']) == ['bo', 'transformap', 'bo', 'isb']
    assert all(column in merged.columns for column in REPORT_COLUMNS)

    averaged = average_by_prefetcher(merged)
    assert list(averaged['prefetcher']) == ['transformap', 'bo', 'isb']
    bo = averaged[averaged['prefetcher'] == 'bo'].iloc[0]
    assert bo['mpki_improvement'] == pytest.approx(0.25)
    assert bo['traces'] == 2


def test_single_trace_has_no_average(tmp_path):
    merged = merge_reports([_write_report(tmp_path, 'a', 'lbm', 'bo', 0.1)])
    assert average_by_prefetcher(merged) is None


def test_merge_reports_schema_errors(tmp_path):
    with pytest.raises(InputError):
        merge_reports([])
    path = tmp_path / "broken.csv"
    pd.DataFrame([{'trace': 'x', 'prefetcher': 'bo'}]).to_csv(path, index=False)
    with pytest.raises(SchemaError) as info:
        merge_reports([path])
    assert "missing column 'demand_accesses'" in str(info.value)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    test_lru_hit_after_reuse()
    test_lru_order_updated_on_hit()
    test_set_index_is_block_mod_sets()
    test_prefetch_then_demand_is_useful()
    test_prefetch_of_resident_block_is_not_a_fill()
    test_unused_prefetch_eviction_counted()
    test_empty_trace_metrics_are_undefined()
    test_no_prefetcher_has_zero_coverage()
    test_oracle_prefetcher_is_fully_accurate()
    test_mpki_uses_instruction_span()
    test_prefetch_delay_makes_next_line_late()
    test_simulation_is_deterministic()
    test_prediction_replay_and_position_check()
    with tempfile.TemporaryDirectory() as tmp:
        test_merge_reports_sorts_best_first(Path(tmp))
    with tempfile.TemporaryDirectory() as tmp:
        test_single_trace_has_no_average(Path(tmp))
        test_merge_reports_schema_errors(Path(tmp))
    print("\n✅ All cache simulator tests passed")
