"""
Trace-driven simulation
Runs a no-prefetch baseline pass and a prefetcher pass over the same demand
stream and derives accuracy, coverage and MPKI improvement.
"""
from collections import deque
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel

from src.config import AddressConfig, CacheConfig
from src.errors import ContractError, InputError, SchemaError
from src.prefetchers.base import NoPrefetcher, Prefetcher
from src.prefetchers.transformap import PredictionReplayPrefetcher
from src.simulator.cache import CacheCounters, SetAssociativeCache
from src.traces.trace_io import TraceRecord

METRIC_NOTES = (
    "accuracy = useful / issued; coverage = (base_misses - pref_misses) / base_misses; "
    "mpki_improvement = (base_mpki - pref_mpki) / base_mpki; issued counts prefetch fills "
    "(prefetches of resident blocks and those still pending at end of trace are excluded); "
    "bo and isb are simplified baselines"
)

REPORT_COLUMNS = [
    'trace', 'prefetcher', 'demand_accesses', 'base_misses', 'pref_misses', 'prefetches_issued',
    'useful_prefetches', 'accuracy', 'coverage', 'base_mpki', 'pref_mpki', 'mpki_improvement',
]
METRIC_COLUMNS = ['accuracy', 'coverage', 'mpki_improvement']


class SimReport(BaseModel):
    """Raw counters of both passes plus derived metrics; None marks an undefined ratio"""

    trace: str = ''
    prefetcher: str
    demand_accesses: int = 0
    base_misses: int = 0
    pref_misses: int = 0
    prefetches_issued: int = 0
    prefetch_requests: int = 0
    useful_prefetches: int = 0
    useless_evictions: int = 0
    accuracy: Optional[float] = None
    coverage: Optional[float] = None
    base_mpki: Optional[float] = None
    pref_mpki: Optional[float] = None
    mpki_improvement: Optional[float] = None
    instruction_span: int = 0
    mpki_denominator: Literal['instructions', 'accesses'] = 'instructions'
    prefetch_delay: int = 0
    cache_sets: int = 0
    cache_ways: int = 0
    notes: str = METRIC_NOTES

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([self.model_dump()])


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    return numerator / denominator if denominator else None


def mpki_scale(trace: Sequence[TraceRecord]) -> Tuple[float, str, int]:
    """
    Kilo-unit count for MPKI and the unit used

    Instruction span (last - first instr_id) when every record carries a real
    id and the span is positive; otherwise the number of accesses.
    """
    if not trace:
        return 0.0, 'accesses', 0
    span = trace[-1].instr_id - trace[0].instr_id
    if all(r.has_instr_id for r in trace) and span > 0:
        return span / 1000.0, 'instructions', span
    return len(trace) / 1000.0, 'accesses', span


def run_pass(trace: Sequence[TraceRecord], prefetcher: Prefetcher, cache_config: CacheConfig,
             prefetch_delay: int = 0) -> CacheCounters:
    """
    One pass over the demand stream

    Prefetches emitted after access i fill the cache just before access
    i + 1 + prefetch_delay; anything still pending when the trace ends is dropped.
    """
    if prefetch_delay < 0:
        raise ContractError(f"prefetch_delay must be >= 0, got {prefetch_delay}")
    cache = SetAssociativeCache(cache_config)
    pending: deque = deque()
    for i, record in enumerate(trace):
        while pending and pending[0][0] <= i:
            _, addresses = pending.popleft()
            for address in addresses:
                cache.access(address, is_prefetch=True)
        hit = cache.access(record.addr)
        emitted = prefetcher.on_access(record.pc, record.addr, not hit)
        if emitted:
            pending.append((i + 1 + prefetch_delay, list(emitted)))
    return cache.counters


def check_prediction_positions(predictions: Dict[int, Sequence[int]], first_position: int, length: int):
    """
    Raises:
        InputError: a prediction position lies outside [first_position, first_position + length)
    """
    outside = sorted(p for p in predictions if not first_position <= p < first_position + length)
    if outside:
        raise InputError(
            f"prediction positions outside the simulated trace [{first_position}, {first_position + length}): "
            f"{outside[:5]}{' ...' if len(outside) > 5 else ''}"
        )


def simulate(trace: Sequence[TraceRecord], prefetcher: Optional[Prefetcher], cache_config: CacheConfig,
             address_config: AddressConfig, prediction_source: Optional[Dict[int, Sequence[int]]] = None,
             prefetch_delay: int = 0, first_position: int = 0, trace_name: str = '',
             verbose: bool = False) -> SimReport:
    """
    Compare a prefetcher against the no-prefetch baseline

    Args:
        trace: Demand accesses
        prefetcher: Prefetcher under test (None with ``prediction_source`` replays predictions,
            None without it simulates no prefetching)
        cache_config: Cache geometry
        address_config: Address geometry
        prediction_source: Position -> byte addresses, positions counted from ``first_position``
        prefetch_delay: Extra demand accesses before a prefetch fills
        first_position: Trace position of ``trace[0]`` (non-zero when simulating a tail split)
        trace_name: Label carried into the report
        verbose: Print a summary

    Returns:
        SimReport
    """
    if prediction_source is not None:
        check_prediction_positions(prediction_source, first_position, len(trace))
        prefetcher = PredictionReplayPrefetcher(prediction_source, address_config, first_position)
    elif prefetcher is None:
        prefetcher = NoPrefetcher(address_config)

    base = run_pass(trace, NoPrefetcher(address_config), cache_config)
    pref = run_pass(trace, prefetcher, cache_config, prefetch_delay)

    kilo, unit, span = mpki_scale(trace)
    base_mpki = _ratio(base.demand_misses, kilo)
    pref_mpki = _ratio(pref.demand_misses, kilo)
    report = SimReport(
        trace=trace_name,
        prefetcher=prefetcher.name,
        demand_accesses=pref.demand_accesses,
        base_misses=base.demand_misses,
        pref_misses=pref.demand_misses,
        prefetches_issued=pref.prefetch_fills,
        prefetch_requests=pref.prefetch_requests,
        useful_prefetches=pref.useful_prefetches,
        useless_evictions=pref.useless_evictions,
        accuracy=_ratio(pref.useful_prefetches, pref.prefetch_fills),
        coverage=_ratio(base.demand_misses - pref.demand_misses, base.demand_misses),
        base_mpki=base_mpki,
        pref_mpki=pref_mpki,
        mpki_improvement=_ratio(base_mpki - pref_mpki, base_mpki) if base_mpki else None,
        instruction_span=span,
        mpki_denominator=unit,
        prefetch_delay=prefetch_delay,
        cache_sets=cache_config.sets,
        cache_ways=cache_config.ways,
    )

    if verbose:
        def fmt(value):
            return 'n/a' if value is None else f"{value:.4f}"
        print(f"📊 {report.prefetcher}: misses {report.base_misses} -> {report.pref_misses}, "
              f"issued {report.prefetches_issued}, useful {report.useful_prefetches}")
        print(f"   accuracy {fmt(report.accuracy)}  coverage {fmt(report.coverage)}  "
              f"MPKI improvement {fmt(report.mpki_improvement)}  (per kilo-{unit})")
    return report


def write_sim_report(report: SimReport, json_path: Union[str, Path], csv_path: Union[str, Path]):
    with open(json_path, 'w', encoding='utf-8') as f:
        f.write(report.model_dump_json(indent=2) + '\n')
    report.to_frame().to_csv(csv_path, index=False, lineterminator='\n')


def merge_reports(csv_paths: Sequence[Union[str, Path]]) -> pd.DataFrame:
    """
    Concatenate simulation CSVs and sort by MPKI improvement, best first

    Raises:
        InputError: no inputs
        SchemaError: an input lacks one of REPORT_COLUMNS (named in the message)
    """
    if not csv_paths:
        raise InputError("report needs at least one simulation CSV")
    frames: List[pd.DataFrame] = []
    for path in csv_paths:
        frame = pd.read_csv(path)
        for column in REPORT_COLUMNS:
            if column not in frame.columns:
                raise SchemaError(f"{path}: missing column '{column}'")
        frames.append(frame)
    merged = pd.concat(frames, ignore_index=True)
    merged['trace'] = merged['trace'].fillna('').astype(str)
    merged = merged.sort_values(['mpki_improvement', 'prefetcher', 'trace'], ascending=[False, True, True],
                                na_position='last', kind='mergesort')
    return merged.reset_index(drop=True)


def average_by_prefetcher(merged: pd.DataFrame) -> Optional[pd.DataFrame]:
    """Per-prefetcher mean of the metric columns, or None when only one trace is present"""
    if merged['trace'].nunique() < 2:
        return None
    averaged = merged.groupby('prefetcher', as_index=False)[METRIC_COLUMNS].mean()
    averaged['traces'] = merged.groupby('prefetcher')['trace'].nunique().values
    return averaged.sort_values('mpki_improvement', ascending=False, na_position='last',
                                kind='mergesort').reset_index(drop=True)
