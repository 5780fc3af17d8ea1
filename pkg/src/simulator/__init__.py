"""
Cache simulation and reporting
"""
from src.simulator.cache import CacheCounters, SetAssociativeCache
from src.simulator.simulate import (METRIC_NOTES, REPORT_COLUMNS, SimReport, average_by_prefetcher, merge_reports,
                                    mpki_scale, run_pass, simulate, write_sim_report)

__all__ = ['CacheCounters', 'SetAssociativeCache', 'SimReport', 'METRIC_NOTES', 'REPORT_COLUMNS', 'mpki_scale',
           'run_pass', 'simulate', 'write_sim_report', 'merge_reports', 'average_by_prefetcher']
