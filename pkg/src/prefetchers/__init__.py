"""
Prefetchers
"""
from typing import Optional

from src.config import RunConfig
from src.errors import ConfigurationError
from src.prefetchers.base import NoPrefetcher, Prefetcher
from src.prefetchers.best_offset import BestOffsetPrefetcher
from src.prefetchers.isb import ISBPrefetcher
from src.prefetchers.next_line import NextLinePrefetcher
from src.prefetchers.transformap import PredictionReplayPrefetcher, TransformapPrefetcher

__all__ = [
    'Prefetcher',
    'NoPrefetcher',
    'NextLinePrefetcher',
    'BestOffsetPrefetcher',
    'ISBPrefetcher',
    'TransformapPrefetcher',
    'PredictionReplayPrefetcher',
    'build_prefetcher',
]


def build_prefetcher(name: str, config: RunConfig, model=None) -> Prefetcher:
    """
    Instantiate a baseline by name, or the live model prefetcher when ``model`` is given

    Args:
        name: none | nextline | bo | isb | transformap
        config: Run configuration (table sizes, geometry)
        model: TransformerModel, required for ``transformap``

    Raises:
        ConfigurationError: unknown name, or transformap without a model
    """
    address = config.address_config()
    if name == 'none':
        return NoPrefetcher(address)
    if name == 'nextline':
        return NextLinePrefetcher(address, degree=config.nextline_degree)
    if name == 'bo':
        return BestOffsetPrefetcher(address, recent_entries=config.bo_rr_entries,
                                    max_offset=config.bo_max_offset, round_length=config.bo_round_length)
    if name == 'isb':
        return ISBPrefetcher(address, last_entries=config.isb_last_entries, pair_entries=config.isb_pair_entries)
    if name == 'transformap':
        if model is None:
            raise ConfigurationError("prefetcher 'transformap' needs a checkpoint or a predictions file")
        return TransformapPrefetcher(model, address, config.history_length, config.k_max, config.beam_width)
    raise ConfigurationError(f"unknown prefetcher {name!r}")
