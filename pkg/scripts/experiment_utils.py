"""
Shared steps for the experiment scripts
Train on the head of a trace, predict its evaluation part, simulate prefetchers
"""
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from commands.common import split_point
from src.config import RunConfig
from src.errors import ConfigurationError
from src.model.inference import predict_trace
from src.model.training import TrainReport, train
from src.model.transformer import TransformerModel
from src.prefetchers import build_prefetcher
from src.simulator import SimReport, simulate
from src.traces.labeling import build_dataset
from src.traces.trace_io import TraceRecord


def evaluation_start(trace: Sequence[TraceRecord], config: RunConfig) -> int:
    """First evaluated position: the split point, or 0 when the whole trace trains"""
    cut = split_point(len(trace), config.train_fraction)
    return cut if cut < len(trace) else 0


def train_on_head(trace: Sequence[TraceRecord], config: RunConfig,
                  exact_set_eval: bool = False) -> Tuple[TransformerModel, TrainReport]:
    """Label the training head of ``trace`` and train a fresh model on it"""
    address = config.address_config()
    head = trace[:split_point(len(trace), config.train_fraction)]
    samples = build_dataset(head, address, config.history_length, config.window, config.k_max,
                            verbose=config.verbose)
    params, report = train(samples, config.model_config_for(address), config.train_config(),
                           exact_set_eval=exact_set_eval, beam_width=config.beam_width, k_max=config.k_max,
                           verbose=config.verbose)
    return TransformerModel(params), report


def prediction_table(model: TransformerModel, trace: Sequence[TraceRecord], config: RunConfig,
                     start: int) -> Dict[int, List[int]]:
    """Position -> predicted byte addresses over trace[start:]"""
    predictions = predict_trace(model, trace, config.address_config(), config.history_length, config.k_max,
                                config.beam_width, start=start if start else None, verbose=config.verbose)
    return {p.position: p.addresses for p in predictions}


def simulate_named(trace: Sequence[TraceRecord], config: RunConfig, name: str, start: int,
                   predictions: Optional[Dict[int, List[int]]] = None, prefetch_delay: Optional[int] = None,
                   trace_name: str = '') -> SimReport:
    """
    Simulate one prefetcher over trace[start:]

    ``transformap`` replays ``predictions``; every other name is built from the config.
    """
    if name == 'transformap' and predictions is None:
        raise ConfigurationError("transformap simulation needs a prediction table")
    delay = config.prefetch_delay if prefetch_delay is None else prefetch_delay
    evaluated = trace[start:]
    predictions = None if predictions is None else {p: a for p, a in predictions.items()
                                                    if start <= p < len(trace)}
    prefetcher = None if name == 'transformap' else build_prefetcher(name, config)
    return simulate(evaluated, prefetcher, config.cache_config(), config.address_config(),
                    prediction_source=predictions if name == 'transformap' else None,
                    prefetch_delay=delay, first_position=start, trace_name=trace_name)
