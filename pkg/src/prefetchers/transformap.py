"""
Model-driven prefetchers: live beam-search inference or replay of a predictions file
"""
from collections import deque
from typing import Dict, List, Sequence

from src.config import AddressConfig
from src.model.inference import predict
from src.prefetchers.base import Prefetcher
from src.traces.address_codec import reconstruct_address, to_block_address


class TransformapPrefetcher(Prefetcher):
    """
    Predicts in-page block indexes from the last ``history_length`` accesses

    Silent until a full history has been seen, matching the positions the
    batch predictor covers.
    """

    name = 'transformap'

    def __init__(self, model, address_config: AddressConfig, history_length: int, k_max: int,
                 beam_width: int = 2):
        super().__init__(address_config)
        self.model = model
        self.history_length = history_length
        self.k_max = k_max
        self.beam_width = beam_width
        self.history: deque = deque(maxlen=history_length)

    def on_access(self, pc: int, addr: int, was_miss: bool) -> List[int]:
        self.history.append(to_block_address(addr, self.address_config))
        if len(self.history) < self.history_length:
            return []
        prediction = predict(self.model, list(self.history), self.address_config,
                             self.history_length, self.k_max, self.beam_width)
        return self.legal_addresses(reconstruct_address(addr, index, self.address_config)
                                    for index in prediction.block_indexes)


class PredictionReplayPrefetcher(Prefetcher):
    """Emits the addresses stored for each trace position"""

    name = 'transformap'

    def __init__(self, predictions: Dict[int, Sequence[int]], address_config: AddressConfig,
                 first_position: int = 0):
        super().__init__(address_config)
        self.predictions = predictions
        self.position = first_position

    def on_access(self, pc: int, addr: int, was_miss: bool) -> List[int]:
        addresses = self.predictions.get(self.position, ())
        self.position += 1
        return self.legal_addresses(addresses)
