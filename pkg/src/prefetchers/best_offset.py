"""
Best-Offset prefetcher (simplified)

Learns one block offset per round by checking, for each candidate d, whether
block - d was requested recently. No MSHR timeliness test and no low-score
disable threshold.
"""
from collections import Counter, deque
from typing import Dict, List, Optional, Sequence

from src.config import AddressConfig
from src.prefetchers.base import Prefetcher


class BestOffsetPrefetcher(Prefetcher):
    """
    Args:
        address_config: Address geometry
        recent_entries: Recent-request ring size
        max_offset: Candidate offsets are 1..max_offset blocks (ignored when ``offsets`` is given)
        round_length: Accesses per learning round
        offsets: Explicit candidate list
    """

    name = 'bo'

    def __init__(self, address_config: AddressConfig, recent_entries: int = 64, max_offset: int = 16,
                 round_length: int = 256, offsets: Optional[Sequence[int]] = None):
        super().__init__(address_config)
        if recent_entries < 1 or round_length < 1:
            raise ValueError("recent_entries and round_length must be >= 1")
        self.offsets: List[int] = sorted(set(offsets)) if offsets else list(range(1, max_offset + 1))
        if not self.offsets or self.offsets[0] < 1:
            raise ValueError("candidate offsets must be positive block counts")
        self.round_length = round_length
        self.recent: deque = deque(maxlen=recent_entries)
        self._recent_counts: Counter = Counter()
        self.scores: Dict[int, int] = {d: 0 for d in self.offsets}
        self.best_offset = self.offsets[0]
        self.round_accesses = 0
        self.rounds_completed = 0

    def _remember(self, block: int):
        if len(self.recent) == self.recent.maxlen:
            oldest = self.recent[0]
            self._recent_counts[oldest] -= 1
            if not self._recent_counts[oldest]:
                del self._recent_counts[oldest]
        self.recent.append(block)
        self._recent_counts[block] += 1

    def _end_round(self):
        # max() keeps the first maximum, and offsets are ascending
        self.best_offset = max(self.offsets, key=lambda d: self.scores[d])
        self.scores = {d: 0 for d in self.offsets}
        self.round_accesses = 0
        self.rounds_completed += 1

    def on_access(self, pc: int, addr: int, was_miss: bool) -> List[int]:
        block = addr >> self.address_config.block_bits
        for offset in self.offsets:
            if block - offset in self._recent_counts:
                self.scores[offset] += 1
        self._remember(block)

        self.round_accesses += 1
        if self.round_accesses == self.round_length:
            self._end_round()

        target = (block + self.best_offset) << self.address_config.block_bits
        return self.legal_addresses([target])
