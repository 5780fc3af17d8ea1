"""
Set-associative LRU cache with prefetch bookkeeping
"""
from collections import OrderedDict
from dataclasses import dataclass
from typing import List

from src.config import CacheConfig


@dataclass
class CacheLine:
    prefetched: bool = False
    used: bool = False


@dataclass
class CacheCounters:
    demand_accesses: int = 0
    demand_hits: int = 0
    demand_misses: int = 0
    prefetch_requests: int = 0
    prefetch_fills: int = 0
    useful_prefetches: int = 0
    useless_evictions: int = 0


class SetAssociativeCache:
    """
    Each set is an OrderedDict of block address -> CacheLine, LRU first

    Set index is block address mod sets. Prefetch fills insert at MRU; a
    prefetch for a resident block changes nothing.
    """

    def __init__(self, config: CacheConfig):
        self.config = config
        self.sets: List["OrderedDict[int, CacheLine]"] = [OrderedDict() for _ in range(config.sets)]
        self.counters = CacheCounters()

    def _set_for(self, block: int) -> "OrderedDict[int, CacheLine]":
        return self.sets[block % self.config.sets]

    def contains(self, addr: int) -> bool:
        block = addr >> self.config.block_bits
        return block in self._set_for(block)

    def _insert(self, lines: "OrderedDict[int, CacheLine]", block: int, line: CacheLine):
        if len(lines) >= self.config.ways:
            _, victim = lines.popitem(last=False)
            if victim.prefetched and not victim.used:
                self.counters.useless_evictions += 1
        lines[block] = line

    def access(self, addr: int, is_prefetch: bool = False) -> bool:
        """
        Look up ``addr`` and update LRU state

        Args:
            addr: Byte address
            is_prefetch: Prefetch fill rather than a demand access

        Returns:
            True on hit
        """
        block = addr >> self.config.block_bits
        lines = self._set_for(block)
        counters = self.counters

        if is_prefetch:
            counters.prefetch_requests += 1
            if block in lines:
                return True
            self._insert(lines, block, CacheLine(prefetched=True))
            counters.prefetch_fills += 1
            return False

        counters.demand_accesses += 1
        line = lines.get(block)
        if line is not None:
            lines.move_to_end(block)
            counters.demand_hits += 1
            if line.prefetched and not line.used:
                line.used = True
                counters.useful_prefetches += 1
            return True

        counters.demand_misses += 1
        self._insert(lines, block, CacheLine())
        return False

    def occupancy(self) -> int:
        return sum(len(lines) for lines in self.sets)
