"""
Irregular-stream prefetcher (simplified ISB)

Keeps a per-PC last block and a direct (pc, block) -> next block pair table,
both LRU-bounded. No structural address space.
"""
from collections import OrderedDict
from typing import List, Tuple

from src.config import AddressConfig
from src.prefetchers.base import Prefetcher


def _touch(table: OrderedDict, key, value, capacity: int):
    table[key] = value
    table.move_to_end(key)
    while len(table) > capacity:
        table.popitem(last=False)


class ISBPrefetcher(Prefetcher):
    name = 'isb'

    def __init__(self, address_config: AddressConfig, last_entries: int = 256, pair_entries: int = 4096):
        super().__init__(address_config)
        if last_entries < 1 or pair_entries < 1:
            raise ValueError("ISB table capacities must be >= 1")
        self.last_entries = last_entries
        self.pair_entries = pair_entries
        self.last_address: "OrderedDict[int, int]" = OrderedDict()
        self.pairs: "OrderedDict[Tuple[int, int], int]" = OrderedDict()

    def on_access(self, pc: int, addr: int, was_miss: bool) -> List[int]:
        block = addr >> self.address_config.block_bits
        previous = self.last_address.get(pc)
        if previous is not None and previous != block:
            _touch(self.pairs, (pc, previous), block, self.pair_entries)
        _touch(self.last_address, pc, block, self.last_entries)

        successor = self.pairs.get((pc, block))
        if successor is None:
            return []
        self.pairs.move_to_end((pc, block))
        return self.legal_addresses([successor << self.address_config.block_bits])
