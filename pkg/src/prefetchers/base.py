"""
Prefetcher interface shared by the simulator and every prefetcher
"""
from abc import ABC, abstractmethod
from typing import Iterable, List

from src.config import AddressConfig


class Prefetcher(ABC):
    """
    Called once per demand access, in trace order

    Implementations return byte addresses to prefetch; ``legal_addresses``
    block-aligns them and drops anything outside the address space.
    """

    name = 'base'

    def __init__(self, address_config: AddressConfig):
        self.address_config = address_config

    @abstractmethod
    def on_access(self, pc: int, addr: int, was_miss: bool) -> List[int]:
        ...

    def legal_addresses(self, addresses: Iterable[int]) -> List[int]:
        config = self.address_config
        limit = 1 << config.address_bits
        block_mask = ~(config.block_size - 1)
        legal: List[int] = []
        for address in addresses:
            if 0 <= address < limit:
                aligned = address & block_mask
                if aligned not in legal:
                    legal.append(aligned)
        return legal


class NoPrefetcher(Prefetcher):
    """Baseline: never prefetches"""

    name = 'none'

    def on_access(self, pc: int, addr: int, was_miss: bool) -> List[int]:
        return []
