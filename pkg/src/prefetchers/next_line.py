"""
Next-line prefetcher
"""
from typing import List

from src.config import AddressConfig
from src.prefetchers.base import Prefetcher


class NextLinePrefetcher(Prefetcher):
    """Prefetch the ``degree`` blocks following every demand access"""

    name = 'nextline'

    def __init__(self, address_config: AddressConfig, degree: int = 1):
        super().__init__(address_config)
        if degree < 1:
            raise ValueError(f"next-line degree must be >= 1, got {degree}")
        self.degree = degree

    def on_access(self, pc: int, addr: int, was_miss: bool) -> List[int]:
        block_size = self.address_config.block_size
        base = addr & ~(block_size - 1)
        return self.legal_addresses(base + step * block_size for step in range(1, self.degree + 1))
