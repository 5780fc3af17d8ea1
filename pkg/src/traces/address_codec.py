"""
Address codec
Byte address <-> block address <-> binary tokens, and prefetch-address reconstruction
"""
from typing import List, Sequence

import numpy as np

from src.config import AddressConfig
from src.errors import AddressRangeError


def to_block_address(addr: int, config: AddressConfig) -> int:
    """Drop the block offset bits"""
    return addr >> config.block_bits


def block_index(block_addr: int, config: AddressConfig) -> int:
    """Position of a block inside its page (low n bits of the block address)"""
    return block_addr & (config.blocks_per_page - 1)


def page_of_block(block_addr: int, config: AddressConfig) -> int:
    """Page number of a block address"""
    return block_addr >> config.block_index_bits


def encode_binary(block_addr: int, config: AddressConfig) -> List[int]:
    """
    MSB-first bit expansion of a block address, width m + n

    Raises:
        AddressRangeError: block_addr does not fit in m + n bits
    """
    width = config.block_address_bits
    if block_addr < 0 or block_addr >> width:
        raise AddressRangeError(f"block address {block_addr:#x} does not fit in {width} bits")
    return [(block_addr >> shift) & 1 for shift in range(width - 1, -1, -1)]


def decode_binary(bits: Sequence[int]) -> int:
    """Inverse of encode_binary"""
    value = 0
    for bit in bits:
        value = (value << 1) | int(bit)
    return value


def flatten_history(history: Sequence[int], config: AddressConfig, history_length: int) -> np.ndarray:
    """
    Concatenate the binary encodings of the last ``history_length`` block addresses

    Shorter histories are front-padded by repeating the earliest address so the
    input vocabulary stays {0, 1}.

    Args:
        history: Block addresses, oldest first
        config: Address geometry
        history_length: t

    Returns:
        int8 array of length t * (m + n)
    """
    history = list(history)[-history_length:]
    if not history:
        raise AddressRangeError("history must contain at least one block address")
    if len(history) < history_length:
        history = [history[0]] * (history_length - len(history)) + history
    tokens: List[int] = []
    for block_addr in history:
        tokens.extend(encode_binary(block_addr, config))
    return np.asarray(tokens, dtype=np.int8)


def reconstruct_address(current_addr: int, index: int, config: AddressConfig) -> int:
    """
    Byte address of block ``index`` inside the page of ``current_addr``

    ((current >> page_bits) << n | index) << block_bits

    Raises:
        AddressRangeError: index >= 2^n
    """
    if index < 0 or index >= config.blocks_per_page:
        raise AddressRangeError(f"block index {index} outside [0, {config.blocks_per_page})")
    page = current_addr >> config.page_bits
    return ((page << config.block_index_bits) | index) << config.block_bits
