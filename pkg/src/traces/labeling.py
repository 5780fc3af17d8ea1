"""
Bitmap labeling and dataset building
Labels are the set of future in-page block indexes, emitted in ascending order
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import AddressConfig
from src.errors import DatasetError
from src.traces.address_codec import decode_binary, page_of_block
from src.traces.trace_io import TraceRecord

DATASET_MAGIC = '# transformap-dataset v1'


@dataclass(frozen=True)
class Vocabulary:
    """Decoder vocabulary: block indexes 0..2^n-1 followed by BEGIN, END, PAD"""

    blocks_per_page: int

    @classmethod
    def for_config(cls, config: AddressConfig) -> 'Vocabulary':
        return cls(config.blocks_per_page)

    @property
    def begin(self) -> int:
        return self.blocks_per_page

    @property
    def end(self) -> int:
        return self.blocks_per_page + 1

    @property
    def pad(self) -> int:
        return self.blocks_per_page + 2

    @property
    def size(self) -> int:
        return self.blocks_per_page + 3

    def is_index(self, token: int) -> bool:
        return 0 <= token < self.blocks_per_page


@dataclass
class OffsetBitmap:
    """2^n booleans indexed by block index"""

    bits: np.ndarray

    @classmethod
    def empty(cls, config: AddressConfig) -> 'OffsetBitmap':
        return cls(np.zeros(config.blocks_per_page, dtype=bool))

    def set_indexes(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.bits)]


@dataclass
class Sample:
    """One training example"""

    input: np.ndarray
    target: List[int]
    position: int = -1
    page: int = -1

    def label_indexes(self, vocab: Vocabulary) -> List[int]:
        return [t for t in self.target if vocab.is_index(t)]


@dataclass
class DatasetMeta:
    """Parameters a dataset was built with (stored in the file header)"""

    address_config: AddressConfig
    history_length: int
    window: int
    k_max: int
    first_position: int = 0
    extra: Dict[str, str] = field(default_factory=dict)


def collect_bitmap(trace: Sequence[int], position: int, window: int, config: AddressConfig) -> OffsetBitmap:
    """
    Record which block indexes of the current page appear in (position, position+window]

    The current access's own block index is never set.

    Args:
        trace: Block-address sequence
        position: Index of the current access
        window: Lookahead count
        config: Address geometry

    Returns:
        OffsetBitmap
    """
    if not 0 <= position < len(trace):
        raise DatasetError(f"position {position} outside trace of length {len(trace)}")
    if window < 1:
        raise DatasetError("window must be >= 1")

    n = config.block_index_bits
    mask = config.blocks_per_page - 1
    current = trace[position]
    page, own_index = current >> n, current & mask

    bitmap = OffsetBitmap.empty(config)
    stop = min(len(trace), position + window + 1)
    for future in trace[position + 1:stop]:
        if future >> n == page:
            bitmap.bits[future & mask] = True
    bitmap.bits[own_index] = False
    return bitmap


def bitmap_to_label(bitmap: OffsetBitmap, k_max: int) -> List[int]:
    """Ascending set indexes, truncated to the k_max lowest, END appended"""
    vocab = Vocabulary(len(bitmap.bits))
    return bitmap.set_indexes()[:k_max] + [vocab.end]


def _block_addresses(trace: Sequence[TraceRecord], config: AddressConfig) -> np.ndarray:
    return np.fromiter((r.addr >> config.block_bits for r in trace), dtype=np.uint64, count=len(trace))


def _bit_matrix(blocks: np.ndarray, config: AddressConfig) -> np.ndarray:
    """MSB-first bits of every block address, shape (len, m + n)"""
    width = config.block_address_bits
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    return ((blocks[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int8)


def _build_range(args: Tuple) -> List[Sample]:
    blocks, bits, config, history_length, window, k_max, start, stop = args
    block_list = [int(b) for b in blocks]
    samples = []
    for position in range(start, stop):
        bitmap = collect_bitmap(block_list, position, window, config)
        tokens = bits[position - history_length + 1:position + 1].reshape(-1)
        samples.append(Sample(
            input=tokens,
            target=bitmap_to_label(bitmap, k_max),
            position=position,
            page=page_of_block(block_list[position], config),
        ))
    return samples


def build_dataset(trace: Sequence[TraceRecord], config: AddressConfig, history_length: int,
                  window: int, k_max: int, workers: int = 1, verbose: bool = False) -> List[Sample]:
    """
    One Sample per trace position from ``history_length`` to len-1

    The input of position p is the binary encoding of accesses p-t+1..p; samples
    with no in-page future are kept with the label [END].

    Args:
        trace: Trace records
        config: Address geometry
        history_length: t
        window: Lookahead count for labels
        k_max: Maximum indexes per label
        workers: Process count; >1 partitions the position range, output order is unchanged
        verbose: Print a one-line summary

    Returns:
        Samples in trace-position order
    """
    if len(trace) <= history_length:
        raise DatasetError(
            f"trace has {len(trace)} records; at least history_length+1 = {history_length + 1} are required"
        )

    blocks = _block_addresses(trace, config)
    bits = _bit_matrix(blocks, config)
    # Labels only look forward, so each worker gets the tail it needs
    positions = range(history_length, len(trace))
    if workers <= 1:
        samples = _build_range((blocks, bits, config, history_length, window, k_max,
                                positions.start, positions.stop))
    else:
        chunk = -(-len(positions) // workers)
        jobs = []
        for start in range(positions.start, positions.stop, chunk):
            stop = min(start + chunk, positions.stop)
            jobs.append((blocks, bits, config, history_length, window, k_max, start, stop))
        samples = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_build_range, jobs):
                samples.extend(part)

    if verbose:
        with_labels = sum(1 for s in samples if len(s.target) > 1)
        print(f"✓ Built {len(samples)} samples ({with_labels} with in-page future accesses)")
    return samples


def label_length_histogram(samples: Sequence[Sample]) -> Dict[int, int]:
    """Number of samples per label length (END excluded)"""
    lengths = pd.Series([len(s.target) - 1 for s in samples], dtype='int64')
    counts = lengths.value_counts().sort_index()
    return {int(k): int(v) for k, v in counts.items()}


def write_dataset(samples: Sequence[Sample], path: Union[str, Path], meta: DatasetMeta):
    """
    Write ``input_bits<TAB>label_indexes`` lines under a ``#`` header

    Bits are a 0/1 string, labels are comma-separated block indexes without END.
    """
    geometry = meta.address_config
    vocab = Vocabulary.for_config(geometry)
    first_position = samples[0].position if samples else meta.first_position
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        f.write(DATASET_MAGIC + '\n')
        f.write(
            f"# address_bits={geometry.address_bits} page_bits={geometry.page_bits} "
            f"block_bits={geometry.block_bits} history_length={meta.history_length} "
            f"window={meta.window} k_max={meta.k_max} first_position={first_position}\n"
        )
        for sample in samples:
            bits = ''.join('1' if b else '0' for b in sample.input)
            labels = ','.join(str(i) for i in sample.label_indexes(vocab))
            f.write(f"{bits}\t{labels}\n")


def read_dataset(path: Union[str, Path]) -> Tuple[List[Sample], DatasetMeta]:
    """
    Read a dataset file written by write_dataset

    Returns:
        (samples, meta)
    """
    path = str(path)
    with open(path, 'r', encoding='ascii') as f:
        lines = f.read().splitlines()

    if not lines or lines[0].strip() != DATASET_MAGIC:
        raise DatasetError(f"{path}: missing dataset header")
    header: Dict[str, str] = {}
    body_start = 1
    while body_start < len(lines) and lines[body_start].startswith('#'):
        for item in lines[body_start][1:].split():
            if '=' in item:
                key, value = item.split('=', 1)
                header[key] = value
        body_start += 1
    try:
        geometry = AddressConfig(address_bits=int(header['address_bits']), page_bits=int(header['page_bits']),
                                 block_bits=int(header['block_bits']))
        meta = DatasetMeta(address_config=geometry, history_length=int(header['history_length']),
                           window=int(header['window']), k_max=int(header['k_max']),
                           first_position=int(header.get('first_position', 0)))
    except (KeyError, ValueError) as e:
        raise DatasetError(f"{path}: incomplete dataset header ({e})") from None

    vocab = Vocabulary.for_config(geometry)
    width = geometry.block_address_bits
    expected_len = geometry.token_length(meta.history_length)
    samples: List[Sample] = []
    for offset, line in enumerate(lines[body_start:]):
        line_number = body_start + offset + 1
        if not line.strip():
            continue
        bits, _, labels = line.partition('\t')
        if len(bits) != expected_len or set(bits) - {'0', '1'}:
            raise DatasetError(f"{path}:line {line_number}: input must be {expected_len} bits of 0/1")
        try:
            indexes = [int(x) for x in labels.split(',')] if labels.strip() else []
        except ValueError:
            raise DatasetError(f"{path}:line {line_number}: non-numeric label in {labels!r}") from None
        if any(not vocab.is_index(i) for i in indexes):
            raise DatasetError(f"{path}:line {line_number}: label index outside [0, {vocab.blocks_per_page})")
        if any(a >= b for a, b in zip(indexes, indexes[1:])):
            raise DatasetError(f"{path}:line {line_number}: labels must be strictly ascending, got {labels!r}")
        tokens = np.frombuffer(bits.encode('ascii'), dtype=np.uint8) - ord('0')
        current = decode_binary(tokens[-width:])
        samples.append(Sample(
            input=tokens.astype(np.int8),
            target=indexes + [vocab.end],
            position=meta.first_position + len(samples),
            page=page_of_block(current, geometry),
        ))
    return samples, meta
