"""
Trace I/O
Parses, validates, serializes and synthesizes memory-access traces
"""
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, List, Optional, Sequence, TextIO, Union

from pydantic import BaseModel, ConfigDict, Field

from src.config import AddressConfig
from src.errors import AddressRangeError, ConfigurationError, TraceParseError
from src.utils.seeding import substream

SYNTHETIC_KINDS = ('constant-stride', 'page-local-permutation', 'temporal-stream', 'random')

# Distinct default program counters so PC-localized prefetchers see separate streams
_DEFAULT_PCS = {
    'constant-stride': 0x401000,
    'page-local-permutation': 0x402000,
    'temporal-stream': 0x403000,
    'random': 0x404000,
}


@dataclass(frozen=True)
class TraceRecord:
    """One memory access"""

    instr_id: int
    pc: int
    addr: int
    # False when the trace omitted the instruction column and instr_id is the record index
    has_instr_id: bool = True


class SyntheticSpec(BaseModel):
    """Declarative description of a synthetic trace"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: str
    length: int = Field(..., gt=0)
    seed: int = Field(0, ge=0)
    start: int = Field(0, ge=0, description="constant-stride: first byte address")
    stride: int = Field(64, description="constant-stride: bytes between consecutive accesses")
    pages: int = Field(64, ge=1, description="page-local-permutation/random: pages touched")
    period: int = Field(8, ge=1, description="accesses per page visit, or temporal-stream period")
    addresses: Optional[List[int]] = Field(None, description="temporal-stream: explicit repeating addresses")
    pc: Optional[int] = None
    instr_gap: int = Field(10, ge=1, description="instructions retired between consecutive accesses")
    first_instr_id: int = Field(0, ge=0)


def _iter_text_lines(source: Union[BinaryIO, TextIO, Iterable]) -> Iterable[str]:
    for line in source:
        if isinstance(line, bytes):
            try:
                line = line.decode('ascii')
            except UnicodeDecodeError:
                line = line.decode('ascii', errors='replace')
        yield line


def _parse_int(field: str) -> int:
    if field.lower().startswith('0x'):
        return int(field, 16)
    return int(field, 10)


def parse_trace(source: Union[BinaryIO, TextIO, Iterable], config: AddressConfig,
                path: Optional[str] = None) -> List[TraceRecord]:
    """
    Parse the text trace format: ``instr_id pc addr`` per line, ``#`` comments

    A line with only ``pc addr`` takes its record index as instr_id and is
    flagged so the simulator can fall back to a per-kilo-access MPKI.

    Args:
        source: Byte or text stream (or any iterable of lines)
        config: Address geometry used for the range check
        path: File name used in error messages

    Returns:
        Records in file order
    """
    records: List[TraceRecord] = []
    limit = 1 << config.address_bits
    last_instr_id = None
    columns = None

    for line_number, line in enumerate(_iter_text_lines(source), start=1):
        content = line.split('#', 1)[0].strip()
        if not content:
            continue
        fields = content.split()
        if len(fields) not in (2, 3):
            raise TraceParseError(f"expected 'instr_id pc addr' or 'pc addr', got {len(fields)} fields",
                                  line_number, path)
        try:
            values = [_parse_int(f) for f in fields]
        except ValueError:
            raise TraceParseError(f"non-numeric field in {content!r}", line_number, path) from None
        if any(v < 0 for v in values):
            raise TraceParseError(f"negative field in {content!r}", line_number, path)
        if columns is None:
            columns = len(values)
        elif len(values) != columns:
            raise TraceParseError(f"{len(values)}-column line in a {columns}-column trace "
                                  f"(mixing 'pc addr' and 'instr_id pc addr' lines)", line_number, path)

        if len(values) == 3:
            instr_id, pc, addr = values
            has_instr_id = True
        else:
            pc, addr = values
            instr_id, has_instr_id = len(records), False

        if addr >= limit:
            raise AddressRangeError(
                f"{path + ':' if path else ''}line {line_number}: address {addr:#x} exceeds "
                f"{config.address_bits}-bit address space"
            )
        if last_instr_id is not None and instr_id < last_instr_id:
            raise TraceParseError(f"instr_id {instr_id} decreases (previous {last_instr_id})", line_number, path)
        last_instr_id = instr_id
        records.append(TraceRecord(instr_id=instr_id, pc=pc, addr=addr, has_instr_id=has_instr_id))

    return records


def read_trace(path: Union[str, Path], config: AddressConfig) -> List[TraceRecord]:
    """Read and parse a trace file"""
    with open(path, 'rb') as f:
        return parse_trace(f, config, path=str(path))


def serialize_trace(records: Sequence[TraceRecord]) -> str:
    """Render records in the text trace format"""
    out = io.StringIO()
    for record in records:
        if record.has_instr_id:
            out.write(f"{record.instr_id} {record.pc} {record.addr}\n")
        else:
            out.write(f"{record.pc} {record.addr}\n")
    return out.getvalue()


def write_trace(records: Sequence[TraceRecord], path: Union[str, Path], header: Optional[str] = None):
    """Write records to a trace file, with an optional ``#`` header line"""
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        if header:
            for line in header.splitlines():
                f.write(f"# {line}\n")
        f.write(serialize_trace(records))


def _random_pages(rng, count: int, config: AddressConfig) -> List[int]:
    """Draw ``count`` distinct page numbers in draw order"""
    space = 1 << config.page_address_bits
    if count > space:
        raise ConfigurationError(f"cannot draw {count} distinct pages from a {space}-page address space")
    pages: List[int] = []
    seen = set()
    while len(pages) < count:
        page = int(rng.integers(0, space, dtype='uint64')) if space > 1 else 0
        if page not in seen:
            seen.add(page)
            pages.append(page)
    return pages


def generate_synthetic(spec: SyntheticSpec, config: Optional[AddressConfig] = None) -> List[TraceRecord]:
    """
    Generate a deterministic synthetic trace

    Kinds:
        constant-stride: addr[i] = start + i*stride
        page-local-permutation: a fixed cycle over ``pages`` pages; each visit
            touches ``period`` block indexes of the page in that page's fixed
            permuted order
        temporal-stream: ``period`` addresses (or ``addresses``) repeated
        random: uniform block-aligned addresses over ``pages`` random pages

    Args:
        spec: Synthetic trace description
        config: Address geometry (default 64-bit, 4 KiB pages, 64 B blocks)

    Returns:
        List of TraceRecord
    """
    config = config or AddressConfig()
    if spec.kind not in SYNTHETIC_KINDS:
        raise ConfigurationError(f"unsupported synthetic kind '{spec.kind}' (expected one of {', '.join(SYNTHETIC_KINDS)})")

    rng = substream(spec.seed, f"synth-{spec.kind}")
    limit = 1 << config.address_bits
    block_mask = ~(config.block_size - 1)
    addrs: List[int] = []

    if spec.kind == 'constant-stride':
        last = spec.start + (spec.length - 1) * spec.stride
        if not 0 <= last < limit or spec.start >= limit:
            raise ConfigurationError(
                f"constant-stride run from {spec.start:#x} with stride {spec.stride} leaves the "
                f"{config.address_bits}-bit address space after {spec.length} accesses"
            )
        addrs = [spec.start + i * spec.stride for i in range(spec.length)]

    elif spec.kind == 'page-local-permutation':
        period = min(spec.period, config.blocks_per_page)
        pages = _random_pages(rng, spec.pages, config)
        orders = [rng.permutation(config.blocks_per_page)[:period] for _ in pages]
        cycle = rng.permutation(len(pages))
        i = 0
        while len(addrs) < spec.length:
            slot = int(cycle[i % len(cycle)])
            for index in orders[slot]:
                if len(addrs) == spec.length:
                    break
                addrs.append((pages[slot] << config.page_bits) | (int(index) << config.block_bits))
            i += 1

    elif spec.kind == 'temporal-stream':
        if spec.addresses:
            outside = [a for a in spec.addresses if not 0 <= a < limit]
            if outside:
                raise ConfigurationError(f"temporal-stream address {outside[0]:#x} exceeds the "
                                         f"{config.address_bits}-bit address space")
            stream = list(spec.addresses)
        else:
            stream = [int(rng.integers(0, limit, dtype='uint64')) & block_mask if limit > 1 else 0
                      for _ in range(spec.period)]
        addrs = [stream[i % len(stream)] for i in range(spec.length)]

    elif spec.kind == 'random':
        pages = _random_pages(rng, spec.pages, config)
        for _ in range(spec.length):
            page = pages[int(rng.integers(0, len(pages)))]
            index = int(rng.integers(0, config.blocks_per_page))
            addrs.append((page << config.page_bits) | (index << config.block_bits))

    pc = spec.pc if spec.pc is not None else _DEFAULT_PCS[spec.kind]
    return [
        TraceRecord(instr_id=spec.first_instr_id + i * spec.instr_gap, pc=pc, addr=addr)
        for i, addr in enumerate(addrs)
    ]


def concatenate_traces(segments: Sequence[Sequence[TraceRecord]], instr_gap: int = 10) -> List[TraceRecord]:
    """Join traces end to end, renumbering instruction ids so they keep increasing"""
    joined: List[TraceRecord] = []
    offset = 0
    for segment in segments:
        if not segment:
            continue
        base = segment[0].instr_id
        for record in segment:
            joined.append(TraceRecord(instr_id=offset + record.instr_id - base, pc=record.pc, addr=record.addr))
        offset = joined[-1].instr_id + instr_gap
    return joined


def split_segments(segments: Sequence[Sequence[TraceRecord]], train_fraction: float) -> List[List[TraceRecord]]:
    """
    Reorder segments as every head followed by every tail

    Heads hold ``floor(total * train_fraction)`` records in all, so a chronological
    split at ``train_fraction`` leaves each segment's pattern on both sides.
    """
    if train_fraction >= 1.0:
        return [list(s) for s in segments]
    total = sum(len(s) for s in segments)
    heads = [int(math.floor(len(s) * train_fraction)) for s in segments]
    heads[-1] = min(len(segments[-1]), heads[-1] + int(math.floor(total * train_fraction)) - sum(heads))
    return ([list(s[:h]) for s, h in zip(segments, heads)]
            + [list(s[h:]) for s, h in zip(segments, heads)])


def generate_mixed_benchmark(length: int, seed: int, config: Optional[AddressConfig] = None,
                             instr_gap: int = 10, pages: int = 64, period: int = 8,
                             train_fraction: float = 1.0) -> List[TraceRecord]:
    """
    Stride, temporal-stream and page-local-permutation segments concatenated

    Args:
        length: Total record count, split evenly across the three segments
        seed: Seed shared by all segments
        config: Address geometry
        train_fraction: Below 1.0, segment heads come first and segment tails after
            them (see ``split_segments``)

    Returns:
        List of TraceRecord
    """
    config = config or AddressConfig()
    third = max(1, length // 3)
    stride_start = (1 << (config.address_bits - 1)) if config.address_bits > 1 else 0
    specs = [
        SyntheticSpec(kind='constant-stride', length=third, seed=seed, start=stride_start,
                      stride=config.block_size, instr_gap=instr_gap),
        SyntheticSpec(kind='temporal-stream', length=third, seed=seed, period=max(2, period * 4),
                      instr_gap=instr_gap),
        SyntheticSpec(kind='page-local-permutation', length=max(1, length - 2 * third), seed=seed,
                      pages=pages, period=period, instr_gap=instr_gap),
    ]
    segments = [generate_synthetic(s, config) for s in specs]
    return concatenate_traces(split_segments(segments, train_fraction), instr_gap=instr_gap)
