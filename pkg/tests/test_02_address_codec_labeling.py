import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import AddressConfig
from src.errors import AddressRangeError, DatasetError
from src.traces.address_codec import (block_index, decode_binary, encode_binary, flatten_history, page_of_block,
                                      reconstruct_address, to_block_address)
from src.traces.labeling import (DatasetMeta, Vocabulary, bitmap_to_label, build_dataset, collect_bitmap,
                                 label_length_histogram, read_dataset, write_dataset)
from src.traces.trace_io import SyntheticSpec, TraceRecord, generate_synthetic

GEOMETRY = AddressConfig()


def _records(addresses):
    return [TraceRecord(instr_id=i, pc=0x400000, addr=a) for i, a in enumerate(addresses)]


def _oracle_label(addresses, position, window, geometry, k_max):
    """Forward scan on byte addresses, written independently of the labeling code"""
    page = addresses[position] // geometry.page_size
    own = (addresses[position] % geometry.page_size) // geometry.block_size
    found = set()
    for q in range(position + 1, min(len(addresses), position + window + 1)):
        if addresses[q] // geometry.page_size == page:
            found.add((addresses[q] % geometry.page_size) // geometry.block_size)
    found.discard(own)
    return sorted(found)[:k_max]


def test_geometry_derived_widths():
    print("\n" + "=" * 50)
    print("TEST: Address geometry")
    print("=" * 50)

    assert GEOMETRY.block_index_bits == 6
    assert GEOMETRY.page_address_bits == 52
    assert GEOMETRY.block_address_bits == 58
    assert GEOMETRY.blocks_per_page == 64
    assert GEOMETRY.token_length(8) == 8 * 58
    with pytest.raises(ValueError):
        AddressConfig(address_bits=64, page_bits=6, block_bits=6)
    print("\n✅ Geometry passed")


def test_encode_binary_msb_first():
    small = AddressConfig(address_bits=12, page_bits=8, block_bits=4)
    assert encode_binary(0b10000001, small) == [1, 0, 0, 0, 0, 0, 0, 1]
    assert decode_binary(encode_binary(0b01101100, small)) == 0b01101100
    with pytest.raises(AddressRangeError):
        encode_binary(1 << 8, small)


def test_block_page_split():
    addr = (0x1234 << 12) | (37 << 6) | 5
    block = to_block_address(addr, GEOMETRY)
    assert block_index(block, GEOMETRY) == 37
    assert page_of_block(block, GEOMETRY) == 0x1234


def test_flatten_history_pads_with_oldest():
    small = AddressConfig(address_bits=12, page_bits=8, block_bits=4)
    tokens = flatten_history([3, 5], small, history_length=4)
    width = small.block_address_bits

    assert tokens.dtype == np.int8
    assert len(tokens) == 4 * width
    chunks = [decode_binary(tokens[i * width:(i + 1) * width]) for i in range(4)]
    assert chunks == [3, 3, 3, 5]
    assert decode_binary(flatten_history([1, 2, 3, 4, 5, 6], small, 4)[-width:]) == 6
    with pytest.raises(AddressRangeError):
        flatten_history([], small, 4)


def test_reconstruct_address_invariants():
    rng = np.random.default_rng(0)
    for _ in range(100000):
        addr = int(rng.integers(0, 1 << 62, dtype=np.int64))
        index = int(rng.integers(0, GEOMETRY.blocks_per_page))
        rebuilt = reconstruct_address(addr, index, GEOMETRY)

        assert rebuilt >> GEOMETRY.page_bits == addr >> GEOMETRY.page_bits
        assert rebuilt % GEOMETRY.block_size == 0
        assert block_index(to_block_address(rebuilt, GEOMETRY), GEOMETRY) == index
        own = block_index(to_block_address(addr, GEOMETRY), GEOMETRY)
        assert reconstruct_address(addr, own, GEOMETRY) == addr & ~(GEOMETRY.block_size - 1)

    with pytest.raises(AddressRangeError):
        reconstruct_address(0, GEOMETRY.blocks_per_page, GEOMETRY)


def test_vocabulary_layout():
    vocab = Vocabulary.for_config(GEOMETRY)
    assert (vocab.begin, vocab.end, vocab.pad, vocab.size) == (64, 65, 66, 67)
    assert vocab.is_index(63) and not vocab.is_index(64)


def test_collect_bitmap_excludes_own_index_and_other_pages():
    page, other = 5 << 6, 9 << 6
    blocks = [page | 3, page | 7, other | 1, page | 3, page | 2, page | 60]
    bitmap = collect_bitmap(blocks, 0, window=4, config=GEOMETRY)

    assert bitmap.set_indexes() == [2, 7]
    assert bitmap_to_label(bitmap, k_max=8) == [2, 7, 65]
    assert bitmap_to_label(bitmap, k_max=1) == [2, 65]
    assert collect_bitmap(blocks, 5, window=4, config=GEOMETRY).set_indexes() == []


def test_collect_bitmap_ignores_future_order():
    rng = np.random.default_rng(5)
    page = 5 << 6
    for _ in range(50):
        blocks = [page | int(i) for i in rng.integers(0, 64, size=20)]
        blocks[3] = (7 << 6) | 1
        future = blocks[1:]
        shuffled = [blocks[0]] + [future[i] for i in rng.permutation(len(future))]
        first = collect_bitmap(blocks, 0, window=19, config=GEOMETRY)
        second = collect_bitmap(shuffled, 0, window=19, config=GEOMETRY)
        assert first.set_indexes() == second.set_indexes()


def _check_labels_against_oracle(trials, max_length, seed):
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(3, 7))
        block_bits = int(rng.integers(2, 7))
        page_bits = block_bits + n
        geometry = AddressConfig(address_bits=page_bits + int(rng.integers(2, 8)), page_bits=page_bits,
                                 block_bits=block_bits)
        pages = rng.integers(0, 1 << geometry.page_address_bits, size=3)
        length = int(rng.integers(10, max_length + 1))
        addresses = [int(pages[rng.integers(0, 3)]) * geometry.page_size + int(rng.integers(0, geometry.page_size))
                     for _ in range(length)]
        history_length = int(rng.integers(1, 5))
        window = int(rng.integers(1, 40))
        k_max = int(rng.integers(1, geometry.blocks_per_page + 1))

        samples = build_dataset(_records(addresses), geometry, history_length, window, k_max)
        vocab = Vocabulary.for_config(geometry)
        assert len(samples) == length - history_length
        for sample in samples:
            expected = _oracle_label(addresses, sample.position, window, geometry, k_max)
            assert sample.label_indexes(vocab) == expected, (trial, sample.position)
            assert sample.target[-1] == vocab.end
            current_block = addresses[sample.position] >> geometry.block_bits
            assert decode_binary(sample.input[-geometry.block_address_bits:]) == current_block
            assert len(sample.input) == geometry.token_length(history_length)


def test_labels_match_forward_scan_oracle():
    print("\n" + "=" * 50)
    print("TEST: Labeling vs brute-force scan")
    print("=" * 50)

    _check_labels_against_oracle(trials=60, max_length=200, seed=42)
    print("\n✅ 60 random traces matched the oracle")


@pytest.mark.slow
def test_labels_match_oracle_on_long_traces():
    print("\n" + "=" * 50)
    print("TEST: Labeling vs brute-force scan, 1000 traces up to 10k records")
    print("=" * 50)

    _check_labels_against_oracle(trials=1000, max_length=10000, seed=43)
    print("\n✅ 1000 random traces matched the oracle")


def test_build_dataset_rejects_short_trace():
    with pytest.raises(DatasetError):
        build_dataset(_records([0, 64, 128]), GEOMETRY, history_length=3, window=4, k_max=2)


def test_parallel_build_preserves_order():
    trace = generate_synthetic(SyntheticSpec(kind='page-local-permutation', length=400, seed=1, pages=8))
    serial = build_dataset(trace, GEOMETRY, 4, 16, 4)
    parallel = build_dataset(trace, GEOMETRY, 4, 16, 4, workers=3)

    assert [s.position for s in parallel] == [s.position for s in serial]
    assert [s.target for s in parallel] == [s.target for s in serial]
    assert all(np.array_equal(a.input, b.input) for a, b in zip(serial, parallel))


def test_dataset_file_round_trip(tmp_path):
    geometry = AddressConfig(address_bits=20, page_bits=10, block_bits=6)
    trace = generate_synthetic(SyntheticSpec(kind='random', length=120, seed=4, pages=3), geometry)
    samples = build_dataset(trace, geometry, 3, 10, 4)
    path = tmp_path / "dataset.tsv"
    write_dataset(samples, path, DatasetMeta(address_config=geometry, history_length=3, window=10, k_max=4))

    loaded, meta = read_dataset(path)
    assert meta.address_config == geometry
    assert (meta.history_length, meta.window, meta.k_max, meta.first_position) == (3, 10, 4, 3)
    assert [s.target for s in loaded] == [s.target for s in samples]
    assert [s.position for s in loaded] == [s.position for s in samples]
    assert [s.page for s in loaded] == [s.page for s in samples]
    assert all(np.array_equal(a.input, b.input) for a, b in zip(loaded, samples))

    histogram = label_length_histogram(samples)
    assert sum(histogram.values()) == len(samples)


def test_read_dataset_rejects_bad_lines(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("# transformap-dataset v1\n"
                    "# address_bits=12 page_bits=8 block_bits=4 history_length=1 window=4 k_max=2 first_position=1\n"
                    "10100000\t99\n")
    with pytest.raises(DatasetError):
        read_dataset(path)
    for labels in ("3,1", "1,1"):
        path.write_text("# transformap-dataset v1\n"
                        "# address_bits=12 page_bits=8 block_bits=4 history_length=1 window=4 k_max=2 first_position=1\n"
                        f"10100000\t{labels}\n")
        with pytest.raises(DatasetError) as info:
            read_dataset(path)
        assert "strictly ascending" in str(info.value)
    path.write_text("no header\n")
    with pytest.raises(DatasetError):
        read_dataset(path)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    test_geometry_derived_widths()
    test_encode_binary_msb_first()
    test_block_page_split()
    test_flatten_history_pads_with_oldest()
    test_reconstruct_address_invariants()
    test_vocabulary_layout()
    test_collect_bitmap_excludes_own_index_and_other_pages()
    test_collect_bitmap_ignores_future_order()
    test_labels_match_forward_scan_oracle()
    test_build_dataset_rejects_short_trace()
    test_parallel_build_preserves_order()
    with tempfile.TemporaryDirectory() as tmp:
        test_dataset_file_round_trip(Path(tmp))
        test_read_dataset_rejects_bad_lines(Path(tmp))
    test_labels_match_oracle_on_long_traces()
    print("\n✅ All codec and labeling tests passed")
