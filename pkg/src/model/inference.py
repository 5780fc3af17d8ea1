"""
Inference
Beam-search decoding of block-index sequences and batch prediction over traces
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import AddressConfig
from src.errors import ContractError, InputError
from src.traces.address_codec import flatten_history, reconstruct_address, to_block_address
from src.traces.labeling import Sample, Vocabulary
from src.traces.trace_io import TraceRecord

PREDICTIONS_MAGIC = '# transformap-predictions v1'


@dataclass(frozen=True)
class Hypothesis:
    tokens: Tuple[int, ...]
    score: float
    finished: bool = False


@dataclass
class Beam:
    """Hypotheses kept at one decoding step, best first"""

    hypotheses: List[Hypothesis]
    width: int


@dataclass
class Prediction:
    """Distinct in-page block indexes predicted at one trace position"""

    block_indexes: List[int]
    position: int = -1
    addresses: List[int] = field(default_factory=list)


def _rank(hypothesis: Hypothesis):
    # Higher score first, then the lexicographically lower token sequence
    return -hypothesis.score, hypothesis.tokens


def run_beam_search(model, input_tokens, width: int, max_len: int) -> Beam:
    """
    Length-capped beam search without length normalization

    ``model`` needs ``vocabulary``, ``encode(input_tokens)`` and
    ``next_log_probs(memory, prefixes) -> (len(prefixes), V)``. BEGIN and PAD are
    never generated.

    Args:
        model: Decoder
        input_tokens: Encoder input
        width: Hypotheses kept per step
        max_len: Generated tokens allowed per hypothesis (END included)

    Returns:
        Final Beam
    """
    if width < 1 or max_len < 1:
        raise ContractError(f"beam search needs width >= 1 and max_len >= 1, got {width}, {max_len}")
    vocab: Vocabulary = model.vocabulary
    candidates_ids = [token for token in range(vocab.size) if token not in (vocab.begin, vocab.pad)]
    memory = model.encode(input_tokens)
    beam = Beam([Hypothesis((vocab.begin,), 0.0)], width)

    for _ in range(max_len):
        live = [h for h in beam.hypotheses if not h.finished]
        if not live:
            break
        log_probs = np.asarray(model.next_log_probs(memory, [list(h.tokens) for h in live]), dtype=np.float64)
        candidates = [h for h in beam.hypotheses if h.finished]
        for row, hypothesis in enumerate(live):
            for token in candidates_ids:
                candidates.append(Hypothesis(
                    tokens=hypothesis.tokens + (token,),
                    score=hypothesis.score + float(log_probs[row, token]),
                    finished=token == vocab.end,
                ))
        candidates.sort(key=_rank)
        beam = Beam(candidates[:width], width)
    return beam


def beam_search(model, input_tokens, width: int = 2, max_len: Optional[int] = None) -> List[int]:
    """
    Best decoded token sequence with BEGIN/END stripped

    The highest-scoring finished hypothesis wins; if none finished, the longest
    (ties by score).

    Args:
        model: Decoder (see run_beam_search)
        input_tokens: Encoder input
        width: Beam width
        max_len: Generated-token cap (default max_out_len - 1 of the model config)

    Returns:
        Token ids between BEGIN and END
    """
    if max_len is None:
        max_len = model.config.max_out_len - 1
    vocab: Vocabulary = model.vocabulary
    beam = run_beam_search(model, input_tokens, width, max_len)
    finished = [h for h in beam.hypotheses if h.finished]
    if finished:
        chosen = min(finished, key=_rank)
    else:
        chosen = min(beam.hypotheses, key=lambda h: (-len(h.tokens), -h.score, h.tokens))
    return [t for t in chosen.tokens if t not in (vocab.begin, vocab.end)]


def clean_indexes(tokens: Sequence[int], vocab: Vocabulary, k_max: int) -> List[int]:
    """Drop sentinels and out-of-range ids, keep first occurrences, cap at k_max"""
    seen = set()
    indexes: List[int] = []
    for token in tokens:
        token = int(token)
        if not vocab.is_index(token) or token in seen:
            continue
        seen.add(token)
        indexes.append(token)
        if len(indexes) == k_max:
            break
    return indexes


def predict(model, history: Sequence[int], config: AddressConfig, history_length: int, k_max: int,
            width: int = 2, position: int = -1) -> Prediction:
    """
    Predicted block indexes for the page of the last history entry

    Args:
        model: Trained TransformerModel
        history: Block addresses, oldest first; the last is the current access
        config: Address geometry
        history_length: t
        k_max: Maximum predicted indexes
        width: Beam width
        position: Trace position, carried into the result

    Returns:
        Prediction
    """
    tokens = flatten_history(history, config, history_length)
    raw = beam_search(model, tokens, width, max_len=k_max + 1)
    return Prediction(block_indexes=clean_indexes(raw, model.vocabulary, k_max), position=position)


def evaluate_exact_set(model, samples: Sequence[Sample], width: int = 2, k_max: Optional[int] = None) -> Optional[float]:
    """
    Fraction of samples whose predicted index set equals the label set exactly

    Returns:
        None for an empty sample list
    """
    if not samples:
        return None
    vocab: Vocabulary = model.vocabulary
    k_max = k_max if k_max is not None else model.config.max_out_len - 2
    hits = 0
    for sample in samples:
        raw = beam_search(model, sample.input, width, max_len=k_max + 1)
        if set(clean_indexes(raw, vocab, k_max)) == set(sample.label_indexes(vocab)):
            hits += 1
    return hits / len(samples)


def predict_trace(model, trace: Sequence[TraceRecord], config: AddressConfig, history_length: int,
                  k_max: int, width: int = 2, start: Optional[int] = None,
                  verbose: bool = False) -> List[Prediction]:
    """
    Predict at every position from ``start`` (default: first full history) to the end

    Each Prediction carries the reconstructed byte addresses in the page of the
    access at that position.
    """
    blocks = [to_block_address(r.addr, config) for r in trace]
    first = history_length - 1 if start is None else max(start, 0)
    predictions: List[Prediction] = []
    report_every = max(1, (len(trace) - first) // 10)
    for position in range(first, len(trace)):
        history = blocks[max(0, position - history_length + 1):position + 1]
        prediction = predict(model, history, config, history_length, k_max, width, position)
        prediction.addresses = [reconstruct_address(trace[position].addr, i, config)
                                for i in prediction.block_indexes]
        predictions.append(prediction)
        if verbose and (position - first + 1) % report_every == 0:
            print(f"   predicted {position - first + 1}/{len(trace) - first} positions")
    return predictions


def write_predictions(predictions: Sequence[Prediction], path: Union[str, Path]):
    """``position<TAB>0xADDR,0xADDR`` per line"""
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        f.write(PREDICTIONS_MAGIC + '\n')
        for prediction in predictions:
            addresses = ','.join(f"{a:#x}" for a in prediction.addresses)
            f.write(f"{prediction.position}\t{addresses}\n")


def read_predictions(path: Union[str, Path]) -> Dict[int, List[int]]:
    """
    Position -> byte addresses, from a file written by write_predictions

    Raises:
        InputError: malformed line or repeated position
    """
    path = str(path)
    table: Dict[int, List[int]] = {}
    with open(path, 'r', encoding='ascii') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip('\n')
            if not line.strip() or line.startswith('#'):
                continue
            position_text, _, addresses = line.partition('\t')
            try:
                position = int(position_text)
                values = [int(a, 16) for a in addresses.split(',')] if addresses.strip() else []
            except ValueError:
                raise InputError(f"{path}:line {line_number}: malformed prediction line {line!r}") from None
            if position < 0:
                raise InputError(f"{path}:line {line_number}: negative position {position}")
            if position in table:
                raise InputError(f"{path}:line {line_number}: position {position} listed twice")
            table[position] = values
    return table
