"""
Encoder-decoder Transformer over binary address tokens

The encoder reads t*(m+n) bits (vocabulary {0, 1}); the decoder emits block
indexes plus BEGIN/END/PAD. Post-norm residual blocks, sinusoidal positions.
"""
import math
from collections import OrderedDict
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.config import ModelConfig
from src.errors import ConfigurationError, InputError, ShapeError
from src.model import tensor as ops
from src.model.tensor import Tensor, no_grad
from src.traces.labeling import Vocabulary
from src.utils.seeding import substream

LAYER_NORM_EPS = 1e-6


@lru_cache(maxsize=16)
def _positional_table(max_len: int, d_model: int) -> np.ndarray:
    positions = np.arange(max_len, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -np.arange(0, d_model, 2, dtype=np.float64) / d_model)[None, :]
    table = np.zeros((max_len, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates)
    table.setflags(write=False)
    return table


def positional_encoding(max_len: int, d_model: int) -> Tensor:
    """
    PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(pos / 10000^(2i/d))

    Raises:
        ConfigurationError: d_model is odd
    """
    if d_model % 2 != 0:
        raise ConfigurationError(f"d_model must be even for positional encoding, got {d_model}")
    return Tensor(_positional_table(max_len, d_model))


def causal_mask(length: int) -> np.ndarray:
    """True above the diagonal: position j may not attend to positions > j"""
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    softmax(Q K^T / sqrt(d_k)) V over the last two axes

    Args:
        q: (..., Sq, d_k)
        k: (..., Sk, d_k)
        v: (..., Sk, d_v)
        mask: Boolean, broadcastable to (..., Sq, Sk); True entries get a -inf score

    Returns:
        (..., Sq, d_v)
    """
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape} does not match key width {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key rows {k.shape} do not match value rows {v.shape}")
    scores = ops.matmul(q, ops.swap_last(k)) * (1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        scores = ops.masked_fill(scores, mask)
    return ops.matmul(ops.softmax(scores, axis=-1), v)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    batch, length, width = x.shape
    return x.reshape(batch, length, heads, width // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    batch, heads, length, head_dim = x.shape
    return x.transpose(0, 2, 1, 3).reshape(batch, length, heads * head_dim)


def multi_head_attention(x_q: Tensor, x_kv: Tensor, weights: Dict[str, Tensor], heads: int,
                         mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Concat(head_1..head_h) W^O with head_i = Attention(x_q W^Q_i, x_kv W^K_i, x_kv W^V_i)

    Args:
        x_q: (B, Sq, d)
        x_kv: (B or 1, Sk, d)
        weights: ``w_q``, ``w_k``, ``w_v``, ``w_o`` each (d, d)
        heads: h, must divide d
        mask: Boolean mask broadcastable to (B, h, Sq, Sk)
    """
    width = x_q.shape[-1]
    if width % heads != 0:
        raise ShapeError(f"model width {width} is not divisible by {heads} heads")
    q = _split_heads(ops.matmul(x_q, weights['w_q']), heads)
    k = _split_heads(ops.matmul(x_kv, weights['w_k']), heads)
    v = _split_heads(ops.matmul(x_kv, weights['w_v']), heads)
    return ops.matmul(_merge_heads(scaled_dot_attention(q, k, v, mask)), weights['w_o'])


def feed_forward(x: Tensor, w_1: Tensor, b_1: Tensor, w_2: Tensor, b_2: Tensor) -> Tensor:
    """max(0, x W_1 + b_1) W_2 + b_2, position-wise"""
    if b_1.shape != (w_1.shape[-1],) or b_2.shape != (w_2.shape[-1],):
        raise ShapeError(f"bias shapes {b_1.shape}/{b_2.shape} do not match weights {w_1.shape}/{w_2.shape}")
    hidden = ops.relu(ops.matmul(x, w_1) + b_1)
    return ops.matmul(hidden, w_2) + b_2


class ModelParams:
    """Named weight tensors of one model plus the config that fixes their shapes"""

    def __init__(self, config: ModelConfig, tensors: "OrderedDict[str, Tensor]"):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def group(self, prefix: str) -> Dict[str, Tensor]:
        """Tensors under ``prefix.`` keyed by their last name component"""
        return {name[len(prefix) + 1:]: t for name, t in self.tensors.items() if name.startswith(prefix + '.')}

    def parameter_count(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def copy(self) -> 'ModelParams':
        return ModelParams(self.config, OrderedDict(
            (name, Tensor(t.data.copy(), requires_grad=True, name=name)) for name, t in self.tensors.items()
        ))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.tensors.values())


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """
    Initialize all weights from the ``init`` random sub-stream

    Linear maps are Xavier-uniform, embeddings are N(0, d_model^-0.5),
    norms start at scale 1 / shift 0, FFN biases at 0.
    """
    rng = substream(seed, 'init')
    d, f, v, dtype = config.d_model, config.d_ff, config.vocab_out, config.dtype
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def linear(name, fan_in, fan_out):
        tensors[name] = ops.xavier_uniform(rng, fan_in, fan_out, dtype=dtype, name=name)

    def attention(prefix):
        for w in ('w_q', 'w_k', 'w_v', 'w_o'):
            linear(f"{prefix}.{w}", d, d)

    def ffn(prefix):
        linear(f"{prefix}.w_1", d, f)
        tensors[f"{prefix}.b_1"] = ops.constant((f,), 0.0, dtype=dtype, name=f"{prefix}.b_1")
        linear(f"{prefix}.w_2", f, d)
        tensors[f"{prefix}.b_2"] = ops.constant((d,), 0.0, dtype=dtype, name=f"{prefix}.b_2")

    def norm(prefix):
        tensors[f"{prefix}.gamma"] = ops.constant((d,), 1.0, dtype=dtype, name=f"{prefix}.gamma")
        tensors[f"{prefix}.beta"] = ops.constant((d,), 0.0, dtype=dtype, name=f"{prefix}.beta")

    tensors['embed.input'] = ops.normal(rng, (config.vocab_in, d), d ** -0.5, dtype=dtype, name='embed.input')
    tensors['embed.output'] = ops.normal(rng, (v, d), d ** -0.5, dtype=dtype, name='embed.output')
    for i in range(config.n_layers):
        attention(f"encoder.{i}.self_attn")
        ffn(f"encoder.{i}.ffn")
        norm(f"encoder.{i}.norm_1")
        norm(f"encoder.{i}.norm_2")
    for i in range(config.n_layers):
        attention(f"decoder.{i}.self_attn")
        attention(f"decoder.{i}.cross_attn")
        ffn(f"decoder.{i}.ffn")
        norm(f"decoder.{i}.norm_1")
        norm(f"decoder.{i}.norm_2")
        norm(f"decoder.{i}.norm_3")
    linear('projection', d, v)
    return ModelParams(config, tensors)


def _as_batch(tokens) -> np.ndarray:
    array = np.asarray(tokens, dtype=np.int64)
    return array[None, :] if array.ndim == 1 else array


def _check_inputs(src: np.ndarray, tgt: Optional[np.ndarray], config: ModelConfig):
    if src.ndim != 2 or src.shape[1] == 0:
        raise InputError(f"input tokens must be a non-empty (batch, length) array, got shape {src.shape}")
    if src.shape[1] > config.max_in_len:
        raise InputError(f"input length {src.shape[1]} exceeds max_in_len {config.max_in_len}")
    if np.any((src != 0) & (src != 1)):
        raise InputError("input tokens must be 0 or 1")
    if tgt is None:
        return
    vocab = Vocabulary(config.vocab_out - 3)
    if tgt.ndim != 2 or tgt.shape[1] == 0:
        raise InputError(f"target prefix must be a non-empty (batch, length) array, got shape {tgt.shape}")
    if tgt.shape[1] > config.max_out_len:
        raise InputError(f"target prefix length {tgt.shape[1]} exceeds max_out_len {config.max_out_len}")
    if np.any((tgt < 0) | (tgt >= config.vocab_out)):
        raise InputError(f"target token outside vocabulary [0, {config.vocab_out})")
    if np.any(tgt[:, 0] != vocab.begin):
        raise InputError("target prefix must start with BEGIN")


def _embed(table: Tensor, ids: np.ndarray, config: ModelConfig) -> Tensor:
    pe = positional_encoding(ids.shape[1], config.d_model).data.astype(config.dtype)
    return ops.embedding(table, ids) * math.sqrt(config.d_model) + Tensor(pe)


def encode(params: ModelParams, src: np.ndarray, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Encoder stack: unmasked self-attention over embedded bits + positions"""
    config = params.config
    x = ops.dropout(_embed(params['embed.input'], src, config), config.dropout, rng)
    for i in range(config.n_layers):
        p = f"encoder.{i}"
        attended = multi_head_attention(x, x, params.group(f"{p}.self_attn"), config.heads)
        x = ops.layer_norm(x + ops.dropout(attended, config.dropout, rng),
                         params[f"{p}.norm_1.gamma"], params[f"{p}.norm_1.beta"], LAYER_NORM_EPS)
        ffn = params.group(f"{p}.ffn")
        hidden = feed_forward(x, ffn['w_1'], ffn['b_1'], ffn['w_2'], ffn['b_2'])
        x = ops.layer_norm(x + ops.dropout(hidden, config.dropout, rng),
                         params[f"{p}.norm_2.gamma"], params[f"{p}.norm_2.beta"], LAYER_NORM_EPS)
    return x


def decode(params: ModelParams, memory: Tensor, tgt: np.ndarray,
           rng: Optional[np.random.Generator] = None) -> Tensor:
    """Decoder stack: causal self-attention, cross-attention to ``memory``, projection to logits"""
    config = params.config
    mask = causal_mask(tgt.shape[1])
    y = ops.dropout(_embed(params['embed.output'], tgt, config), config.dropout, rng)
    for i in range(config.n_layers):
        p = f"decoder.{i}"
        attended = multi_head_attention(y, y, params.group(f"{p}.self_attn"), config.heads, mask)
        y = ops.layer_norm(y + ops.dropout(attended, config.dropout, rng),
                         params[f"{p}.norm_1.gamma"], params[f"{p}.norm_1.beta"], LAYER_NORM_EPS)
        crossed = multi_head_attention(y, memory, params.group(f"{p}.cross_attn"), config.heads)
        y = ops.layer_norm(y + ops.dropout(crossed, config.dropout, rng),
                         params[f"{p}.norm_2.gamma"], params[f"{p}.norm_2.beta"], LAYER_NORM_EPS)
        ffn = params.group(f"{p}.ffn")
        hidden = feed_forward(y, ffn['w_1'], ffn['b_1'], ffn['w_2'], ffn['b_2'])
        y = ops.layer_norm(y + ops.dropout(hidden, config.dropout, rng),
                         params[f"{p}.norm_3.gamma"], params[f"{p}.norm_3.beta"], LAYER_NORM_EPS)
    return ops.matmul(y, params['projection'])


def forward(input_tokens, target_prefix, params: ModelParams,
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Logits for every prefix position

    Args:
        input_tokens: (S,) or (B, S) bits
        target_prefix: (T,) or (B, T) tokens, each row starting with BEGIN
        params: Model weights
        rng: Dropout stream (training only)

    Returns:
        (T, vocab_out) for unbatched input, else (B, T, vocab_out)
    """
    unbatched = np.ndim(input_tokens) == 1
    src, tgt = _as_batch(input_tokens), _as_batch(target_prefix)
    _check_inputs(src, tgt, params.config)
    if src.shape[0] != tgt.shape[0]:
        raise InputError(f"batch sizes differ: input {src.shape[0]}, target {tgt.shape[0]}")
    logits = decode(params, encode(params, src, rng), tgt, rng)
    return logits.reshape(logits.shape[1:]) if unbatched else logits


class TransformerModel:
    """Inference wrapper used by beam search and the prefetcher"""

    def __init__(self, params: ModelParams):
        self.params = params

    @property
    def config(self) -> ModelConfig:
        return self.params.config

    @property
    def vocabulary(self) -> Vocabulary:
        return Vocabulary(self.config.vocab_out - 3)

    def encode(self, input_tokens: Sequence[int]) -> Tensor:
        src = _as_batch(input_tokens)
        _check_inputs(src, None, self.config)
        with no_grad():
            return encode(self.params, src)

    def next_log_probs(self, memory: Tensor, prefixes: List[List[int]]) -> np.ndarray:
        """
        Log-probabilities of the next token for each prefix (all prefixes share one length)

        Returns:
            (len(prefixes), vocab_out)
        """
        tgt = np.asarray(prefixes, dtype=np.int64)
        _check_inputs(np.zeros((1, 1), dtype=np.int64), tgt, self.config)
        with no_grad():
            logits = decode(self.params, memory, tgt)
            return ops.log_softmax(logits, axis=-1).data[:, -1, :].astype(np.float64)
