"""
Training loop
Cross-entropy over shifted label sequences, Adam with bias correction,
warmup learning-rate schedule and global-norm clipping
"""
import math
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from src.config import Config, ModelConfig, TrainConfig
from src.errors import ContractError, DatasetError, InputError, TrainingDivergedError
from src.model import tensor as ops
from src.model.checkpoint import save_checkpoint
from src.model.inference import evaluate_exact_set
from src.model.tensor import Tensor, no_grad
from src.model.transformer import ModelParams, TransformerModel, forward, init_params
from src.traces.labeling import Sample, Vocabulary
from src.utils.seeding import substream


def cross_entropy(logits: Tensor, targets: np.ndarray, pad_mask: Optional[np.ndarray] = None,
                  verbose: bool = True) -> Tensor:
    """
    -(1/N) sum_i sum_k y_ik log p_ik over unmasked positions

    Args:
        logits: (..., K)
        targets: Class ids, shape logits.shape[:-1]
        pad_mask: True where the position is padding and must not count
        verbose: Print the all-padding warning

    Returns:
        Scalar loss; 0 when every position is masked
    """
    num_classes = logits.shape[-1]
    flat_logits = logits.reshape(-1, num_classes)
    flat_targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if flat_targets.shape[0] != flat_logits.shape[0]:
        raise InputError(f"targets shape {np.shape(targets)} does not match logits {logits.shape}")
    keep = np.ones_like(flat_targets, dtype=bool) if pad_mask is None else ~np.asarray(pad_mask, bool).reshape(-1)

    kept_targets = flat_targets[keep]
    if np.any((kept_targets < 0) | (kept_targets >= num_classes)):
        raise InputError(f"target id outside [0, {num_classes})")
    count = int(keep.sum())
    if count == 0:
        if verbose:
            print("⚠ WARNING: cross-entropy over an all-padding batch; loss defined as 0")
        return Tensor(np.zeros((), dtype=logits.dtype))

    one_hot = np.zeros(flat_logits.shape, dtype=logits.dtype)
    one_hot[np.flatnonzero(keep), kept_targets] = 1.0
    log_probs = ops.log_softmax(flat_logits, axis=-1)
    return ops.neg(ops.tensor_sum(log_probs * Tensor(one_hot))) * (1.0 / count)


def lr_schedule(step: int, d_model: int, warmup_steps: int) -> float:
    """
    d_model^-0.5 * min(step^-0.5, step * warmup_steps^-1.5)

    Raises:
        ContractError: step < 1
    """
    if step < 1:
        raise ContractError(f"learning-rate schedule is defined for step >= 1, got {step}")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup_steps ** -1.5)


@dataclass
class OptimizerState:
    """Adam moments and step counter"""

    first_moment: Dict[str, np.ndarray]
    second_moment: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    warmup_steps: int = 2000


class AdamOptimizer:
    """Bias-corrected Adam driven by the warmup schedule"""

    def __init__(self, params: ModelParams, warmup_steps: int = 2000, beta1: float = 0.9,
                 beta2: float = 0.98, eps: float = 1e-9, lr_scale: float = 1.0,
                 clip_norm: Optional[float] = 1.0):
        self.params = params
        self.lr_scale = lr_scale
        self.clip_norm = clip_norm
        self.state = OptimizerState(
            first_moment={n: np.zeros_like(t.data) for n, t in params.items()},
            second_moment={n: np.zeros_like(t.data) for n, t in params.items()},
            beta1=beta1, beta2=beta2, eps=eps, warmup_steps=warmup_steps,
        )

    def learning_rate(self, step: int) -> float:
        return self.lr_scale * lr_schedule(step, self.params.config.d_model, self.state.warmup_steps)

    def step(self, grads: Dict[str, np.ndarray]) -> Tuple[float, float]:
        """
        Apply one update in place

        Returns:
            (learning rate used, gradient norm before clipping)
        """
        state = self.state
        state.step += 1
        lr = self.learning_rate(state.step)
        norm = ops.global_norm(grads.values())
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / (norm + 1e-12)

        correction1 = 1.0 - state.beta1 ** state.step
        correction2 = 1.0 - state.beta2 ** state.step
        for name, param in self.params.items():
            g = grads[name] * scale
            m = state.first_moment[name]
            v = state.second_moment[name]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            param.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.data.dtype)
        return lr, norm


class EpochStats(BaseModel):
    """Per-epoch training summary"""

    epoch: int
    step: int
    mean_loss: float
    token_accuracy: Optional[float] = None
    exact_set_accuracy: Optional[float] = None
    learning_rate: float
    wall_time_s: float = 0.0


class TrainReport(BaseModel):
    """Training history"""

    epochs: List[EpochStats] = []
    train_samples: int = 0
    holdout_samples: int = 0
    parameter_count: int = 0
    seed: int = 0

    @property
    def wall_time_s(self) -> float:
        return sum(e.wall_time_s for e in self.epochs)

    def deterministic_json(self) -> str:
        """JSON without wall-clock fields, so identical runs produce identical bytes"""
        return self.model_dump_json(indent=2, exclude={'epochs': {'__all__': {'wall_time_s'}}})

    def timing(self) -> 'TrainTiming':
        return TrainTiming(
            epochs=[EpochTiming(epoch=e.epoch, wall_time_s=e.wall_time_s) for e in self.epochs],
            total_wall_time_s=self.wall_time_s,
        )


class EpochTiming(BaseModel):
    epoch: int
    wall_time_s: float


class TrainTiming(BaseModel):
    """Wall-clock side file of a training run"""

    epochs: List[EpochTiming] = []
    total_wall_time_s: float = 0.0


@dataclass
class Batch:
    """Decoder input is BEGIN + labels, target is labels + END"""

    inputs: np.ndarray
    decoder_inputs: np.ndarray
    targets: np.ndarray
    pad_mask: np.ndarray


def make_batch(samples: Sequence[Sample], vocab: Vocabulary) -> Batch:
    """Stack inputs and pad target sequences to the batch maximum with PAD"""
    inputs = np.stack([np.asarray(s.input, dtype=np.int64) for s in samples])
    longest = max(len(s.target) for s in samples)
    decoder_inputs = np.full((len(samples), longest), vocab.pad, dtype=np.int64)
    targets = np.full((len(samples), longest), vocab.pad, dtype=np.int64)
    for row, sample in enumerate(samples):
        label = list(sample.target)
        if not label or label[-1] != vocab.end:
            raise DatasetError(f"sample at position {sample.position} does not end with END")
        decoder_inputs[row, :len(label)] = [vocab.begin] + label[:-1]
        targets[row, :len(label)] = label
    return Batch(inputs=inputs, decoder_inputs=decoder_inputs, targets=targets, pad_mask=targets == vocab.pad)


def batch_loss(params: ModelParams, batch: Batch, rng: Optional[np.random.Generator] = None,
               verbose: bool = True) -> Tensor:
    logits = forward(batch.inputs, batch.decoder_inputs, params, rng)
    return cross_entropy(logits, batch.targets, batch.pad_mask, verbose=verbose)


def token_accuracy(params: ModelParams, samples: Sequence[Sample], batch_size: int = 64) -> Optional[float]:
    """Next-token accuracy with the true prefix fed in, over non-padding positions"""
    if not samples:
        return None
    vocab = Vocabulary(params.config.vocab_out - 3)
    correct = total = 0
    with no_grad():
        for start in range(0, len(samples), batch_size):
            batch = make_batch(samples[start:start + batch_size], vocab)
            logits = forward(batch.inputs, batch.decoder_inputs, params).data
            predicted = logits.argmax(axis=-1)
            keep = ~batch.pad_mask
            correct += int(((predicted == batch.targets) & keep).sum())
            total += int(keep.sum())
    return correct / total if total else None


def split_holdout(dataset: Sequence[Sample], fraction: float) -> Tuple[List[Sample], List[Sample]]:
    """Chronological split: the trailing ``fraction`` of samples is held out"""
    held = int(math.floor(len(dataset) * fraction))
    if held >= len(dataset):
        held = len(dataset) - 1
    cut = len(dataset) - held
    return list(dataset[:cut]), list(dataset[cut:])


def train(dataset: Sequence[Sample], model_config: ModelConfig, train_config: TrainConfig,
          holdout: Optional[Sequence[Sample]] = None, initial: Optional[ModelParams] = None,
          exact_set_eval: bool = False, beam_width: int = 2, k_max: Optional[int] = None,
          checkpoint_info: Optional[Dict] = None,
          verbose: Optional[bool] = None) -> Tuple[ModelParams, TrainReport]:
    """
    Optimize a model on labeled samples

    Args:
        dataset: Training samples (if ``holdout`` is None, the trailing
            ``holdout_fraction`` of it is held out)
        model_config: Architecture
        train_config: Loop/optimizer settings
        holdout: Explicit held-out samples
        initial: Start from these weights instead of a fresh initialization
        exact_set_eval: Also report exact-set accuracy via beam search each epoch
        beam_width: Beam width for exact-set evaluation
        k_max: Label cap for exact-set evaluation (default max_out_len - 2)
        checkpoint_info: Extra header fields for per-epoch checkpoints
            (address_config, history_length, k_max)
        verbose: Print per-epoch progress (default Config.VERBOSE)

    Returns:
        (trained params, TrainReport)
    """
    verbose = Config.VERBOSE if verbose is None else verbose
    if not dataset:
        raise DatasetError("cannot train on an empty dataset")

    if holdout is None:
        train_samples, holdout = split_holdout(dataset, train_config.holdout_fraction)
    else:
        train_samples, holdout = list(dataset), list(holdout)

    params = initial.copy() if initial is not None else init_params(model_config, train_config.seed)
    report = TrainReport(train_samples=len(train_samples), holdout_samples=len(holdout),
                         parameter_count=params.parameter_count(), seed=train_config.seed)
    if train_config.epochs == 0:
        return params, report

    vocab = Vocabulary(model_config.vocab_out - 3)
    optimizer = AdamOptimizer(params, warmup_steps=train_config.warmup_steps, beta1=train_config.beta1,
                              beta2=train_config.beta2, eps=train_config.eps, lr_scale=train_config.lr_scale,
                              clip_norm=train_config.clip_norm)
    shuffle_rng = substream(train_config.seed, 'shuffle')
    dropout_rng = substream(train_config.seed, 'dropout') if model_config.dropout > 0 else None
    k_max = k_max if k_max is not None else model_config.max_out_len - 2

    if verbose:
        print("\n" + "=" * 80)
        print("🧠 TRAINING - Starting")
        print("=" * 80)
        print(f"📊 Samples: {len(train_samples)} train / {len(holdout)} held out")
        print(f"🔧 Parameters: {report.parameter_count}  (d_model={model_config.d_model}, "
              f"heads={model_config.heads}, layers={model_config.n_layers})")
        print("-" * 80)

    lr = 0.0
    for epoch in range(1, train_config.epochs + 1):
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(train_samples))
        losses: List[float] = []
        for start in range(0, len(order), train_config.batch_size):
            batch = make_batch([train_samples[i] for i in order[start:start + train_config.batch_size]], vocab)
            loss = batch_loss(params, batch, dropout_rng, verbose=verbose)
            value = float(loss.item())
            if not math.isfinite(value):
                raise TrainingDivergedError(optimizer.state.step + 1, value)
            grads = ops.backward(loss, params.tensors)
            lr, _ = optimizer.step(grads)
            losses.append(value)

        stats = EpochStats(
            epoch=epoch,
            step=optimizer.state.step,
            mean_loss=float(np.mean(losses)),
            token_accuracy=token_accuracy(params, holdout, train_config.batch_size),
            learning_rate=lr,
        )
        if exact_set_eval and holdout:
            stats.exact_set_accuracy = evaluate_exact_set(TransformerModel(params), holdout, beam_width, k_max)
        stats.wall_time_s = time.perf_counter() - started
        report.epochs.append(stats)

        if train_config.checkpoint_dir:
            os.makedirs(train_config.checkpoint_dir, exist_ok=True)
            save_checkpoint(os.path.join(train_config.checkpoint_dir, f"epoch_{epoch:03d}.tmap"), params,
                            **(checkpoint_info or {}))

        if verbose:
            accuracy = '-' if stats.token_accuracy is None else f"{stats.token_accuracy:.4f}"
            exact = '' if stats.exact_set_accuracy is None else f"  exact-set {stats.exact_set_accuracy:.4f}"
            print(f"   epoch {epoch:3d}  step {stats.step:6d}  loss {stats.mean_loss:.4f}  "
                  f"token-acc {accuracy}{exact}  lr {lr:.2e}  ({stats.wall_time_s:.1f}s)")

    if verbose:
        print("✅ Training finished")
        print("=" * 80 + "\n")
    return params, report
