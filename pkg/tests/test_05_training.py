import contextlib
import io
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import AddressConfig, ModelConfig, TrainConfig
from src.errors import ContractError, DatasetError, InputError, TrainingDivergedError
from src.model import tensor as ops
from src.model.checkpoint import load_checkpoint
from src.model.tensor import Tensor, no_grad
from src.model.training import (AdamOptimizer, batch_loss, cross_entropy, lr_schedule, make_batch, split_holdout,
                                token_accuracy, train)
from src.model.transformer import init_params
from src.traces.labeling import Sample, Vocabulary, build_dataset
from src.traces.trace_io import SyntheticSpec, generate_synthetic

SMALL_GEOMETRY = AddressConfig(address_bits=10, page_bits=6, block_bits=3)
VOCAB = Vocabulary.for_config(SMALL_GEOMETRY)


def tiny_config() -> ModelConfig:
    return ModelConfig.for_geometry(SMALL_GEOMETRY, history_length=2, k_max=3, d_model=8, heads=2, d_ff=16,
                                    n_layers=1, dtype='float64')


def tiny_dataset():
    trace = generate_synthetic(SyntheticSpec(kind='page-local-permutation', length=64, seed=2, pages=2, period=4),
                               SMALL_GEOMETRY)
    return build_dataset(trace, SMALL_GEOMETRY, history_length=2, window=8, k_max=3)


def fast_train_config(**overrides) -> TrainConfig:
    values = dict(epochs=3, batch_size=16, seed=5, warmup_steps=10, lr_scale=0.3)
    values.update(overrides)
    return TrainConfig(**values)


def test_lr_schedule_values():
    print("\n" + "=" * 50)
    print("TEST: Warmup learning-rate schedule")
    print("=" * 50)

    assert lr_schedule(2000, 512, 2000) == pytest.approx(9.882e-4, abs=1e-7)
    rates = [lr_schedule(step, 512, 2000) for step in (1, 500, 1000, 2000, 4000, 8000)]
    print(f"Rates: {rates}")
    assert rates[0] < rates[1] < rates[2] < rates[3]
    assert rates[3] > rates[4] > rates[5]
    with pytest.raises(ContractError):
        lr_schedule(0, 512, 2000)
    print("\n✅ Schedule passed")


def test_uniform_logits_give_log_k():
    logits = Tensor(np.zeros((2, 3, 7)))
    loss = cross_entropy(logits, np.array([[0, 1, 2], [3, 4, 5]]))
    assert loss.item() == pytest.approx(math.log(7), abs=1e-9)


def test_cross_entropy_ignores_padding():
    logits = np.zeros((1, 3, 4))
    logits[0, 0, 2] = 5.0
    mask = np.array([[False, True, True]])
    loss = cross_entropy(Tensor(logits), np.array([[2, 3, 3]]), mask)
    expected = -(5.0 - math.log(math.exp(5.0) + 3))
    assert loss.item() == pytest.approx(expected, abs=1e-9)


def test_certain_prediction_gives_zero_loss():
    logits = np.zeros((1, 2, 4))
    logits[0, 0, 1] = 1000.0
    logits[0, 1, 3] = 1000.0
    loss = cross_entropy(Tensor(logits), np.array([[1, 3]]))
    assert loss.item() == 0.0


def test_all_padding_batch_is_zero_with_warning():
    captured = io.StringIO()
    with contextlib.redirect_stdout(captured):
        loss = cross_entropy(Tensor(np.zeros((1, 2, 4))), np.array([[3, 3]]), np.ones((1, 2), dtype=bool))
    assert loss.item() == 0.0
    assert "all-padding" in captured.getvalue()


def test_cross_entropy_rejects_bad_targets():
    with pytest.raises(InputError):
        cross_entropy(Tensor(np.zeros((1, 2, 4))), np.array([[0, 4]]))
    with pytest.raises(InputError):
        cross_entropy(Tensor(np.zeros((1, 2, 4))), np.array([0, 1, 2]))


def test_make_batch_shifts_and_pads():
    samples = [
        Sample(input=np.zeros(4, dtype=np.int8), target=[1, 2, VOCAB.end], position=3),
        Sample(input=np.ones(4, dtype=np.int8), target=[VOCAB.end], position=4),
    ]
    batch = make_batch(samples, VOCAB)
    print(f"Decoder inputs: {batch.decoder_inputs.tolist()}")

    assert batch.inputs.shape == (2, 4)
    assert batch.decoder_inputs.tolist() == [[VOCAB.begin, 1, 2], [VOCAB.begin, VOCAB.pad, VOCAB.pad]]
    assert batch.targets.tolist() == [[1, 2, VOCAB.end], [VOCAB.end, VOCAB.pad, VOCAB.pad]]
    assert batch.pad_mask.tolist() == [[False, False, False], [False, True, True]]

    with pytest.raises(DatasetError):
        make_batch([Sample(input=np.zeros(4, dtype=np.int8), target=[1, 2])], VOCAB)


def test_split_holdout_is_chronological():
    samples = [Sample(input=np.zeros(1), target=[VOCAB.end], position=p) for p in range(10)]
    head, tail = split_holdout(samples, 0.2)
    assert [s.position for s in head] == list(range(8))
    assert [s.position for s in tail] == [8, 9]
    head, tail = split_holdout(samples, 0.0)
    assert len(head) == 10 and tail == []


def test_first_adam_step_moves_each_weight_by_lr():
    params = init_params(tiny_config(), seed=0)
    before = params.copy()
    optimizer = AdamOptimizer(params, warmup_steps=10, clip_norm=None)
    grads = {name: np.ones_like(t.data) for name, t in params.items()}
    lr, norm = optimizer.step(grads)

    assert lr == pytest.approx(optimizer.learning_rate(1))
    assert norm == pytest.approx(math.sqrt(params.parameter_count()))
    for name in params:
        np.testing.assert_allclose(before[name].data - params[name].data, lr, rtol=1e-6)


def test_one_optimizer_step_lowers_batch_loss():
    params = init_params(tiny_config(), seed=0)
    batch = make_batch(tiny_dataset()[:16], VOCAB)
    loss = batch_loss(params, batch)
    grads = ops.backward(loss, params.tensors)

    optimizer = AdamOptimizer(params, warmup_steps=10, lr_scale=0.01, clip_norm=None)
    optimizer.step(grads)
    with no_grad():
        after = batch_loss(params, batch).item()
    print(f"Loss {loss.item():.6f} -> {after:.6f}")
    assert after < loss.item()


def test_clipping_bounds_the_update_direction():
    params = init_params(tiny_config(), seed=0)
    optimizer = AdamOptimizer(params, warmup_steps=10, clip_norm=1.0)
    grads = {name: np.full_like(t.data, 100.0) for name, t in params.items()}
    _, norm = optimizer.step(grads)
    assert norm > 1.0
    first = next(iter(optimizer.state.first_moment.values()))
    # m = (1 - beta1) * clipped gradient, and the clipped global norm is 1
    clipped = 100.0 / norm
    np.testing.assert_allclose(first, 0.1 * clipped, rtol=1e-6)


def test_zero_epochs_returns_initial_weights():
    config = tiny_config()
    params, report = train(tiny_dataset(), config, fast_train_config(epochs=0), verbose=False)
    reference = init_params(config, seed=5)

    assert report.epochs == []
    assert report.parameter_count == config.parameter_count()
    assert all(np.array_equal(params[name].data, reference[name].data) for name in params)


def test_empty_dataset_rejected():
    with pytest.raises(DatasetError):
        train([], tiny_config(), fast_train_config(), verbose=False)


def test_training_reduces_loss():
    print("\n" + "=" * 50)
    print("TEST: Training on a small periodic trace")
    print("=" * 50)

    config = tiny_config()
    params, report = train(tiny_dataset(), config, fast_train_config(epochs=15), verbose=False)
    losses = [e.mean_loss for e in report.epochs]
    print(f"Losses: {[round(x, 4) for x in losses]}")

    assert len(report.epochs) == 15
    assert losses[-1] < losses[0]
    steps = [e.step for e in report.epochs]
    assert steps == sorted(steps) and len(set(steps)) == len(steps)
    assert report.holdout_samples > 0
    assert all(0.0 <= e.token_accuracy <= 1.0 for e in report.epochs)
    assert params.all_finite()
    print("\n✅ Loss decreased")


def test_training_is_deterministic():
    dataset = tiny_dataset()
    config = tiny_config()
    first, first_report = train(dataset, config, fast_train_config(), verbose=False)
    second, second_report = train(dataset, config, fast_train_config(), verbose=False)

    assert all(np.array_equal(first[name].data, second[name].data) for name in first)
    assert first_report.deterministic_json() == second_report.deterministic_json()
    assert 'wall_time_s' not in first_report.deterministic_json()

    other, _ = train(dataset, config, fast_train_config(seed=6), verbose=False)
    assert not all(np.array_equal(first[name].data, other[name].data) for name in first)


def test_per_epoch_checkpoints_and_exact_set(tmp_path):
    config = tiny_config()
    dataset = tiny_dataset()
    train_config = fast_train_config(epochs=2, checkpoint_dir=str(tmp_path / "ckpt"))
    params, report = train(dataset, config, train_config, exact_set_eval=True, k_max=3,
                           checkpoint_info={'address_config': SMALL_GEOMETRY, 'history_length': 2, 'k_max': 3},
                           verbose=False)

    assert sorted(os.listdir(tmp_path / "ckpt")) == ['epoch_001.tmap', 'epoch_002.tmap']
    loaded, meta = load_checkpoint(tmp_path / "ckpt" / "epoch_002.tmap")
    assert meta.address == SMALL_GEOMETRY and meta.k_max == 3
    np.testing.assert_allclose(loaded['embed.input'].data, params['embed.input'].data, rtol=1e-6, atol=1e-7)
    assert all(0.0 <= e.exact_set_accuracy <= 1.0 for e in report.epochs)


def test_divergence_is_reported():
    config = tiny_config()
    poisoned = init_params(config, seed=0)
    poisoned['embed.input'].data[:] = np.nan
    with pytest.raises(TrainingDivergedError) as info:
        train(tiny_dataset(), config, fast_train_config(), initial=poisoned, verbose=False)
    assert info.value.step == 1


def test_token_accuracy_empty_holdout():
    assert token_accuracy(init_params(tiny_config(), 0), []) is None


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    test_lr_schedule_values()
    test_uniform_logits_give_log_k()
    test_cross_entropy_ignores_padding()
    test_certain_prediction_gives_zero_loss()
    test_all_padding_batch_is_zero_with_warning()
    test_cross_entropy_rejects_bad_targets()
    test_make_batch_shifts_and_pads()
    test_split_holdout_is_chronological()
    test_first_adam_step_moves_each_weight_by_lr()
    test_one_optimizer_step_lowers_batch_loss()
    test_clipping_bounds_the_update_direction()
    test_zero_epochs_returns_initial_weights()
    test_empty_dataset_rejected()
    test_training_reduces_loss()
    test_training_is_deterministic()
    with tempfile.TemporaryDirectory() as tmp:
        test_per_epoch_checkpoints_and_exact_set(Path(tmp))
    test_divergence_is_reported()
    test_token_accuracy_empty_holdout()
    print("\n✅ All training tests passed")
