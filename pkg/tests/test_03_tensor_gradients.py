import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.errors import ContractError, ShapeError
from src.model import tensor as ops
from src.model.tensor import Tensor, no_grad

TOLERANCE = 1e-5


def _numeric_grads(build, arrays, eps=1e-6):
    grads = []
    for array in arrays:
        grad = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + eps
            plus = build([Tensor(a.copy()) for a in arrays]).item()
            array[index] = original - eps
            minus = build([Tensor(a.copy()) for a in arrays]).item()
            array[index] = original
            grad[index] = (plus - minus) / (2 * eps)
        grads.append(grad)
    return grads


def _relative_error(analytic, numeric):
    scale = max(1e-8, float(np.max(np.abs(analytic) + np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_gradients(op, *arrays, seed=0):
    """Compare backprop against central differences for sum(op(...) * fixed weights)"""
    arrays = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
    sample = op(*[Tensor(a) for a in arrays])
    weights = np.random.default_rng(seed).normal(size=sample.shape)

    def build(tensors):
        return ops.tensor_sum(op(*tensors) * Tensor(weights))

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(leaves).backward()
    numeric = _numeric_grads(build, arrays)
    errors = [_relative_error(leaf.grad, grad) for leaf, grad in zip(leaves, numeric)]
    return max(errors)


RNG = np.random.default_rng(1234)
CASES = {
    'add_broadcast': (lambda a, b: a + b, RNG.normal(size=(3, 4)), RNG.normal(size=(4,))),
    'sub': (lambda a, b: a - b, RNG.normal(size=(2, 3)), RNG.normal(size=(2, 3))),
    'mul_broadcast': (lambda a, b: a * b, RNG.normal(size=(2, 3, 4)), RNG.normal(size=(1, 3, 1))),
    'div': (lambda a, b: a / b, RNG.normal(size=(3,)), RNG.uniform(1.0, 2.0, size=(3,))),
    'pow': (lambda a: a ** 3.0, RNG.normal(size=(4,))),
    'exp': (ops.exp, RNG.normal(size=(2, 3))),
    'log': (ops.log, RNG.uniform(0.5, 2.0, size=(2, 3))),
    'relu': (ops.relu, RNG.normal(size=(5, 3)) + 0.05),
    'matmul_batched': (ops.matmul, RNG.normal(size=(2, 3, 4)), RNG.normal(size=(4, 5))),
    'reshape': (lambda a: a.reshape(6, 2), RNG.normal(size=(3, 4))),
    'transpose': (lambda a: a.transpose(2, 0, 1), RNG.normal(size=(2, 3, 4))),
    'sum_axis': (lambda a: a.sum(axis=1), RNG.normal(size=(3, 4))),
    'mean_keepdims': (lambda a: a.mean(axis=-1, keepdims=True), RNG.normal(size=(3, 4))),
    'softmax': (lambda a: ops.softmax(a, axis=-1), RNG.normal(size=(3, 5))),
    'log_softmax': (lambda a: ops.log_softmax(a, axis=-1), RNG.normal(size=(3, 5))),
    'layer_norm': (ops.layer_norm, RNG.normal(size=(2, 3, 6)), RNG.normal(size=(6,)), RNG.normal(size=(6,))),
    'masked_softmax': (lambda a: ops.softmax(ops.masked_fill(a, np.triu(np.ones((4, 4), bool), 1)), axis=-1),
                       RNG.normal(size=(4, 4))),
}


@pytest.mark.parametrize('name', sorted(CASES))
def test_op_gradients(name):
    op, *arrays = CASES[name]
    error = check_gradients(op, *arrays)
    print(f"{name}: relative error {error:.2e}")
    assert error < TOLERANCE


def test_embedding_gradient_scatter_adds_repeated_ids():
    table = Tensor(np.arange(12, dtype=np.float64).reshape(4, 3), requires_grad=True)
    ids = np.array([[1, 1, 3]])
    out = ops.embedding(table, ids)
    ops.tensor_sum(out).backward()

    np.testing.assert_array_equal(out.data[0, 0], [3.0, 4.0, 5.0])
    np.testing.assert_array_equal(table.grad, [[0, 0, 0], [2, 2, 2], [0, 0, 0], [1, 1, 1]])


def test_softmax_rows_sum_to_one_and_are_stable():
    logits = Tensor(np.array([[1000.0, 1000.0, -1000.0], [0.0, 1.0, 2.0]]))
    probs = ops.softmax(logits).data
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(probs[0], [0.5, 0.5, 0.0], atol=1e-12)
    assert np.all(np.isfinite(ops.log_softmax(logits).data))


def test_masked_positions_get_zero_probability():
    mask = np.triu(np.ones((3, 3), dtype=bool), k=1)
    probs = ops.softmax(ops.masked_fill(Tensor(np.zeros((3, 3))), mask)).data
    assert np.all(probs[mask] == 0.0)
    np.testing.assert_allclose(probs[2], [1 / 3, 1 / 3, 1 / 3])


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()
    with pytest.raises(ContractError):
        ops.backward(x * 2.0, {'x': x})


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError) as info:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    assert "(2, 3)" in str(info.value) and "(4, 5)" in str(info.value)


def test_matmul_example_and_associativity():
    product = ops.matmul(Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])), Tensor(np.array([[5.0], [6.0]])))
    np.testing.assert_array_equal(product.data, [[17.0], [39.0]])

    rng = np.random.default_rng(7)
    a, b, c = (Tensor(rng.normal(size=shape)) for shape in ((2, 3), (3, 4), (4, 5)))
    left = ops.matmul(ops.matmul(a, b), c).data
    right = ops.matmul(a, ops.matmul(b, c)).data
    np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ops.tensor_sum(x * 3.0)
    assert not y.requires_grad
    assert ops.is_grad_enabled()


def test_backward_returns_zero_for_unused_parameters():
    used = Tensor(np.array([2.0]), requires_grad=True)
    unused = Tensor(np.array([5.0, 6.0]), requires_grad=True)
    grads = ops.backward(ops.tensor_sum(used * used), {'used': used, 'unused': unused})
    np.testing.assert_allclose(grads['used'], [4.0])
    np.testing.assert_array_equal(grads['unused'], [0.0, 0.0])


def test_global_norm():
    assert ops.global_norm([np.array([3.0]), np.array([[4.0]])]) == pytest.approx(5.0)


if __name__ == "__main__":
    for case in sorted(CASES):
        test_op_gradients(case)
    test_embedding_gradient_scatter_adds_repeated_ids()
    test_softmax_rows_sum_to_one_and_are_stable()
    test_masked_positions_get_zero_probability()
    test_backward_requires_scalar()
    test_matmul_shape_error_names_shapes()
    test_matmul_example_and_associativity()
    test_no_grad_records_nothing()
    test_backward_returns_zero_for_unused_parameters()
    test_global_norm()
    print("\n✅ All tensor tests passed")
