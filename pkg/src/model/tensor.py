"""
Dense tensors with reverse-mode differentiation over numpy arrays

Every op records its parents and a closure that pushes the output gradient
back to them; ``Tensor.backward`` walks the recorded graph once in reverse
topological order.
"""
import math
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import Config
from src.errors import ContractError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad():
    """Run forward ops without recording a graph (inference)"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """An n-dimensional array that can track gradients"""

    __slots__ = ('data', 'grad', 'requires_grad', 'name', '_parents', '_backward', '_op')

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = ''

    # ----- bookkeeping -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, op={self._op or 'leaf'})"

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    # ----- arithmetic ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    # ----- shape and reductions -----------------------------------------

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> 'Tensor':
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self) -> 'Tensor':
        return swap_last(self)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return mean(self, axis=axis, keepdims=keepdims)

    # ----- differentiation ----------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None):
        """
        Populate ``.grad`` on every tensor that requires it and is reachable

        Raises:
            ContractError: called on a non-scalar tensor without an explicit seed gradient
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)

        order = _topological_order(self)
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # Release the graph so intermediate buffers can be freed
        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node.grad = None


def _topological_order(root: Tensor) -> list:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype or np.float64))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None],
            op: str, check_finite: bool = True) -> Tensor:
    out = Tensor(data)
    if Config.DEBUG_CHECKS and check_finite and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----- element-wise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b, a.dtype if isinstance(a, Tensor) else None)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward, 'add')


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward, 'mul')


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(-g)

    return _result(-a.data, (a,), backward, 'neg')


def power(a: Tensor, exponent: float) -> Tensor:
    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1))

    return _result(a.data ** exponent, (a,), backward, 'pow')


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out_data)

    return _result(out_data, (a,), backward, 'exp')


def log(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(g / a.data)

    return _result(np.log(a.data), (a,), backward, 'log')


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0

    def backward(g):
        a._accumulate(g * positive)

    return _result(np.where(positive, a.data, 0).astype(a.dtype), (a,), backward, 'relu')


def masked_fill(a: Tensor, mask: np.ndarray, value: float = -np.inf) -> Tensor:
    """Replace entries where ``mask`` is True; masked entries receive no gradient"""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)

    def backward(g):
        a._accumulate(np.where(mask, 0, g))

    return _result(np.where(mask, a.dtype.type(value), a.data), (a,), backward, 'masked_fill',
                   check_finite=False)


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when rate is 0 or no generator is given"""
    if rate <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    return mul(a, Tensor(keep))


# ----- linear algebra -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes, with numpy batch broadcasting

    Raises:
        ShapeError: inner dimensions differ
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(a.data @ b.data, (a, b), backward, 'matmul')


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward, 'reshape')


def transpose(a: Tensor, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(np.transpose(g, inverse))

    return _result(np.transpose(a.data, axes), (a,), backward, 'transpose')


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, 'sum')


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ----- normalizations -------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax with max-subtraction; rows sum to 1"""
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        a._accumulate(out_data * (g - np.sum(g * out_data, axis=axis, keepdims=True)))

    return _result(out_data, (a,), backward, 'softmax')


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    out_data = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))

    def backward(g):
        a._accumulate(g - np.exp(out_data) * np.sum(g, axis=axis, keepdims=True))

    return _result(out_data, (a,), backward, 'log_softmax')


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then scale and shift"""
    if gamma.shape != (a.shape[-1],) or beta.shape != (a.shape[-1],):
        raise ShapeError(f"layer_norm parameters {gamma.shape}/{beta.shape} do not match width {a.shape[-1]}")
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std
    width = a.shape[-1]

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * normalized, gamma.shape))
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if a.requires_grad:
            d_norm = g * gamma.data
            a._accumulate(inv_std / width * (
                width * d_norm
                - d_norm.sum(axis=-1, keepdims=True)
                - normalized * (d_norm * normalized).sum(axis=-1, keepdims=True)
            ))

    return _result(normalized * gamma.data + beta.data, (a, gamma, beta), backward, 'layer_norm')


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add back into the rows"""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accumulate(grad)

    return _result(table.data[ids], (table,), backward, 'embedding')


# ----- parameters -----------------------------------------------------------

def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype='float32',
                   name: Optional[str] = None) -> Tensor:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))"""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype), requires_grad=True, name=name)


def normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float, dtype='float32',
           name: Optional[str] = None) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True, name=name)


def constant(shape: Tuple[int, ...], value: float, dtype='float32', name: Optional[str] = None) -> Tensor:
    return Tensor(np.full(shape, value, dtype=dtype), requires_grad=True, name=name)


def backward(loss: Tensor, parameters: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    """
    Run backpropagation from ``loss`` and collect one gradient per parameter

    Parameters the loss does not depend on get an all-zero gradient.

    Raises:
        ContractError: loss is not a scalar
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
    for param in parameters.values():
        param.zero_grad()
    loss.backward()
    return {
        name: (param.grad if param.grad is not None else np.zeros_like(param.data))
        for name, param in parameters.items()
    }


def global_norm(grads: Iterable[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
