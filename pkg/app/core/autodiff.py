"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every primitive computes its value with numpy, checks that the result is
finite, and registers a closure mapping the output gradient to the input
gradients. ``backward`` walks the graph in reverse topological order.

Gradients accumulate: calling ``backward`` twice on the same graph without
``zero_grad`` doubles every ``.grad``.
"""
import itertools
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import (
    DomainError,
    UsageError,
    raise_dimension_error,
    raise_numerical_error,
)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

# Finite stand-in for -inf in causal masking; exp() of it underflows to exactly 0
MASK_VALUE = -1e30

_node_ids = itertools.count()


class Tensor:
    """A value in the compute graph.

    Attributes:
        id: Unique node identifier.
        op: Primitive tag ("leaf" for inputs and parameters).
        data: Row-major float64 values.
        parents: Input nodes (empty for leaves and for constant results).
        requires_grad: Whether gradients flow to this node.
        grad: Accumulated gradient, same shape as ``data`` once populated.
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        op: str = "leaf",
        parents: Tuple["Tensor", ...] = (),
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.id = next(_node_ids)
        self.op = op
        self.parents = parents
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def inputs(self) -> List[int]:
        """Ids of the input nodes."""
        return [p.id for p in self.parents]

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(
                message="item() needs a single-element tensor",
                details={"shape": list(self.shape)}
            )
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(id={self.id}, op={self.op}, shape={self.shape}{label})"

    # Operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError(message="division by a Tensor is not a primitive; use scale or mul")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(value: Union["Tensor", ArrayLike]) -> Tensor:
    """Wrap arrays and scalars as constant leaves; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False, op="const")


def parameter(value: ArrayLike, name: Optional[str] = None) -> Tensor:
    """A leaf that receives gradients."""
    return Tensor(value, requires_grad=True, op="leaf", name=name)


def _result(data: np.ndarray, op: str, parents: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise_numerical_error(op, hint="overflow or invalid input")
    requires_grad = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires_grad, op=op, parents=parents if requires_grad else ())
    if requires_grad:
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out dimensions that numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise_dimension_error(op, a.shape, b.shape)


# Elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, "mul", (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        return (g * c,)

    return _result(a.data * c, "scale", (a,), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (-g,)

    return _result(-a.data, "neg", (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _result(out, "exp", (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError(message="log of a non-positive value", details={"operation": "log"})

    def backward(g):
        return (g / a.data,)

    return _result(np.log(a.data), "log", (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return _result(a.data * mask, "relu", (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * d_inner
        return (g * local,)

    return _result(out, "gelu", (a,), backward)


# Reductions

def _normalize_axis(axis: Optional[Union[int, Tuple[int, ...]]], ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(ax % ndim for ax in axes)


def sum(a, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.sum(a.data, axis=axes, keepdims=keepdims), "sum", (a,), backward)


def mean(a, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    count = a.data.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _result(np.mean(a.data, axis=axes, keepdims=keepdims), "mean", (a,), backward)


def sum_rows(a) -> Tensor:
    """Row sums over the last axis, keeping it as size 1."""
    return sum(a, axis=-1, keepdims=True)


# Shape

def transpose(a, axis1: int = -2, axis2: int = -1) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (np.swapaxes(g, axis1, axis2),)

    return _result(np.swapaxes(a.data, axis1, axis2).copy(), "transpose", (a,), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise_dimension_error("reshape", tuple(shape), a.shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _result(out, "reshape", (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError:
        raise_dimension_error("concat", "matching non-concat axes", [t.shape for t in parts])
    sizes = [t.shape[axis] for t in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, "concat", parts, backward)


def slice_last(a, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of the last axis."""
    a = as_tensor(a)
    if not 0 <= start < stop <= a.shape[-1]:
        raise_dimension_error("slice_last", f"0 <= start < stop <= {a.shape[-1]}", (start, stop))

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        return (full,)

    return _result(a.data[..., start:stop].copy(), "slice", (a,), backward)


def split(a, sections: int) -> List[Tensor]:
    """Split the last axis into equal sections."""
    a = as_tensor(a)
    width = a.shape[-1]
    if sections < 1 or width % sections != 0:
        raise_dimension_error("split", f"last axis divisible by {sections}", width)
    step = width // sections
    return [slice_last(a, i * step, (i + 1) * step) for i in range(sections)]


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    shapes = {t.shape for t in parts}
    if len(shapes) != 1:
        raise_dimension_error("stack", "equal shapes", [t.shape for t in parts])
    out = np.stack([t.data for t in parts], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(out, "stack", parts, backward)


# Linear algebra

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; ``b`` may be 2-D and shared."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise_dimension_error("matmul", "operands with at least 2 dims", (a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise_dimension_error("matmul", f"inner dim {a.shape[-1]}", b.shape[-2])
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise_dimension_error("matmul", a.shape[:-2], b.shape[:-2])

    def backward(g):
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2:
            k, n = b.shape
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            grad_b = np.swapaxes(a.data, -1, -2) @ g
        return grad_a, grad_b

    return _result(a.data @ b.data, "matmul", (a, b), backward)


# Indexing

def embedding(weight, ids: ArrayLike) -> Tensor:
    """Row lookup: ``weight[ids]``; gradients scatter-add back into rows."""
    weight = as_tensor(weight)
    index = np.asarray(ids, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= weight.shape[0]):
        raise_dimension_error("embedding", f"ids in [0, {weight.shape[0]})", (int(index.min()), int(index.max())))

    def backward(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(weight.data[index], "embedding", (weight,), backward)


def scatter_rows(values, index: ArrayLike, size: int) -> Tensor:
    """Place rows of ``values`` at ``index`` in a zero tensor with ``size`` rows."""
    values = as_tensor(values)
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != values.shape[0]:
        raise_dimension_error("scatter_rows", values.shape[0], index.shape[0])
    out = np.zeros((size,) + values.shape[1:])
    np.add.at(out, index, values.data)

    def backward(g):
        return (g[index],)

    return _result(out, "scatter", (values,), backward)


def masked_fill(a, mask: np.ndarray, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where ``mask`` is true with a constant."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)

    def backward(g):
        return (np.where(mask, 0.0, g),)

    return _result(np.where(mask, value, a.data), "masked_fill", (a,), backward)


# Normalization and softmax

def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    width = x.shape[-1]

    def backward(g):
        gx = g * gain.data
        grad_x = inv_std * (
            gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        )
        grad_gain = (g * xhat).reshape(-1, width).sum(axis=0)
        grad_bias = g.reshape(-1, width).sum(axis=0)
        return grad_x, grad_gain, grad_bias

    return _result(xhat * gain.data + bias.data, "layer_norm", (x, gain, bias), backward)


def _check_temperature(temperature: ArrayLike) -> np.ndarray:
    t = np.asarray(temperature, dtype=np.float64)
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise DomainError(
            message="temperature must be positive and finite",
            details={"operation": "softmax", "min_temperature": float(np.min(t)) if t.size else None}
        )
    return t


def _row_temperature(t: np.ndarray, ndim: int) -> np.ndarray:
    # scalar, or one temperature per row (shape = leading dims)
    return t if t.ndim == 0 else t.reshape(t.shape + (1,) * (ndim - t.ndim))


def softmax_rows(z, temperature: ArrayLike = 1.0) -> Tensor:
    """Softmax over the last axis of ``z / temperature``, max-subtracted."""
    z = as_tensor(z)
    t = _row_temperature(_check_temperature(temperature), z.ndim)
    scaled = z.data / t
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)) / t,)

    return _result(s, "softmax", (z,), backward)


def log_softmax_rows(z, temperature: ArrayLike = 1.0) -> Tensor:
    """Log-softmax over the last axis of ``z / temperature``."""
    z = as_tensor(z)
    t = _row_temperature(_check_temperature(temperature), z.ndim)
    scaled = z.data / t
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    s = np.exp(out)

    def backward(g):
        return ((g - s * g.sum(axis=-1, keepdims=True)) / t,)

    return _result(out, "log_softmax", (z,), backward)


# Reverse pass

def topological_order(root: Tensor) -> List[Tensor]:
    """Nodes reachable from ``root``, inputs before outputs."""
    order: List[Tensor] = []
    visited = set()
    stack_: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in visited:
            continue
        visited.add(node.id)
        stack_.append((node, True))
        for parent in node.parents:
            if parent.id not in visited:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor) -> Dict[int, np.ndarray]:
    """Propagate d(loss)/d(node) to every node that requires gradients.

    Args:
        loss: Scalar root node.

    Returns:
        Map from node id to the gradient contributed by this call.

    Raises:
        UsageError: If ``loss`` is not a scalar.
    """
    if loss.data.size != 1:
        raise UsageError(
            message="backward needs a scalar loss",
            details={"shape": list(loss.shape)}
        )
    grads: Dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.get(node.id)
        if g is None or not node.requires_grad:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise_dimension_error(f"adjoint of {node.op}", parent.shape, pg.shape)
            grads[parent.id] = grads[parent.id] + pg if parent.id in grads else pg
    return grads
