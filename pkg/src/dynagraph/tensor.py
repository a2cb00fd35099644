"""Dense float64 tensors with reverse-mode automatic differentiation.

Values are numpy arrays. Every differentiable operation tags its output with
the input tensors and a backward rule; ``backward`` on a scalar loss replays
the recorded operations in exact reverse creation order and accumulates
gradients into every reachable tensor that requires them. Gradients keep
accumulating across repeated backward calls until zeroed explicitly.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np

from .errors import ContractError, ShapeError

_ORDER = itertools.count()
_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Suspend operation recording (used for evaluation passes)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """A dense array plus an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_order")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._order = next(_ORDER)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same values, cut off from the recorded graph."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self) -> "Tensor":
        return total(self)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data, parents, backward_fn) -> Tensor:
    out = Tensor(data, requires_grad=_GRAD_ENABLED and any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back onto an operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor) -> None:
    """Populate gradients of all recorded ancestors of a scalar loss.

    Repeated calls accumulate: two backward passes of the same loss leave
    exactly twice the single-pass gradient in every tensor.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    nodes = _ancestors(loss)
    local: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in nodes:
        grad = local.get(id(node))
        if grad is None or node._backward is None:
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            seen = local.get(id(parent))
            local[id(parent)] = parent_grad if seen is None else seen + parent_grad
    for node in nodes:
        if node.requires_grad and id(node) in local:
            contribution = local[id(node)]
            node.grad = contribution if node.grad is None else node.grad + contribution


def _ancestors(root: Tensor) -> list[Tensor]:
    """Recorded subgraph feeding ``root``, sorted newest-first.

    Creation order is a topological order (inputs are always created before
    their outputs), so replaying newest-first guarantees each node's gradient
    is complete before it propagates further.
    """
    seen = {id(root)}
    stack = [root]
    nodes = []
    while stack:
        node = stack.pop()
        nodes.append(node)
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                seen.add(id(parent))
                stack.append(parent)
    nodes.sort(key=lambda t: t._order, reverse=True)
    return nodes


# --- primitive operations ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward_fn(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _result(data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward_fn(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(-g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _result(data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    """Elementwise product; covers scalar scaling via broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward_fn(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _result(data, (a, b), backward_fn)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def backward_fn(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward_fn)


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.data.shape}")
    return _result(x.data.T.copy(), (x,), lambda g: (g.T,))


def concat_rows(parts) -> Tensor:
    """Stack matrices vertically; backward splits the gradient by rows."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat_rows requires at least one tensor")
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[1] != parts[0].data.shape[1]:
            raise ShapeError(
                f"concat_rows: column counts differ ({p.data.shape} vs {parts[0].data.shape})"
            )
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def backward_fn(g):
        return tuple(
            g[offsets[i]:offsets[i + 1]] if p.requires_grad else None
            for i, p in enumerate(parts)
        )

    return _result(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward_fn)


def mean_rows(x) -> Tensor:
    """Column means of a matrix, kept as a 1-row matrix."""
    x = as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ShapeError(f"mean_rows expects a nonempty matrix, got shape {x.data.shape}")
    m = x.data.shape[0]

    def backward_fn(g):
        return (np.broadcast_to(g / m, x.data.shape).copy(),)

    return _result(x.data.mean(axis=0, keepdims=True), (x,), backward_fn)


def total(x) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    x = as_tensor(x)

    def backward_fn(g):
        return (np.full(x.data.shape, float(g)),)

    return _result(np.asarray(x.data.sum()), (x,), backward_fn)


def relu(x) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def backward_fn(g):
        return (g * (x.data > 0.0),)

    return _result(data, (x,), backward_fn)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # piecewise form avoids overflow warnings for large negative inputs
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), backward_fn)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)

    def backward_fn(g):
        return (g * (1.0 - data * data),)

    return _result(data, (x,), backward_fn)


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if (x.data < 0).any():
        raise ContractError("sqrt: negative input")
    data = np.sqrt(x.data)

    def backward_fn(g):
        return (g * 0.5 / data,)

    return _result(data, (x,), backward_fn)


def softmax_rows(x) -> Tensor:
    """Row-wise softmax with per-row max subtraction for stability."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {x.data.shape}")
    if np.isnan(x.data).any():
        raise FloatingPointError("softmax_rows: NaN in input")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - dot),)

    return _result(s, (x,), backward_fn)


def log_softmax_rows(x) -> Tensor:
    """Row-wise log-softmax, stable for extreme logits."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"log_softmax_rows expects a matrix, got shape {x.data.shape}")
    if np.isnan(x.data).any():
        raise FloatingPointError("log_softmax_rows: NaN in input")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    data = shifted - logsum
    s = np.exp(data)

    def backward_fn(g):
        return (g - s * g.sum(axis=1, keepdims=True),)

    return _result(data, (x,), backward_fn)


def l2norm_rows(x, eps: float = 1e-12) -> Tensor:
    """Euclidean norm of each row as a 1-column matrix.

    The norm is smoothed as sqrt(sum(x^2) + eps) so the gradient exists at
    the origin.
    """
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"l2norm_rows expects a matrix, got shape {x.data.shape}")
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True) + eps)

    def backward_fn(g):
        return (g * x.data / norms,)

    return _result(norms, (x,), backward_fn)
