"""A small reverse-mode autodiff engine over float64 numpy arrays.

Every op returns a new :class:`Tensor`.  When at least one input requires a
gradient the result keeps references to its inputs plus a closure mapping the
output gradient to input gradients; :func:`backward` walks that record in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Iterable[Tensor], fn: BackwardFn) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(op: str, fn, a: Tensor, b: Tensor) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# elementwise binary ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(_binary("add", np.add, a, b), (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(_binary("sub", np.subtract, a, b), (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(_binary("mul", np.multiply, a, b), (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("div", np.divide, a, b)

    def back(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape))

    return _result(out, (a, b), back)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


# linear algebra / layout


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _result(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise InvalidArgument("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _result(out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack_rows(vectors: Sequence) -> Tensor:
    """Stack 1-D tensors of equal length into a matrix."""
    ts = [as_tensor(v) for v in vectors]
    return concat([reshape(t, (1, -1)) for t in ts], axis=0)


def gather_rows(a, index) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    if a.ndim < 1 or (idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0])):
        raise ShapeError(f"gather_rows: index out of range for shape {a.shape}")

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(a.data[idx], (a,), back)


def scatter_add_rows(a, index, num_rows: int) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != a.shape[:1]:
        raise ShapeError(f"scatter_add_rows: index shape {idx.shape} vs rows {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= num_rows):
        raise ShapeError(f"scatter_add_rows: index out of range for {num_rows} rows")
    out = np.zeros((num_rows,) + a.shape[1:])
    np.add.at(out, idx, a.data)
    return _result(out, (a,), lambda g: (g[idx],))


def submatrix(a, index) -> Tensor:
    """Rows and columns ``index`` of a square matrix."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)

    def back(g):
        full = np.zeros_like(a.data)
        full[np.ix_(idx, idx)] += g
        return (full,)

    return _result(a.data[np.ix_(idx, idx)], (a,), back)


# pointwise nonlinearities


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


# reductions


def _expand(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return _result(out, (a,), lambda g: (_expand(g, a.shape, axis, keepdims).copy(),))


def mean(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)
    return _result(out, (a,),
                   lambda g: (_expand(g, a.shape, axis, keepdims) / count,))


def max(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum; the gradient goes to the first maximal entry only."""
    a = as_tensor(a)
    if axis is None:
        flat = int(np.argmax(a.data))
        out = a.data.reshape(-1)[flat]
        if keepdims:
            out = np.reshape(out, (1,) * a.ndim)

        def back(g):
            full = np.zeros(a.data.size)
            full[flat] = np.asarray(g).reshape(-1)[0]
            return (full.reshape(a.shape),)

        return _result(np.asarray(out), (a,), back)

    if a.ndim == 2 and axis in (0, -2) and not keepdims:
        rows = np.argmax(a.data, axis=0)
        cols = np.arange(a.shape[1])

        def back_cols(g):
            full = np.zeros_like(a.data)
            full[rows, cols] = g
            return (full,)

        return _result(a.data[rows, cols], (a,), back_cols)

    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def back(g):
        full = np.zeros_like(a.data)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, np.expand_dims(arg, axis), gk, axis=axis)
        return (full,)

    return _result(out, (a,), back)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), back)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    soft = np.exp(out)

    def back(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), back)


def l2_normalize_rows(a) -> Tensor:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    a = as_tensor(a)
    if a.ndim == 1:
        return reshape(l2_normalize_rows(reshape(a, (1, -1))), a.shape)
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    out = np.where(norms > 0, a.data / safe, 0.0)

    def back(g):
        proj = (g * out).sum(axis=1, keepdims=True)
        return (np.where(norms > 0, (g - out * proj) / safe, 0.0),)

    return _result(out, (a,), back)


def cross_entropy(logits, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row-softmax."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or t.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {t.shape}")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(t)), t] = 1.0
    return neg(mean(sum(log_softmax(logits, axis=1) * onehot, axis=1)))


def dropout(a, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    a = as_tensor(a)
    if rng is None or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


# driver


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, wrt: Optional[dict[str, Tensor]] = None,
             release: bool = True) -> dict[str, np.ndarray]:
    """Differentiate a scalar ``loss`` with respect to every leaf that needs it.

    Leaves receive ``.grad``.  The result maps each reached named leaf to its
    gradient; passing ``wrt`` also reports zeros for leaves the loss does not
    depend on.  With ``release`` the recorded graph is dropped afterwards.
    """
    if loss.data.size != 1:
        raise InvalidArgument(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise InvalidArgument("loss does not depend on any tensor requiring grad")
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    out: dict[str, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            if node.name is not None:
                out[node.name] = node.grad
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    if release:
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None
    if wrt is not None:
        return {k: out.get(t.name if t.name is not None else k, np.zeros_like(t.data))
                for k, t in wrt.items()}
    return out


def leaves(params: dict[str, np.ndarray], requires_grad: bool = True) -> dict[str, Tensor]:
    """Wrap a name -> array mapping as named leaf tensors."""
    return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in params.items()}
