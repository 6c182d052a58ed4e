"""Small reverse-mode autodiff engine over float64 numpy arrays.

Every op builds its output eagerly and, when any input requires a gradient,
remembers its parents plus a closure mapping the output gradient to the input
gradients. The tape is therefore rebuilt on every forward pass. Node ids come
from a process-wide counter, so creation order is a valid topological order
and the backward sweep is deterministic.
"""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

_ids = itertools.count()
_grad_enabled = contextvars.ContextVar("fmplug_grad_enabled", default=True)


class ShapeError(ValueError):
    """Operand shapes do not conform."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (per thread / context)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    """Immutable float64 array that may take part in an autodiff graph."""

    __slots__ = ("data", "requires_grad", "_parents", "_backward", "_id")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._id = next(_ids)

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        data.flags.writeable = False
        out.data = data
        out._id = next(_ids)
        track = _grad_enabled.get() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out._id = next(_ids)
        return out

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4)}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_shape(a: Tensor, b: Tensor, name: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ---------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor._result(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor._result(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor._result(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return Tensor._result(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if a.ndim > 2 or b.ndim > 2:
        raise ShapeError(f"matmul: only 1-D/2-D operands supported, got {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        if ad.ndim == 1:
            return bd @ g, np.outer(ad, g)
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g @ bd.T, ad.T @ g

    return Tensor._result(ad @ bd, (a, b), backward)


# -- elementwise unary ----------------------------------------------------
def _unary(x, fn, dfn) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    out = fn(xd)
    return Tensor._result(out, (x,), lambda g: (g * dfn(xd, out),))


def tanh(x) -> Tensor:
    return _unary(x, np.tanh, lambda x, y: 1.0 - y * y)


def relu(x) -> Tensor:
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda x, y: (x > 0).astype(np.float64))


def sigmoid(x) -> Tensor:
    def fwd(v):
        # stable for large |v|
        e = np.exp(-np.abs(v))
        return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    return _unary(x, fwd, lambda x, y: y * (1.0 - y))


def exp(x) -> Tensor:
    return _unary(x, np.exp, lambda x, y: y)


def log(x) -> Tensor:
    return _unary(x, np.log, lambda x, y: 1.0 / x)


def sin(x) -> Tensor:
    return _unary(x, np.sin, lambda x, y: np.cos(x))


def cos(x) -> Tensor:
    return _unary(x, np.cos, lambda x, y: -np.sin(x))


def square(x) -> Tensor:
    return _unary(x, np.square, lambda x, y: 2.0 * x)


def sqrt(x) -> Tensor:
    return _unary(x, np.sqrt, lambda x, y: 0.5 / y)


# -- reductions -------------------------------------------------------------
def tsum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._result(x.data.sum(axis=axis), (x,), backward)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis) * (1.0 / n)


def norm(x) -> Tensor:
    """Euclidean norm of all entries."""
    x = as_tensor(x)
    xd = x.data
    out = np.sqrt(np.sum(xd * xd))
    return Tensor._result(out, (x,), lambda g: (g * xd / out,))


# -- structural -----------------------------------------------------------
def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return Tensor._result(out, (x,), lambda g: (g.reshape(old),))


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(x.data[idx], (x,), backward)


def concat(xs: Iterable, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return Tensor._result(out, xs, lambda g: tuple(np.split(g, bounds, axis=axis)))


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {tuple(shape)}") from None
    old = x.shape
    return Tensor._result(out.copy(), (x,), lambda g: (_unbroadcast(g, old),))


# -- image ops (last two axes are spatial) ----------------------------------
def _reflect_index(n: int, pad: int) -> np.ndarray:
    return np.pad(np.arange(n), pad, mode="reflect")


def conv2d(x, kernel: np.ndarray) -> Tensor:
    """Same-size 2-D correlation with reflect padding over the last two axes.

    The kernel is a constant; only the image receives a gradient. Kernels are
    expected to be odd-sized and no larger than twice the image extent.
    """
    x = as_tensor(x)
    k = np.asarray(kernel, dtype=np.float64)
    if x.ndim < 2 or k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ShapeError(f"conv2d: need image (...,H,W) and odd 2-D kernel, got {x.shape}, {k.shape}")
    H, W = x.shape[-2:]
    ph, pw = k.shape[0] // 2, k.shape[1] // 2
    if ph >= H or pw >= W:
        raise ShapeError(f"conv2d: kernel {k.shape} does not fit image {x.shape} with reflect padding")
    ri, ci = _reflect_index(H, ph), _reflect_index(W, pw)
    xp = x.data[..., ri, :][..., ci]
    out = np.zeros(x.shape)
    for a in range(k.shape[0]):
        for b in range(k.shape[1]):
            out += k[a, b] * xp[..., a : a + H, b : b + W]

    def backward(g):
        gp = np.zeros(xp.shape)
        for a in range(k.shape[0]):
            for b in range(k.shape[1]):
                gp[..., a : a + H, b : b + W] += k[a, b] * g
        # fold the padded border back onto its source pixels
        gc = np.zeros(gp.shape[:-1] + (W,))
        np.add.at(gc, (..., ci), gp)
        gx = np.zeros(x.shape)
        gr = np.moveaxis(gc, -2, 0)
        acc = np.zeros((H,) + gr.shape[1:])
        np.add.at(acc, ri, gr)
        gx[...] = np.moveaxis(acc, 0, -2)
        return (gx,)

    return Tensor._result(out, (x,), backward)


def avg_pool2d(x, factor: int) -> Tensor:
    """Non-overlapping factor x factor block average over the last two axes."""
    x = as_tensor(x)
    H, W = x.shape[-2:]
    if H % factor or W % factor:
        raise ShapeError(f"avg_pool2d: factor {factor} does not divide image {x.shape}")
    lead = x.shape[:-2]
    blocks = x.data.reshape(lead + (H // factor, factor, W // factor, factor))
    out = blocks.mean(axis=(-3, -1))

    def backward(g):
        g = np.repeat(np.repeat(g, factor, axis=-2), factor, axis=-1)
        return (g / (factor * factor),)

    return Tensor._result(out, (x,), backward)


# -- reverse sweep -------------------------------------------------------------
def grad(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``wrt``.

    Tensors the loss does not depend on get an all-zero gradient.
    """
    if loss.size != 1:
        raise ShapeError(f"grad: loss must be scalar, got shape {loss.shape}")
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node._id in nodes or not node.requires_grad:
            continue
        nodes[node._id] = node
        stack.extend(node._parents)

    grads: dict[int, np.ndarray] = {loss._id: np.ones(loss.shape)}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = grads.get(nid)
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
    return [grads.get(t._id, np.zeros(t.shape)).reshape(t.shape).copy() for t in wrt]
