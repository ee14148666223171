"""Dense tensors over numpy with reverse-mode differentiation.

Only the primitive set the DLF model needs is provided. Every primitive
checks operand shapes up front, records a closure computing the vector-
Jacobian product for each input, and rejects non-finite results.
"""

from __future__ import annotations

import contextlib
import os
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "NumericError",
    "Tensor",
    "Parameter",
    "set_precision",
    "get_precision",
    "get_dtype",
    "precision",
    "no_grad",
    "record_kinks",
    "grad_enabled",
    "backward",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "concat",
    "mean",
    "sum_",
    "reshape",
    "transpose",
    "take",
    "softmax",
    "layer_norm",
    "relu",
    "dropout",
    "conv1d",
    "mse",
    "mae",
    "cosine_similarity",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""

    def __init__(self, primitive: str, *shapes: Sequence[int]):
        self.primitive = primitive
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{primitive}: incompatible shapes {joined}")


class NumericError(FloatingPointError):
    """A primitive produced NaN or Inf."""

    def __init__(self, primitive: str):
        self.primitive = primitive
        super().__init__(f"{primitive}: non-finite value produced")


_DTYPES = {32: np.float32, 64: np.float64}


def _initial_precision() -> int:
    raw = os.environ.get("DLF_PRECISION", "32")
    try:
        bits = int(raw)
    except ValueError:
        bits = -1
    if bits not in _DTYPES:
        raise ValueError(f"DLF_PRECISION must be 32 or 64, got {raw!r}")
    return bits


_state = {"precision": _initial_precision(), "grad": True, "kinks": None}


def set_precision(bits: int) -> None:
    if bits not in _DTYPES:
        raise ValueError(f"precision must be 32 or 64, got {bits}")
    _state["precision"] = bits


def get_precision() -> int:
    return _state["precision"]


def get_dtype():
    return _DTYPES[_state["precision"]]


@contextlib.contextmanager
def precision(bits: int):
    old = get_precision()
    set_precision(bits)
    try:
        yield
    finally:
        set_precision(old)


@contextlib.contextmanager
def no_grad():
    old = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = old


def grad_enabled() -> bool:
    return _state["grad"]


@contextlib.contextmanager
def record_kinks():
    """Collect the branch pattern of every non-smooth primitive evaluated.

    Yields a list that receives one boolean array per relu / abs / zero-norm
    decision, in evaluation order. Two evaluations with equal lists took the
    same smooth piece of the function.
    """
    old = _state["kinks"]
    trace: list[np.ndarray] = []
    _state["kinks"] = trace
    try:
        yield trace
    finally:
        _state["kinks"] = old


def _note_kink(pattern: np.ndarray) -> None:
    if _state["kinks"] is not None:
        _state["kinks"].append(pattern)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.array(data, dtype=dtype or get_dtype())
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("Tensor division is only defined by a Python scalar")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Trainable leaf tensor; ``name`` is the dotted path inside its model."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, data: np.ndarray, parents: tuple, backward) -> Tensor:
    if not np.isfinite(data).all():
        raise NumericError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make("mul", a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    _note_kink(mask)
    return _make("relu", x.data * mask, (x,), lambda g: (g * mask,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the identity when not training or rate is 0."""
    if not training or rate <= 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return _make("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# -- linear algebra and structure ---------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("matmul", a.data @ b.data, (a, b), bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
            t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
        ):
            raise ShapeError("concat", ref.shape, t.shape)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make("concat", np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), bw)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    if n == 0:
        raise ShapeError("mean", a.shape)
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _make("mean", np.asarray(out), (a,), bw)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, axes)
    inverse = tuple(np.argsort(axes))
    return _make("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def take(a: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather slices along ``axis``; repeated indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise ShapeError("take", a.shape, idx.shape)

    def bw(g):
        out = np.zeros_like(a.data)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (out,)

    return _make("take", np.take(a.data, idx, axis=axis), (a,), bw)


# -- normalisation ----------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make("softmax", s, (a,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx_hat = g * gamma.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make("layer_norm", out, (x, gamma, beta), bw)


# -- temporal convolution -----------------------------------------------------


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Length-preserving 1-D convolution.

    ``x`` is (B, N, C_in), ``w`` is (k, C_in, C_out); zero padding of
    (k-1)//2 rows in front and the remainder behind keeps N unchanged.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeError("conv1d", x.shape, w.shape)
    if b is not None and b.shape != (w.shape[2],):
        raise ShapeError("conv1d", w.shape, b.shape)
    B, N, cin = x.shape
    k, _, cout = w.shape
    left = (k - 1) // 2
    padded = np.pad(x.data, ((0, 0), (left, k - 1 - left), (0, 0)))
    # cols[b, n, j, c] = padded[b, n + j, c]
    cols = np.stack([padded[:, j : j + N, :] for j in range(k)], axis=2).reshape(B, N, k * cin)
    wmat = w.data.reshape(k * cin, cout)
    out = cols @ wmat
    if b is not None:
        out = out + b.data

    def bw(g):
        gw = (cols.reshape(B * N, k * cin).T @ g.reshape(B * N, cout)).reshape(w.shape)
        gcols = (g @ wmat.T).reshape(B, N, k, cin)
        gpad = np.zeros_like(padded)
        for j in range(k):
            gpad[:, j : j + N, :] += gcols[:, :, j, :]
        gx = gpad[:, left : left + N, :]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 1)))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _make("conv1d", out, parents, bw)


# -- reductions used by losses -------------------------------------------------


def mse(a, b) -> Tensor:
    """Mean of squared differences over all elements."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("mse", a.shape, b.shape)
    diff = a.data - b.data
    n = diff.size

    def bw(g):
        ga = (2.0 / n) * g * diff
        return ga, -ga

    return _make("mse", np.asarray((diff * diff).mean()), (a, b), bw)


def mae(a, b) -> Tensor:
    """Mean of absolute differences over all elements."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("mae", a.shape, b.shape)
    diff = a.data - b.data
    n = diff.size
    _note_kink(diff > 0)

    def bw(g):
        ga = g * np.sign(diff) / n
        return ga, -ga

    return _make("mae", np.asarray(np.abs(diff).mean()), (a, b), bw)


def cosine_similarity(a, b, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Cosine along ``axis``; 0 (with zero gradient) where either norm vanishes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("cosine_similarity", a.shape, b.shape)
    na = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    nb = np.sqrt((b.data * b.data).sum(axis=axis, keepdims=True))
    valid = (na > eps) & (nb > eps)
    _note_kink(valid)
    na_s = np.where(valid, na, 1.0)
    nb_s = np.where(valid, nb, 1.0)
    dot = (a.data * b.data).sum(axis=axis, keepdims=True)
    cos = np.where(valid, dot / (na_s * nb_s), 0.0)

    def bw(g):
        g = np.expand_dims(g, axis) * valid
        ga = g * (b.data / (na_s * nb_s) - cos * a.data / (na_s * na_s))
        gb = g * (a.data / (na_s * nb_s) - cos * b.data / (nb_s * nb_s))
        return ga, gb

    return _make("cosine_similarity", np.squeeze(cos, axis=axis), (a, b), bw)


# -- reverse pass ---------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
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
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor, parameters: Iterable[Parameter] | None = None) -> None:
    """Write d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Reachable leaves have their gradient overwritten. Leaves listed in
    ``parameters`` that the loss does not depend on are set to zero.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if parameters is not None:
        for p in parameters:
            p.grad = np.zeros_like(p.data)
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.reshape(node.shape).copy()
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
