"""Dense f64 tensors with reverse-mode differentiation.

Every numeric value in the model is a Tensor: a numpy float64 array plus an
optional gradient and a closure that routes upstream gradients to its parents.
Calling backward() on a scalar loss walks the graph in reverse topological
order and accumulates into .grad of every reachable tensor that requires one.
"""

from __future__ import annotations

import struct
from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class NumericsError(RuntimeError):
    """Raised on non-finite values where finiteness is required."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    # -- operator sugar --------------------------------------------------------

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

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    # -- backward ---------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode pass from a scalar.

        Gradients accumulate additively: repeated calls without zeroing add up.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                # gradient arrays are never mutated in place, so sharing is safe
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative DFS postorder, reversed: root first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(*ts: Tensor) -> bool:
    return any(t.requires_grad for t in ts)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise / structural ops ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data + b.data, _needs_grad(a, b), (a, b))
    out._backward = lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))
    return out


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data - b.data, _needs_grad(a, b), (a, b))
    out._backward = lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data * b.data, _needs_grad(a, b), (a, b))
    out._backward = lambda g: (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape),
    )
    return out


def relu(x) -> Tensor:
    x = _lift(x)
    out = Tensor(np.maximum(x.data, 0.0), x.requires_grad, (x,))
    out._backward = lambda g: (g * (x.data > 0.0),)
    return out


def tanh(x) -> Tensor:
    x = _lift(x)
    y = np.tanh(x.data)
    out = Tensor(y, x.requires_grad, (x,))
    out._backward = lambda g: (g * (1.0 - y * y),)
    return out


def sqrt(x) -> Tensor:
    """Elementwise square root; the subgradient at 0 is taken as 0."""
    x = _lift(x)
    y = np.sqrt(x.data)
    out = Tensor(y, x.requires_grad, (x,))

    def bwd(g):
        denom = np.where(y > 0.0, 2.0 * y, 1.0)
        return (np.where(y > 0.0, g / denom, 0.0),)

    out._backward = bwd
    return out


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    out = Tensor(x.data.reshape(shape), x.requires_grad, (x,))
    out._backward = lambda g: (g.reshape(x.data.shape),)
    return out


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = _lift(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.transpose(x.data, axes), x.requires_grad, (x,))
    out._backward = lambda g: (np.transpose(g, inv),)
    return out


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    ts = [_lift(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of zero tensors")
    try:
        out_data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat of shapes {[t.data.shape for t in ts]}: {exc}") from None
    out = Tensor(out_data, _needs_grad(*ts), tuple(ts))
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    out._backward = lambda g: tuple(np.split(g, splits, axis=axis))
    return out


def repeat(x, reps: int, axis: int) -> Tensor:
    """Tile each slice along `axis` reps times (broadcast with summed gradient)."""
    x = _lift(x)
    out = Tensor(np.repeat(x.data, reps, axis=axis), x.requires_grad, (x,))
    shape = x.data.shape

    def bwd(g):
        expanded = g.reshape(shape[:axis] + (shape[axis], reps) + shape[axis + 1 :])
        return (expanded.sum(axis=axis + 1),)

    out._backward = bwd
    return out


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims), x.requires_grad, (x,))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape),)

    out._backward = bwd
    return out


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def max_pool(x, axis: int) -> Tensor:
    """Max over one axis; gradient routes to the first (lowest-index) argmax."""
    x = _lift(x)
    idx = np.argmax(x.data, axis=axis)
    out_data = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    out = Tensor(out_data, x.requires_grad, (x,))

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (gx,)

    out._backward = bwd
    return out


def gather_rows(x, indices) -> Tensor:
    """Select rows of x (axis 0) by an integer index array of any shape.

    Output shape = indices.shape + x.shape[1:]. Gradient scatter-adds back,
    so repeated indices accumulate.
    """
    x = _lift(x)
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(x.data[idx], x.requires_grad, (x,))
    n = x.data.shape[0]
    tail = int(np.prod(x.data.shape[1:], dtype=np.int64)) if x.data.ndim > 1 else 1

    def bwd(g):
        flat_idx = (idx.reshape(-1, 1) * tail + np.arange(tail)).ravel()
        acc = np.bincount(flat_idx, weights=g.reshape(-1), minlength=n * tail)
        return (acc.reshape(x.data.shape),)

    out._backward = bwd
    return out


def softmax(x, axis: int) -> Tensor:
    """Numerically stable softmax along `axis` (max is subtracted first)."""
    x = _lift(x)
    if not np.isfinite(x.data).all():
        raise NumericsError("softmax input contains non-finite values")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, x.requires_grad, (x,))

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    out._backward = bwd
    return out


def matmul(a, b) -> Tensor:
    """Contracted product over the last two axes; leading extents broadcast."""
    a, b = _lift(a), _lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.data.shape} x {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.data.shape} x {b.data.shape}")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch extents differ: {a.data.shape} x {b.data.shape}") from exc
    out = Tensor(out_data, _needs_grad(a, b), (a, b))

    def bwd(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return (ga, gb)

    out._backward = bwd
    return out


def radial_tanh(x) -> Tensor:
    """Bound row vectors to the open unit ball: v -> v * tanh(|v|) / |v|.

    Smooth everywhere (series expansion below r=1e-4), so points can approach,
    but never leave, the unit sphere.
    """
    x = _lift(x)
    r2 = (x.data * x.data).sum(axis=-1, keepdims=True)
    r = np.sqrt(r2)
    small = r < 1e-4
    # s(r) = tanh(r)/r,  s'(r)/r used in the Jacobian; series keeps both smooth at 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(small, 1.0 - r2 / 3.0, np.tanh(r) / np.where(small, 1.0, r))
    out = Tensor(x.data * s, x.requires_grad, (x,))

    def bwd(g):
        t = np.tanh(r)
        sech2 = 1.0 - t * t
        with np.errstate(divide="ignore", invalid="ignore"):
            # (s'(r)/r) = (sech^2(r) - tanh(r)/r) / r^2, series: -2/3 + 8 r^2 / 15
            sp_over_r = np.where(
                small,
                -2.0 / 3.0 + 8.0 * r2 / 15.0,
                (sech2 - s) / np.where(small, 1.0, r2),
            )
        vdotg = (x.data * g).sum(axis=-1, keepdims=True)
        return (g * s + x.data * (sp_over_r * vdotg),)

    out._backward = bwd
    return out


# -- layers and parameters ----------------------------------------------------


class LinearLayer:
    """y = x @ weight + bias, weight [C_in, C_out].

    Init is uniform in +-1/sqrt(C_in) for both weight and bias (fan-in rule).
    """

    __slots__ = ("weight", "bias")

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, bias: bool = True):
        bound = 1.0 / np.sqrt(c_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(c_in, c_out)), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, size=(c_out,)), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear_forward(self, x)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        if self.bias is not None:
            yield f"{prefix}.bias", self.bias


def linear_forward(layer: LinearLayer, x: Tensor) -> Tensor:
    x = _lift(x)
    c_in, c_out = layer.weight.data.shape
    if x.data.shape[-1] != c_in:
        raise ShapeError(f"linear expects last extent {c_in}, got input shape {x.data.shape}")
    lead = x.data.shape[:-1]
    if x.data.ndim > 2:
        # one big GEMM instead of a batched loop over leading extents
        x = reshape(x, (-1, c_in))
    y = matmul(x, layer.weight)
    if layer.bias is not None:
        y = add(y, layer.bias)
    if len(lead) > 1:
        y = reshape(y, lead + (c_out,))
    return y


class Adam:
    """Adam with beta=(0.9, 0.999), eps=1e-8 over named parameters."""

    def __init__(self, params: Iterable[tuple[str, Tensor]], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for _, p in self.params]
        self._v = [np.zeros_like(p.data) for _, p in self.params]

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for i, (name, p) in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericsError(f"non-finite gradient in parameter '{name}'")
            m = self._m[i]
            v = self._v[i]
            m *= b1
            m += (1.0 - b1) * g
            gg = np.square(g)
            gg *= 1.0 - b2
            v *= b2
            v += gg
            denom = v / bc2
            np.sqrt(denom, out=denom)
            denom += self.eps
            update = m / denom
            update *= self.lr / bc1
            p.data -= update


# -- checkpoint format ----------------------------------------------------------
#
# Flat binary: magic "SPOT", version u32, count u32, then per parameter:
#   u32 name length, UTF-8 name, u32 rank, u32 extents..., little-endian f64 payload.

_MAGIC = b"SPOT"
_VERSION = 1


def save_checkpoint(path: str, params: Iterable[tuple[str, Tensor]]) -> None:
    entries = list(params)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(entries)))
        for name, tensor in entries:
            raw = name.encode("utf-8")
            arr = np.asarray(tensor.data, dtype="<f8", order="C")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint (bad magic)")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)
        return out
