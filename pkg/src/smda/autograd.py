"""Small reverse-mode autodiff over dense float64 numpy arrays.

Only the primitives the classifier and its losses need are provided. Every
op builds a node holding its inputs and a closure that maps the output
gradient to input gradients; :func:`backward` walks the graph in reverse
topological order.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import SMDAError


class ShapeError(SMDAError):
    """Raised when a primitive receives incompatible shapes."""


class NonFiniteError(SMDAError):
    """Raised when a tensor would hold NaN or Inf."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf"):
        # leaves copy their input; interior nodes own freshly computed arrays
        arr = np.array(data, dtype=np.float64) if op == "leaf" else np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"{op}: non-finite values in tensor of shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=parents if needs else (), _backward=backward if needs else None, op=op)


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may also be a row vector added to every row of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        row_bias = False
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        row_bias = True
    else:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return g, (g.sum(axis=0) if row_bias else g)

    return _node(a.data + b.data, (a, b), backward, "add")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    """Elementwise product of equal-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def gather(table, ids) -> Tensor:
    """Embedding lookup: rows of a ``(V, d)`` table for an integer array of ids."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeError(f"gather: table must be 2-d, got shape {table.shape}")
    if ids.size and (not np.issubdtype(ids.dtype, np.integer) or ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"gather: ids out of range for table of shape {table.shape}")
    n_rows = table.shape[0]

    def backward(g):
        out = np.zeros((n_rows, g.shape[-1]))
        np.add.at(out, ids.reshape(-1), g.reshape(-1, g.shape[-1]))
        return (out,)

    return _node(table.data[ids], (table,), backward, "gather")


def mean_pool(x, ids, pad_id: int = 0) -> Tensor:
    """Average ``(B, L, d)`` rows over positions whose id is not ``pad_id``."""
    x = as_tensor(x)
    ids = np.asarray(ids)
    if x.data.ndim != 3 or ids.shape != x.shape[:2]:
        raise ShapeError(f"mean_pool: shapes {x.shape} and ids {ids.shape} do not match")
    mask = (ids != pad_id).astype(np.float64)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ShapeError("mean_pool: a sequence has no non-PAD tokens")
    weights = mask / counts[:, None]
    out = np.einsum("bl,bld->bd", weights, x.data)
    return _node(out, (x,), lambda g: (weights[:, :, None] * g[:, None, :],), "mean_pool")


def relu(a) -> Tensor:
    a = as_tensor(a)
    on = a.data > 0
    return _node(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,), "relu")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _node(out, (a,), lambda g: (g / ad,), "log")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    ad, e = a.data, float(exponent)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad**e
    return _node(out, (a,), lambda g: (g * e * ad ** (e - 1),), "power")


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor); gradient flows only where the input is above the floor."""
    a = as_tensor(a)
    keep = a.data >= floor
    return _node(np.where(keep, a.data, floor), (a,), lambda g: (g * keep,), "clamp_min")


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        return _node(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")
    if not -len(shape) <= axis < len(shape):
        raise ShapeError(f"sum: axis {axis} out of range for shape {shape}")
    return _node(a.data.sum(axis=axis), (a,), lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),), "sum")


def mean(a) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise ShapeError("mean: empty tensor")
    return scale(sum(a), 1.0 / a.data.size)


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    if a.data.ndim == 0:
        raise ShapeError("softmax: scalar input")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _node(s, (a,), backward, "softmax")


def _topo_order(root: Tensor) -> list[Tensor]:
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
    return order


def backward(loss: Tensor, params: Mapping[str, Tensor] | None = None) -> dict[str, np.ndarray]:
    """Backpropagate a scalar loss.

    Gradients are written to ``.grad`` of every leaf that requires grad. If
    ``params`` is given, returns a name -> gradient map for them; a parameter
    the loss does not depend on gets zeros.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    if params is None:
        return {}
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params.items()}


def relative_error(ad: float, fd: float) -> float:
    return abs(ad - fd) / max(1e-8, abs(ad) + abs(fd))


def grad_check_coords(
    fn: Callable[[dict[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
) -> list[tuple[str, int, float, float]]:
    """Per-coordinate ``(name, flat index, autodiff, central difference)`` gradients."""
    if not 0 < eps <= 1e-3:
        raise ValueError(f"grad_check: eps must be in (0, 1e-3], got {eps}")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def value(arrays) -> float:
        out = fn({k: Tensor(v) for k, v in arrays.items()})
        val = out.item() if isinstance(out, Tensor) else float(out)
        if not np.isfinite(val):
            raise NonFiniteError("grad_check: function returned a non-finite value")
        return val

    leaves = {k: Tensor(v, requires_grad=True) for k, v in base.items()}
    out = fn(leaves)
    if not isinstance(out, Tensor) or not out.requires_grad:
        analytic = {k: np.zeros_like(v) for k, v in base.items()}
    else:
        analytic = backward(out, leaves)

    coords = []
    for name, arr in base.items():
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = value(base)
            flat[i] = orig - eps
            down = value(base)
            flat[i] = orig
            coords.append((name, i, float(analytic[name].reshape(-1)[i]), (up - down) / (2 * eps)))
    return coords


def grad_check(
    fn: Callable[[dict[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``fn`` maps a dict of parameter tensors to a scalar tensor. Relative error
    per coordinate is ``|ad - fd| / max(1e-8, |ad| + |fd|)``.
    """
    return max((relative_error(ad, fd) for _, _, ad, fd in grad_check_coords(fn, params, eps)), default=0.0)
