"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records every operation applied to the tensors created on it.
Leaves are named parameters; :meth:`Tape.backward` returns their gradients.

Forward matrix products are evaluated with ``np.einsum`` rather than BLAS so
that every output row is reduced in the same order no matter how many rows are
in the batch. A batch forward therefore reproduces single-sample forwards bit
for bit. Backward passes use BLAS, since gradients are only required to be
reproducible run to run.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "abs_",
    "add",
    "concat",
    "div",
    "log",
    "matmul",
    "mean",
    "mul",
    "neg",
    "normalize",
    "numeric_gradient",
    "relu",
    "reshape",
    "sigmoid",
    "stack",
    "sub",
    "sum_",
    "tanh",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class DomainError(ValueError):
    """An operand lies outside the domain of the operation (e.g. log of 0)."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or infinity."""


class TapeError(RuntimeError):
    """Misuse of a tape: foreign tensors, non-scalar loss, reuse after backward."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A float64 array, optionally recorded on a tape.

    Tensors with ``index is None`` are constants: they take part in
    arithmetic but never receive gradients.
    """

    __slots__ = ("data", "tape", "index")
    __array_priority__ = 100.0

    def __init__(self, data, tape: Tape | None = None, index: int | None = None):
        self.data = _as_array(data)
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def tracked(self) -> bool:
        return self.index is not None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        kind = "tracked" if self.tracked else "const"
        return f"Tensor({kind}, shape={self.shape})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


BackFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Append-only operation record for one forward/backward cycle.

    Nodes are stored in creation order, which is a valid topological order
    because an operation can only consume tensors that already exist.
    A tape supports exactly one :meth:`backward` call.
    """

    def __init__(self) -> None:
        self._values: list[np.ndarray] = []
        self._parents: list[tuple[int | None, ...]] = []
        self._backfns: list[BackFn | None] = []
        self._leaves: dict[str, int] = {}
        self._consumed = False

    def __len__(self) -> int:
        return len(self._values)

    @property
    def consumed(self) -> bool:
        return self._consumed

    @property
    def leaf_names(self) -> list[str]:
        return list(self._leaves)

    def leaf(self, value, name: str) -> Tensor:
        """Register a named trainable leaf."""
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        if name in self._leaves:
            raise TapeError(f"duplicate leaf name {name!r}")
        arr = np.array(value, dtype=np.float64, copy=True)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"leaf {name!r} holds non-finite values")
        idx = self._push(arr, (), None)
        self._leaves[name] = idx
        return Tensor(arr, self, idx)

    def constant(self, value) -> Tensor:
        return Tensor(value)

    def _push(self, value: np.ndarray, parents, backfn) -> int:
        self._values.append(value)
        self._parents.append(tuple(parents))
        self._backfns.append(backfn)
        return len(self._values) - 1

    def record(self, op: str, value: np.ndarray, inputs: Sequence[Tensor], backfn: BackFn) -> Tensor:
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        if not np.isfinite(value).all():
            raise NonFiniteError(f"{op} produced non-finite values")
        parents = tuple(t.index for t in inputs)
        idx = self._push(value, parents, backfn)
        return Tensor(value, self, idx)

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Propagate d(loss)/d(node) back to every leaf.

        Returns a mapping from leaf name to gradient; leaves the loss does not
        depend on get zero gradients.
        """
        if self._consumed:
            raise TapeError("backward() already called on this tape")
        if loss.tape is not self or loss.index is None:
            raise TapeError("loss is not recorded on this tape")
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        self._consumed = True
        leaf_set = set(self._leaves.values())
        grads: list[np.ndarray | None] = [None] * len(self._values)
        # indices whose gradient buffer is private and may be updated in place
        owned: set[int] = set()
        grads[loss.index] = np.ones_like(self._values[loss.index])
        for i in range(loss.index, -1, -1):
            g = grads[i]
            backfn = self._backfns[i]
            if g is None or backfn is None:
                continue
            for p, c in zip(self._parents[i], backfn(g)):
                if p is None or c is None:
                    continue
                if isinstance(c, _SliceGrad):
                    if p not in owned:
                        cur = grads[p]
                        grads[p] = np.zeros(c.shape) if cur is None else np.array(cur, dtype=np.float64)
                        owned.add(p)
                    grads[p][c.key] += c.value
                elif grads[p] is None:
                    grads[p] = c
                else:
                    grads[p] = grads[p] + c
                    owned.add(p)
            if i not in leaf_set:
                grads[i] = None
        out = {}
        for name, idx in self._leaves.items():
            g = grads[idx]
            out[name] = np.zeros_like(self._values[idx]) if g is None else np.array(g, dtype=np.float64)
        return out


class _SliceGrad:
    """Gradient that touches only ``key`` of a parent of shape ``shape``."""

    __slots__ = ("key", "value", "shape")

    def __init__(self, key, value, shape):
        self.key, self.value, self.shape = key, value, shape


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands belong to different tapes")
    return tape


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(op: str, value: np.ndarray, inputs: Sequence[Tensor], backfn: BackFn) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None or not any(t.tracked for t in inputs):
        if not np.isfinite(value).all():
            raise NonFiniteError(f"{op} produced non-finite values")
        return Tensor(value)
    return tape.record(op, value, inputs, backfn)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("add", a.data, b.data)
    sa, sb = a.shape, b.shape
    return _finish("add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("sub", a.data, b.data)
    sa, sb = a.shape, b.shape
    return _finish("sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("mul", a.data, b.data)
    av, bv = a.data, b.data

    def back(g):
        ga = _unbroadcast(g * bv, av.shape) if a.tracked else None
        gb = _unbroadcast(g * av, bv.shape) if b.tracked else None
        return ga, gb

    return _finish("mul", av * bv, (a, b), back)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("div", a.data, b.data)
    if np.any(b.data == 0.0):
        raise DomainError("div: division by zero")
    av, bv = a.data, b.data
    out = av / bv

    def back(g):
        ga = _unbroadcast(g / bv, av.shape) if a.tracked else None
        gb = _unbroadcast(-g * out / bv, bv.shape) if b.tracked else None
        return ga, gb

    return _finish("div", out, (a, b), back)


def neg(a) -> Tensor:
    a = _lift(a)
    return _finish("neg", -a.data, (a,), lambda g: (-g,))


def sigmoid(a) -> Tensor:
    a = _lift(a)
    # tanh form: exact 0.5 at 0 and no overflow for large |x|
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _finish("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)
    return _finish("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.data > 0.0
    return _finish("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def log(a) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log requires strictly positive inputs")
    av = a.data
    return _finish("log", np.log(av), (a,), lambda g: (g / av,))


def abs_(a) -> Tensor:
    a = _lift(a)
    sign = np.sign(a.data)
    return _finish("abs", np.abs(a.data), (a,), lambda g: (g * sign,))


# ----------------------------------------------------------------- reductions


def _norm_axis(axis, ndim: int):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _finish("sum", np.asarray(out, dtype=np.float64), (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    axes = _norm_axis(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    if count == 0:
        raise ShapeError("mean over an empty axis")
    return mul(sum_(a, axis=axes, keepdims=keepdims), 1.0 / count)


def normalize(a, axis: int = -1) -> Tensor:
    """Scale non-negative entries so they sum to one along ``axis``."""
    a = _lift(a)
    if np.any(a.data < 0.0):
        raise DomainError("normalize expects non-negative entries")
    return div(a, sum_(a, axis=axis, keepdims=True))


# -------------------------------------------------------------------- algebra


def matmul(a, b) -> Tensor:
    """Matrix product with a fixed per-row reduction order.

    Supported layouts::

        a (..., K) @ b (K, N)      -> (..., N)     shared weights
        a (..., K) @ b (K,)        -> (...)        shared vector
        a (B, ..., K) @ b (B, K, N) -> (B, ..., N) one weight matrix per sample
    """
    a, b = _lift(a), _lift(b)
    av, bv = a.data, b.data
    if av.ndim < 1 or bv.ndim not in (1, 2, 3):
        raise ShapeError(f"matmul: unsupported shapes {av.shape} @ {bv.shape}")
    if bv.ndim == 3:
        if av.ndim < 2 or av.shape[0] != bv.shape[0] or av.shape[-1] != bv.shape[1]:
            raise ShapeError(f"matmul: shapes {av.shape} @ {bv.shape} do not conform")
        out = np.einsum("b...k,bkn->b...n", av, bv)

        def back(g):
            ga = np.einsum("b...n,bkn->b...k", g, bv) if a.tracked else None
            gb = None
            if b.tracked:
                a2 = av.reshape(av.shape[0], -1, av.shape[-1])
                g2 = g.reshape(g.shape[0], -1, g.shape[-1])
                gb = np.matmul(a2.transpose(0, 2, 1), g2)
            return ga, gb

        return _finish("matmul", out, (a, b), back)

    if av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: shapes {av.shape} @ {bv.shape} do not conform")
    if bv.ndim == 1:
        out = np.einsum("...k,k->...", av, bv)

        def back(g):
            ga = g[..., None] * bv if a.tracked else None
            gb = np.tensordot(g, av, axes=g.ndim) if b.tracked else None
            return ga, gb

        return _finish("matmul", np.asarray(out, dtype=np.float64), (a, b), back)

    out = np.einsum("...k,kn->...n", av, bv)

    def back(g):
        ga = g @ bv.T if a.tracked else None
        gb = None
        if b.tracked:
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _finish("matmul", out, (a, b), back)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} to {shape}") from None
    return _finish("reshape", out, (a,), lambda g: (g.reshape(src),))


def _getitem(a: Tensor, key) -> Tensor:
    src = a.shape
    out = np.array(a.data[key], dtype=np.float64)

    def back(g):
        if not _is_fancy(key):
            return (_SliceGrad(key, g, src),)
        full = np.zeros(src)
        np.add.at(full, key, g)
        return (full,)

    return _finish("slice", out, (a,), back)


def _is_fancy(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _finish("concat", out, ts, lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    if not ts:
        raise ShapeError("stack of an empty list")
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from None
    n = len(ts)
    return _finish(
        "stack", out, ts, lambda g: tuple(np.take(g, i, axis=axis) for i in range(n))
    )


# ------------------------------------------------------------------- checking


def numeric_gradient(fn: Callable[[dict[str, np.ndarray]], float], params: dict[str, np.ndarray], h: float = 1e-5):
    """Central finite-difference gradient of a scalar function of named arrays."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value, dtype=np.float64)
        flat = g.reshape(-1)
        for j in range(flat.size):
            # owned arrays so that 0-d parameters can be shifted in place
            shifted = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
            target = shifted[name].reshape(-1)
            target[j] += h
            up = fn(shifted)
            target[j] -= 2 * h
            down = fn(shifted)
            flat[j] = (up - down) / (2 * h)
        grads[name] = g
    return grads
