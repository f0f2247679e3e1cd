"""Minimal reverse-mode automatic differentiation over float64 arrays.

Every operation appends a node to a :class:`Tape`. A node keeps its input ids
and a closure that maps the output adjoint to input adjoints. Node ids are
dense and every input id is smaller than the id of the node that consumes it,
so a single pass in decreasing id order is a valid reverse sweep.

Values are scalars (0-d arrays) or 2-D arrays. Elementwise binary operations
accept equal shapes or a scalar on either side; no other broadcasting exists
apart from the explicit row-bias operation :func:`add_bias`.

Example
-------
>>> tape = Tape()
>>> x = tape.var(3.0)
>>> y = x * x
>>> tape.backward(y, [x.id])[x.id]
array(6.)
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, NonFiniteError, ShapeError

Vjp = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Node:
    __slots__ = ("kind", "inputs", "vjp", "shape")

    def __init__(self, kind: str, inputs: tuple[int, ...], vjp: Vjp | None, shape: tuple[int, ...]):
        self.kind = kind
        self.inputs = inputs
        self.vjp = vjp
        self.shape = shape


class Var:
    """A recorded value on a tape."""

    __slots__ = ("tape", "id", "value")
    __array_priority__ = 1000

    def __init__(self, tape: "Tape", id: int, value: np.ndarray):
        self.tape = tape
        self.id = id
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return slice_(self, index)


class Tape:
    """Append-only record of operations.

    ``Tape(record=False)`` evaluates the same operations without keeping
    nodes; its variables cannot be differentiated.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: list[Node] = []
        self.adjoints: list[np.ndarray | None] | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    def var(self, value, kind: str = "leaf") -> Var:
        """Record a leaf (parameter or constant input)."""
        arr = np.array(value, dtype=np.float64)
        if arr.ndim not in (0, 2):
            raise ShapeError(f"values must be scalar or 2-D, got shape {arr.shape}")
        return self._record(kind, arr, (), None)

    def _record(self, kind: str, value: np.ndarray, inputs: tuple[int, ...], vjp: Vjp | None) -> Var:
        value = np.asarray(value)
        if not self.record:
            return Var(self, -1, value)
        node_id = len(self.nodes)
        self.nodes.append(Node(kind, inputs, vjp, value.shape))
        return Var(self, node_id, value)

    def reset_adjoints(self) -> None:
        self.adjoints = None

    def backward(self, loss: Var, wrt: Iterable[int]) -> dict[int, np.ndarray]:
        """Reverse sweep from a scalar ``loss``; returns adjoints for ``wrt`` ids.

        Adjoints stay on the tape; call :meth:`reset_adjoints` before a second sweep.
        """
        if loss.tape is not self:
            raise ValueError("loss was recorded on a different tape")
        if not self.record:
            raise RuntimeError("tape was created with record=False")
        if loss.value.ndim != 0:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        wrt = list(wrt)
        n = len(self.nodes)
        for i in wrt:
            if not 0 <= i < n:
                raise KeyError(f"id {i} is not on the tape (size {n})")
        if self.adjoints is not None:
            raise RuntimeError("adjoints already populated; call reset_adjoints() first")

        adj: list[np.ndarray | None] = [None] * n
        adj[loss.id] = np.array(1.0)
        nodes = self.nodes
        for i in range(loss.id, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = nodes[i]
            if node.vjp is None:
                continue
            for src, gi in zip(node.inputs, node.vjp(g)):
                if gi is None:
                    continue
                prev = adj[src]
                adj[src] = gi if prev is None else prev + gi
        self.adjoints = adj
        # ids that do not influence the loss get zero adjoints
        return {i: np.asarray(adj[i]) if adj[i] is not None else np.zeros(nodes[i].shape) for i in wrt}

    def grad(self, loss: Var, params: Sequence[Var]) -> list[np.ndarray]:
        grads = self.backward(loss, [p.id for p in params])
        return [grads[p.id] for p in params]


# ---------------------------------------------------------------- helpers


def _as_var(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.var(x, kind="const")


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TypeError("at least one operand must be a Var")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    raise ShapeError(f"cannot reduce adjoint of shape {g.shape} to {shape}")


def _check_elementwise(op: str, a: Var, b: Var) -> None:
    sa, sb = a.shape, b.shape
    if sa != sb and sa != () and sb != ():
        raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


# ---------------------------------------------------------------- binary ops


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    if _is_number(b):
        c = float(b)
        return tape._record("shift", a.value + c, (a.id,), lambda g: (g,))
    if _is_number(a):
        return add(b, a)
    a, b = _as_var(tape, a), _as_var(tape, b)
    _check_elementwise("add", a, b)
    sa, sb = a.shape, b.shape
    return tape._record(
        "add", a.value + b.value, (a.id, b.id), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    if _is_number(b):
        return add(a, -float(b))
    if _is_number(a):
        c = float(a)
        return tape._record("rsub", c - b.value, (b.id,), lambda g: (-g,))
    a, b = _as_var(tape, a), _as_var(tape, b)
    _check_elementwise("sub", a, b)
    sa, sb = a.shape, b.shape
    return tape._record(
        "sub", a.value - b.value, (a.id, b.id), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a, b) -> Var:
    tape = _tape_of(a, b)
    if _is_number(b):
        c = float(b)
        return tape._record("scale", a.value * c, (a.id,), lambda g: (g * c,))
    if _is_number(a):
        return mul(b, a)
    a, b = _as_var(tape, a), _as_var(tape, b)
    _check_elementwise("mul", a, b)
    av, bv = a.value, b.value
    sa, sb = a.shape, b.shape
    return tape._record(
        "mul", av * bv, (a.id, b.id), lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb))
    )


def div(a, b) -> Var:
    tape = _tape_of(a, b)
    if _is_number(b):
        if float(b) == 0.0:
            raise ZeroDivisionError("div: divisor is exactly 0")
        return mul(a, 1.0 / float(b))
    a, b = _as_var(tape, a), _as_var(tape, b)
    _check_elementwise("div", a, b)
    av, bv = a.value, b.value
    if np.any(bv == 0.0):
        raise ZeroDivisionError(f"div: divisor of shape {b.shape} has exact zeros")
    out = av / bv
    sa, sb = a.shape, b.shape
    return tape._record(
        "div", out, (a.id, b.id), lambda g: (_unbroadcast(g / bv, sa), _unbroadcast(-g * out / bv, sb))
    )


def matmul(a: Var, b: Var) -> Var:
    tape = _tape_of(a, b)
    a, b = _as_var(tape, a), _as_var(tape, b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    return tape._record("matmul", av @ bv, (a.id, b.id), lambda g: (g @ bv.T, av.T @ g))


def add_bias(x: Var, bias: Var) -> Var:
    """Add a (1, k) row vector to every row of an (n, k) matrix."""
    tape = _tape_of(x, bias)
    x, bias = _as_var(tape, x), _as_var(tape, bias)
    if x.value.ndim != 2 or bias.shape != (1, x.shape[1]):
        raise ShapeError(f"add_bias: incompatible shapes {x.shape} and {bias.shape}")
    return tape._record(
        "add_bias", x.value + bias.value, (x.id, bias.id), lambda g: (g, g.sum(axis=0, keepdims=True))
    )


# ---------------------------------------------------------------- unary ops


def neg(a: Var) -> Var:
    return a.tape._record("neg", -a.value, (a.id,), lambda g: (-g,))


def tanh(a: Var) -> Var:
    t = np.tanh(a.value)
    return a.tape._record("tanh", t, (a.id,), lambda g: (g * (1.0 - t * t),))


def relu(a: Var) -> Var:
    mask = a.value > 0.0
    return a.tape._record("relu", np.where(mask, a.value, 0.0), (a.id,), lambda g: (g * mask,))


def sqrt(a: Var) -> Var:
    if np.any(a.value < 0.0):
        raise DomainError("sqrt: negative input")
    s = np.sqrt(a.value)
    # derivative is unbounded at 0; the adjoint is inf there by design
    with np.errstate(divide="ignore"):
        return a.tape._record("sqrt", s, (a.id,), lambda g: (g * 0.5 / s,))


def square(a: Var) -> Var:
    av = a.value
    return a.tape._record("square", av * av, (a.id,), lambda g: (2.0 * g * av,))


def sum_(a: Var) -> Var:
    shape = a.shape
    return a.tape._record("sum", np.asarray(a.value.sum()), (a.id,), lambda g: (np.full(shape, g),))


def mean(a: Var) -> Var:
    shape = a.shape
    n = a.value.size
    return a.tape._record(
        "mean", np.asarray(a.value.sum() / n), (a.id,), lambda g: (np.full(shape, g / n),)
    )


def _normalize_index(index, shape):
    if not isinstance(index, tuple):
        index = (index,)
    if len(index) > len(shape):
        raise IndexError(f"too many indices for shape {shape}")
    out = []
    for k, dim in zip(index, shape):
        if isinstance(k, slice):
            if k.step not in (None, 1):
                raise IndexError("only unit-step slices are supported")
            start, stop, _ = k.indices(dim)
            if stop < start:
                stop = start
            out.append(slice(start, stop))
        else:
            raise IndexError("only slices are supported")
    for dim in shape[len(out):]:
        out.append(slice(0, dim))
    return tuple(out)


def slice_(a: Var, index) -> Var:
    """Rectangular sub-block with unit-step slices."""
    if a.value.ndim != 2:
        raise ShapeError("slice needs a 2-D value")
    idx = _normalize_index(index, a.shape)
    for s, dim in zip(idx, a.shape):
        if not (0 <= s.start <= s.stop <= dim):
            raise IndexError(f"slice {s} out of bounds for dimension {dim}")
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return a.tape._record("slice", a.value[idx], (a.id,), vjp)


def pad_zero(a: Var, widths: tuple[tuple[int, int], tuple[int, int]]) -> Var:
    """Surround a 2-D value with zeros; ``widths`` as for ``numpy.pad``."""
    (t, b), (l, r) = widths
    if min(t, b, l, r) < 0:
        raise ValueError("pad widths must be non-negative")
    m, n = a.shape
    out = np.zeros((m + t + b, n + l + r))
    out[t:t + m, l:l + n] = a.value
    return a.tape._record("pad", out, (a.id,), lambda g: (g[t:t + m, l:l + n],))


def reshape(a: Var, shape: tuple[int, ...]) -> Var:
    old = a.shape
    return a.tape._record("reshape", a.value.reshape(shape), (a.id,), lambda g: (g.reshape(old),))


def stack_adjacent_x(a: Var) -> Var:
    """Pairs of cells adjacent along axis 0, one pair per row.

    For an (nx, ny) field the result has shape ((nx-1)*ny, 2); row ``i*ny + j``
    holds ``(f[i, j], f[i+1, j])``.
    """
    nx, ny = a.shape
    v = a.value
    out = np.empty(((nx - 1) * ny, 2))
    out[:, 0] = v[:-1].ravel()
    out[:, 1] = v[1:].ravel()

    def vjp(g):
        full = np.zeros((nx, ny))
        full[:-1] += g[:, 0].reshape(nx - 1, ny)
        full[1:] += g[:, 1].reshape(nx - 1, ny)
        return (full,)

    return a.tape._record("stack_x", out, (a.id,), vjp)


def stack_adjacent_y(a: Var) -> Var:
    """Pairs adjacent along axis 1; row ``i*(ny-1) + j`` holds ``(f[i, j], f[i, j+1])``."""
    nx, ny = a.shape
    v = a.value
    out = np.empty((nx * (ny - 1), 2))
    out[:, 0] = v[:, :-1].ravel()
    out[:, 1] = v[:, 1:].ravel()

    def vjp(g):
        full = np.zeros((nx, ny))
        full[:, :-1] += g[:, 0].reshape(nx, ny - 1)
        full[:, 1:] += g[:, 1].reshape(nx, ny - 1)
        return (full,)

    return a.tape._record("stack_y", out, (a.id,), vjp)


def check_finite(a: Var, what: str = "value") -> Var:
    if not np.all(np.isfinite(a.value)):
        bad = np.argwhere(~np.isfinite(a.value))
        raise NonFiniteError(f"{what}: non-finite entry at index {tuple(int(k) for k in bad[0])}")
    return a
