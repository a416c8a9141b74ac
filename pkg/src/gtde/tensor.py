"""Dense 2-D float64 tensors with a reverse-mode gradient tape.

Every tensor is a (rows, cols) matrix; scalars are 1x1 and vectors are
1xN or Mx1. Binary elementwise ops broadcast a row vector, a column
vector, or a column against a row -- nothing more general.

Gradients are recorded on an explicit :class:`Tape`. Run the forward pass
inside ``with Tape() as tape:`` and call ``tape.backward(loss)`` (or the
module-level :func:`backward`) while inside to obtain a
:class:`GradientMap` from leaf node ids to gradient tensors. Outside a
tape the same ops run value-only, which is what rollout loops use. A tape
supports exactly one backward pass.

All public ops verify their outputs are finite when finite checks are
enabled (the default); use :func:`finite_checks` to disable them in hot
loops or when deliberately feeding non-finite probes in tests.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "GradientMap",
    "ShapeError",
    "DomainError",
    "NumericError",
    "TapeStateError",
    "DegenerateRowError",
    "tensor",
    "zeros",
    "ones",
    "full",
    "eye",
    "set_finite_checks",
    "finite_checks",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "relu",
    "minimum",
    "clip",
    "softmax_rows",
    "log_softmax_rows",
    "reshape",
    "transpose",
    "concat_rows",
    "concat_cols",
    "slice_rows",
    "block_matmul",
    "block_outer_sum",
    "sum_all",
    "sum_rows",
    "mean_all",
    "straight_through",
    "detach",
    "backward",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DomainError(ValueError):
    """Operand values lie outside the op's domain (e.g. log of x <= 0)."""


class NumericError(ArithmeticError):
    """An op produced NaN or Inf."""


class TapeStateError(RuntimeError):
    """Tape used out of protocol (double backward, nested tapes, ...)."""


class DegenerateRowError(ValueError):
    """A softmax row has no unmasked entries."""


_FINITE_CHECKS = True
_ACTIVE_TAPE: Optional["Tape"] = None


def set_finite_checks(enabled: bool) -> bool:
    """Enable or disable post-op finite checks; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


@contextlib.contextmanager
def finite_checks(enabled: bool) -> Iterator[None]:
    previous = set_finite_checks(enabled)
    try:
        yield
    finally:
        set_finite_checks(previous)


def _check_finite(op: str, out: np.ndarray) -> None:
    if _FINITE_CHECKS and not np.isfinite(out).all():
        raise NumericError(f"{op} produced non-finite values")


class Tensor:
    """Immutable 2-D float64 matrix, optionally participating in a tape."""

    __slots__ = ("data", "requires_grad", "node_id", "_token")

    def __init__(self, values, requires_grad: bool = False, *, _copy: bool = True):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        if arr.size == 0:
            raise ShapeError(f"empty tensor shape {arr.shape}")
        if _copy or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr).copy() if not _copy else arr.copy()
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id: Optional[int] = None
        self._token: Optional[int] = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() requires a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def zeros(rows: int, cols: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=requires_grad, _copy=False)


def ones(rows: int, cols: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones((rows, cols)), requires_grad=requires_grad, _copy=False)


def full(rows: int, cols: int, value: float) -> Tensor:
    return Tensor(np.full((rows, cols), float(value)), _copy=False)


def eye(n: int) -> Tensor:
    return Tensor(np.eye(n), _copy=False)


class _Node:
    __slots__ = ("op", "input_ids", "backward_fn", "shape")

    def __init__(self, op, input_ids, backward_fn, shape):
        self.op = op
        self.input_ids = input_ids
        self.backward_fn = backward_fn
        self.shape = shape


class Tape:
    """Ordered record of one forward pass; consumed by a single backward."""

    _next_token = 1

    def __init__(self):
        self._nodes: list[_Node] = []
        self._leaves: dict[int, Tensor] = {}
        self._consumed = False
        self._token = Tape._next_token
        Tape._next_token += 1

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TapeStateError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, op: str, input_ids, backward_fn, shape) -> int:
        node_id = len(self._nodes)
        self._nodes.append(_Node(op, tuple(input_ids), backward_fn, shape))
        return node_id

    def _ensure_node(self, t: Tensor) -> Optional[int]:
        """Node id of ``t`` on this tape: existing, fresh leaf, or None for constants."""
        if t._token == self._token and t.node_id is not None:
            return t.node_id
        if t.requires_grad:
            node_id = self._record("leaf", (), None, t.shape)
            t.node_id = node_id
            t._token = self._token
            self._leaves[node_id] = t
            return node_id
        return None

    def backward(self, loss: Tensor) -> "GradientMap":
        if self._consumed:
            raise TapeStateError("tape already consumed by a previous backward")
        if loss.shape != (1, 1):
            raise ShapeError(f"backward requires a 1x1 loss, got {loss.shape}")
        if loss._token != self._token or loss.node_id is None:
            raise TapeStateError("loss is not a node on this tape")
        self._consumed = True

        partials: dict[int, np.ndarray] = {loss.node_id: np.ones((1, 1))}
        for node_id in range(loss.node_id, -1, -1):
            grad = partials.get(node_id)
            if grad is None:
                continue
            node = self._nodes[node_id]
            if node.backward_fn is None:
                continue
            contributions = node.backward_fn(grad)
            for input_id, contrib in zip(node.input_ids, contributions):
                if input_id is None or contrib is None:
                    continue
                held = partials.get(input_id)
                partials[input_id] = contrib if held is None else held + contrib

        grads: dict[int, Tensor] = {}
        for leaf_id, leaf in self._leaves.items():
            g = partials.get(leaf_id)
            if g is None:
                g = np.zeros(leaf.shape)
            grads[leaf_id] = Tensor(g, _copy=False)
        return GradientMap(grads, self._token)


class GradientMap:
    """Leaf gradients from one backward pass, keyed by tape node id."""

    def __init__(self, grads: dict[int, Tensor], token: int):
        self._grads = grads
        self._token = token

    def __getitem__(self, node_id: int) -> Tensor:
        return self._grads[node_id]

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._grads

    def __len__(self) -> int:
        return len(self._grads)

    def wrt(self, t: Tensor) -> Tensor:
        """Gradient of the loss with respect to leaf tensor ``t``."""
        if t._token != self._token or t.node_id not in self._grads:
            raise KeyError("tensor is not a requires_grad leaf of this tape")
        return self._grads[t.node_id]


def backward(loss: Tensor) -> GradientMap:
    """Backward on the active tape. See :meth:`Tape.backward`."""
    if _ACTIVE_TAPE is None:
        raise TapeStateError("no active tape")
    return _ACTIVE_TAPE.backward(loss)


def _emit(op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
          backward_builder: Callable[[], Callable]) -> Tensor:
    """Finite-check the result and record a node if any input participates."""
    _check_finite(op, out_data)
    out = Tensor(out_data, _copy=False)
    tape = _ACTIVE_TAPE
    if tape is None:
        return out
    input_ids = [tape._ensure_node(t) for t in inputs]
    if all(i is None for i in input_ids):
        return out
    out.node_id = tape._record(op, input_ids, backward_builder(), out.shape)
    out._token = tape._token
    return out


def _broadcast_pair(op: str, a: Tensor, b: Tensor) -> tuple[int, int]:
    ar, ac = a.shape
    br, bc = b.shape
    rows = ar if br in (1, ar) else (br if ar == 1 else 0)
    cols = ac if bc in (1, ac) else (bc if ac == 1 else 0)
    if rows == 0 or cols == 0:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")
    return rows, cols


def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] > 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] > 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data

    def build():
        def bw(g):
            return (g @ b_data.T, a_data.T @ g)
        return bw

    return _emit("matmul", a_data @ b_data, (a, b), build)


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_pair("add", a, b)
    a_shape, b_shape = a.shape, b.shape

    def build():
        def bw(g):
            return (_reduce_to(g, a_shape), _reduce_to(g, b_shape))
        return bw

    return _emit("add", a.data + b.data, (a, b), build)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_pair("sub", a, b)
    a_shape, b_shape = a.shape, b.shape

    def build():
        def bw(g):
            return (_reduce_to(g, a_shape), _reduce_to(-g, b_shape))
        return bw

    return _emit("sub", a.data - b.data, (a, b), build)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_pair("mul", a, b)
    a_data, b_data = a.data, b.data

    def build():
        def bw(g):
            return (_reduce_to(g * b_data, a_data.shape),
                    _reduce_to(g * a_data, b_data.shape))
        return bw

    with np.errstate(over="ignore"):  # overflow surfaces via the finite check
        out = a_data * b_data
    return _emit("mul", out, (a, b), build)


def neg(a: Tensor) -> Tensor:
    def build():
        def bw(g):
            return (-g,)
        return bw

    return _emit("neg", -a.data, (a,), build)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def build():
        def bw(g):
            return (g * factor,)
        return bw

    return _emit("scale", a.data * factor, (a,), build)


def sigmoid(a: Tensor) -> Tensor:
    # Split by sign to avoid overflow in exp.
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def build():
        y = out

        def bw(g):
            return (g * y * (1.0 - y),)
        return bw

    return _emit("sigmoid", out, (a,), build)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def build():
        y = out

        def bw(g):
            return (g * (1.0 - y * y),)
        return bw

    return _emit("tanh", out, (a,), build)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow surfaces via the finite check
        out = np.exp(a.data)

    def build():
        y = out

        def bw(g):
            return (g * y,)
        return bw

    return _emit("exp", out, (a,), build)


def log(a: Tensor) -> Tensor:
    if (a.data <= 0.0).any():
        raise DomainError("log requires strictly positive input")
    x = a.data

    def build():
        def bw(g):
            return (g / x,)
        return bw

    return _emit("log", np.log(x), (a,), build)


def relu(a: Tensor) -> Tensor:
    x = a.data

    def build():
        def bw(g):
            return (g * (x > 0.0),)
        return bw

    return _emit("relu", np.maximum(x, 0.0), (a,), build)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes differ, {a.shape} vs {b.shape}")
    a_data, b_data = a.data, b.data

    def build():
        take_a = a_data <= b_data  # ties route to the first operand

        def bw(g):
            return (g * take_a, g * ~take_a)
        return bw

    return _emit("minimum", np.minimum(a_data, b_data), (a, b), build)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    if not lo < hi:
        raise DomainError(f"clip requires lo < hi, got [{lo}, {hi}]")
    x = a.data

    def build():
        inside = (x >= lo) & (x <= hi)

        def bw(g):
            return (g * inside,)
        return bw

    return _emit("clip", np.clip(x, lo, hi), (a,), build)


def _validate_mask(op: str, x: Tensor, mask: Tensor) -> np.ndarray:
    if mask.shape != x.shape:
        raise ShapeError(f"{op}: mask shape {mask.shape} != input shape {x.shape}")
    m = mask.data
    if not np.isin(m, (0.0, 1.0)).all():
        raise DomainError(f"{op}: mask entries must be 0 or 1")
    alive = m.astype(bool)
    if not alive.any(axis=1).all():
        raise DegenerateRowError(f"{op}: a row is fully masked")
    return alive


def softmax_rows(x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
    """Row-wise softmax, stabilized by row-max subtraction.

    With a 0/1 ``mask``, normalization runs over unmasked entries only and
    masked entries come out exactly 0. The mask is treated as a constant.
    """
    if mask is None:
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
    else:
        alive = _validate_mask("softmax_rows", x, mask)
        row_max = np.where(alive, x.data, -np.inf).max(axis=1, keepdims=True)
        e = np.exp(np.where(alive, x.data - row_max, 0.0)) * alive
    out = e / e.sum(axis=1, keepdims=True)

    def build():
        y = out

        def bw(g):
            return (y * (g - (g * y).sum(axis=1, keepdims=True)),)
        return bw

    return _emit("softmax_rows", out, (x,), build)


def log_softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def build():
        p = np.exp(out)

        def bw(g):
            return (g - p * g.sum(axis=1, keepdims=True),)
        return bw

    return _emit("log_softmax_rows", out, (x,), build)


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != a.rows * a.cols:
        raise ShapeError(f"reshape: cannot view {a.shape} as ({rows}, {cols})")
    in_shape = a.shape

    def build():
        def bw(g):
            return (g.reshape(in_shape),)
        return bw

    return _emit("reshape", a.data.reshape(rows, cols).copy(), (a,), build)


def transpose(a: Tensor) -> Tensor:
    def build():
        def bw(g):
            return (g.T.copy(),)
        return bw

    return _emit("transpose", a.data.T.copy(), (a,), build)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_rows of no tensors")
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise ShapeError(f"concat_rows: column counts differ, {p.cols} vs {cols}")
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def build():
        def bw(g):
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))
        return bw

    return _emit("concat_rows", np.vstack([p.data for p in parts]), tuple(parts), build)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_cols of no tensors")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError(f"concat_cols: row counts differ, {p.rows} vs {rows}")
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def build():
        def bw(g):
            return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))
        return bw

    return _emit("concat_cols", np.hstack([p.data for p in parts]), tuple(parts), build)


def block_matmul(a: Tensor, b: Tensor, rows_a: int, rows_b: int) -> Tensor:
    """Per-block matrix product of two stacks of equally-sized blocks.

    ``a`` stacks blocks of shape (rows_a, cols_a) and ``b`` blocks of
    shape (rows_b, cols_b); block i of the result is a_i @ b_i. Both
    stacks must hold the same number of blocks.
    """
    if a.rows % rows_a or b.rows % rows_b:
        raise ShapeError(
            f"block_matmul: stacks {a.shape}/{b.shape} not divisible by "
            f"block rows {rows_a}/{rows_b}")
    nb = a.rows // rows_a
    if b.rows // rows_b != nb:
        raise ShapeError(
            f"block_matmul: {nb} blocks in a vs {b.rows // rows_b} in b")
    if a.cols != rows_b:
        raise ShapeError(
            f"block_matmul: inner dimensions differ, ({rows_a}, {a.cols}) x "
            f"({rows_b}, {b.cols}) per block")
    a3 = a.data.reshape(nb, rows_a, a.cols)
    b3 = b.data.reshape(nb, rows_b, b.cols)
    out = np.matmul(a3, b3).reshape(nb * rows_a, b.cols)

    def build():
        def bw(g):
            g3 = g.reshape(nb, rows_a, b3.shape[2])
            ga = np.matmul(g3, b3.transpose(0, 2, 1)).reshape(a.shape)
            gb = np.matmul(a3.transpose(0, 2, 1), g3).reshape(b.shape)
            return (ga, gb)
        return bw

    return _emit("block_matmul", out, (a, b), build)


def block_outer_sum(u: Tensor, v: Tensor, block_rows: int) -> Tensor:
    """Per-block outer sum of two stacked column vectors.

    ``u`` and ``v`` stack (block_rows, 1) columns; block i of the result
    is the (block_rows, block_rows) matrix u_i + v_i^T.
    """
    if u.shape != v.shape or u.cols != 1:
        raise ShapeError(
            f"block_outer_sum needs equal column stacks, got {u.shape} and {v.shape}")
    if u.rows % block_rows:
        raise ShapeError(
            f"block_outer_sum: stack {u.shape} not divisible by {block_rows}")
    nb = u.rows // block_rows
    u3 = u.data.reshape(nb, block_rows, 1)
    v3 = v.data.reshape(nb, 1, block_rows)
    out = (u3 + v3).reshape(nb * block_rows, block_rows)

    def build():
        def bw(g):
            g3 = g.reshape(nb, block_rows, block_rows)
            gu = g3.sum(axis=2).reshape(u.shape)
            gv = g3.sum(axis=1).reshape(v.shape)
            return (gu, gv)
        return bw

    return _emit("block_outer_sum", out, (u, v), build)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= a.rows:
        raise ShapeError(f"slice_rows: [{start}, {stop}) out of range for {a.shape}")
    in_shape = a.shape

    def build():
        def bw(g):
            out = np.zeros(in_shape)
            out[start:stop] = g
            return (out,)
        return bw

    return _emit("slice_rows", a.data[start:stop].copy(), (a,), build)


def sum_all(a: Tensor) -> Tensor:
    in_shape = a.shape

    def build():
        def bw(g):
            return (np.full(in_shape, g[0, 0]),)
        return bw

    return _emit("sum_all", a.data.sum().reshape(1, 1), (a,), build)


def sum_rows(a: Tensor) -> Tensor:
    """Sum across columns: (m, n) -> (m, 1)."""
    cols = a.cols

    def build():
        def bw(g):
            return (np.repeat(g, cols, axis=1),)
        return bw

    return _emit("sum_rows", a.data.sum(axis=1, keepdims=True), (a,), build)


def mean_all(a: Tensor) -> Tensor:
    in_shape = a.shape
    inv = 1.0 / (in_shape[0] * in_shape[1])

    def build():
        def bw(g):
            return (np.full(in_shape, g[0, 0] * inv),)
        return bw

    return _emit("mean_all", a.data.mean().reshape(1, 1), (a,), build)


def straight_through(soft: Tensor, hard) -> Tensor:
    """Forward the hard values; route the gradient to ``soft`` unchanged."""
    hard_data = hard.data if isinstance(hard, Tensor) else np.asarray(hard, dtype=np.float64)
    if hard_data.shape != soft.shape:
        raise ShapeError(
            f"straight_through: hard shape {hard_data.shape} != soft shape {soft.shape}")

    def build():
        def bw(g):
            return (g,)
        return bw

    return _emit("straight_through", hard_data.copy(), (soft,), build)


def detach(a: Tensor) -> Tensor:
    """Same values, no tape participation."""
    return Tensor(a.data, _copy=False)
