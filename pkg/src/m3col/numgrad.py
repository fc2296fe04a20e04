"""Dense 2-D arithmetic with tape-based reverse-mode differentiation.

Every value is a float64 matrix. Operations whose inputs belong to a
:class:`Tape` are appended to it, and :func:`backward` walks the tape in
reverse to accumulate gradients. Inputs without a tape act as constants, so
the same loss code runs with or without gradient tracking.

>>> tape = Tape()
>>> x = tape.leaf([[-3.0, 5.0]])
>>> grads = backward(tape, sum_all(relu(x)))
>>> grads[x.node].tolist()
[[0.0, 1.0]]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DegenerateEmbeddingError, OracleInvalidError, ParameterError, ShapeError

NORM_EPS = 1e-12


class Tensor:
    """A real matrix, optionally attached to a tape as node ``node``."""

    __slots__ = ("value", "tape", "node")

    def __init__(self, value, tape: Optional["Tape"] = None, node: Optional[int] = None):
        arr = np.array(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got array with shape {arr.shape}")
        self.value = arr
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.value.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tag = f", node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Entry:
    """One recorded operation: ``output = kind(*inputs)``.

    ``vjp`` maps the output gradient to one gradient per input (``None`` for
    inputs that are constants).
    """

    kind: str
    inputs: tuple
    output: int
    vjp: Callable[[np.ndarray], tuple]


class Tape:
    """Computation record. Entries are appended in execution order, which is
    a topological order because an entry can only consume existing nodes."""

    def __init__(self):
        self.entries: list[Entry] = []
        self.leaves: list[int] = []
        self._shapes: list[tuple[int, int]] = []

    def __len__(self):
        return len(self.entries)

    def _new_node(self, shape) -> int:
        self._shapes.append(tuple(shape))
        return len(self._shapes) - 1

    def leaf(self, value) -> Tensor:
        """Register a differentiable input (parameter or data) on this tape."""
        t = Tensor(value)
        t.tape = self
        t.node = self._new_node(t.shape)
        self.leaves.append(t.node)
        return t

    def shape_of(self, node: int) -> tuple[int, int]:
        return self._shapes[node]

    def record(self, kind: str, inputs: Sequence[Tensor], value: np.ndarray, vjp) -> Tensor:
        out = Tensor.__new__(Tensor)
        out.value = value
        out.tape = self
        out.node = self._new_node(value.shape)
        ids = tuple(t.node if t.tape is self else None for t in inputs)
        self.entries.append(Entry(kind, ids, out.node, vjp))
        return out


def _apply(kind: str, inputs: Sequence[Tensor], value: np.ndarray, vjp) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ContractError(f"{kind}: inputs belong to different tapes")
            tape = t.tape
    if tape is None:
        out = Tensor.__new__(Tensor)
        out.value, out.tape, out.node = value, None, None
        return out
    return tape.record(kind, inputs, value, vjp)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Gradient of the scalar ``loss`` w.r.t. every node on ``tape``.

    Leaves that ``loss`` does not depend on receive zero matrices.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a 1x1 loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    if loss.tape is tape and loss.node is not None:
        grads[loss.node] = np.ones((1, 1))
        for entry in reversed(tape.entries):
            g = grads.get(entry.output)
            if g is None:
                continue
            for node, gi in zip(entry.inputs, entry.vjp(g)):
                if node is None or gi is None:
                    continue
                if node in grads:
                    grads[node] = grads[node] + gi
                else:
                    grads[node] = gi
    elif loss.tape is not None:
        raise ContractError("loss was recorded on a different tape")
    for node in tape.leaves:
        if node not in grads:
            grads[node] = np.zeros(tape.shape_of(node))
    return grads


# ---------------------------------------------------------------- operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    # skip the product for a constant operand (e.g. the data matrix)
    need_a, need_b = a.tape is not None, b.tape is not None
    return _apply("matmul", (a, b), av @ bv,
                  lambda g: (g @ bv.T if need_a else None, av.T @ g if need_b else None))


def _broadcast_pair(kind, a: Tensor, b: Tensor):
    if a.shape == b.shape:
        return lambda g: g
    if b.rows == 1 and b.cols == a.cols:
        return lambda g: g.sum(axis=0, keepdims=True)
    if b.shape == (1, 1):
        return lambda g: np.array([[g.sum()]])
    raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} are incompatible")


def add(a: Tensor, b: Tensor) -> Tensor:
    """``a + b``; ``b`` may be a row vector or scalar broadcast over ``a``."""
    reduce_b = _broadcast_pair("add", a, b)
    return _apply("add", (a, b), a.value + b.value, lambda g: (g, reduce_b(g)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    reduce_b = _broadcast_pair("sub", a, b)
    return _apply("sub", (a, b), a.value - b.value, lambda g: (g, -reduce_b(g)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    av, bv = a.value, b.value
    return _apply("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    return _apply("scale", (a,), a.value * c, lambda g: (g * c,))


def transpose(a: Tensor) -> Tensor:
    return _apply("transpose", (a,), a.value.T.copy(), lambda g: (g.T,))


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = a.value > 0
    return _apply("relu", (a,), np.where(mask, a.value, 0.0), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _apply("exp", (a,), out, lambda g: (g * out,))


def row_l2_normalize(a: Tensor, eps: float = NORM_EPS) -> Tensor:
    norms = np.sqrt(np.einsum("ij,ij->i", a.value, a.value))
    bad = np.flatnonzero(norms < eps)
    if bad.size:
        raise DegenerateEmbeddingError(int(bad[0]), float(norms[bad[0]]))
    n = norms[:, None]
    y = a.value / n

    def vjp(g):
        return ((g - y * np.sum(g * y, axis=1, keepdims=True)) / n,)

    return _apply("row_l2_normalize", (a,), y, vjp)


def log_softmax_rows(a: Tensor) -> Tensor:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)

    return _apply("log_softmax_rows", (a,), out, vjp)


def softmax_rows(a: Tensor) -> Tensor:
    return exp(log_softmax_rows(a))


def dropout(a: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout. Returns ``a`` itself when inactive."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ParameterError("dropout in training mode needs an rng")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _apply("dropout", (a,), a.value * mask, lambda g: (g * mask,))


def concat_columns(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_columns needs at least one part")
    n = parts[0].rows
    for t in parts:
        if t.rows != n:
            raise ShapeError(f"concat_columns: row counts differ ({n} vs {t.rows})")
    bounds = np.cumsum([0] + [t.cols for t in parts])
    value = np.concatenate([t.value for t in parts], axis=1)

    def vjp(g):
        return tuple(g[:, bounds[k]:bounds[k + 1]] for k in range(len(parts)))

    return _apply("concat_columns", parts, value, vjp)


def mix_rows(a: Tensor, lam: np.ndarray, perm: np.ndarray) -> Tensor:
    """Row ``i`` becomes ``lam[i] * a[i] + (1 - lam[i]) * a[perm[i]]``."""
    lam = np.asarray(lam, dtype=np.float64)
    perm = np.asarray(perm)
    if lam.shape != (a.rows,) or perm.shape != (a.rows,):
        raise ShapeError(f"mix_rows: {a.rows} rows but lambda {lam.shape} and permutation {perm.shape}")
    keep = lam[:, None]
    other = 1.0 - keep
    value = keep * a.value + other * a.value[perm]

    def vjp(g):
        ga = keep * g
        np.add.at(ga, perm, other * g)
        return (ga,)

    return _apply("mix_rows", (a,), value, vjp)


def weighted_sum(a: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar ``sum(a * weights)`` with constant ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != a.shape:
        raise ShapeError(f"weighted_sum: weights {w.shape} do not match tensor {a.shape}")
    value = np.array([[np.sum(a.value * w)]])
    return _apply("weighted_sum", (a,), value, lambda g: (g[0, 0] * w,))


def sum_all(a: Tensor) -> Tensor:
    return weighted_sum(a, np.ones(a.shape))


# ------------------------------------------------------------ gradient check


def _value_of(f, arrays) -> float:
    return f([Tensor(x) for x in arrays]).item()


def numeric_gradient(f, arrays: Sequence[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``f`` w.r.t. each array, element by element."""
    arrays = [np.array(x, dtype=np.float64) for x in arrays]
    out = []
    for x in arrays:
        g = np.zeros_like(x)
        for idx in np.ndindex(*x.shape):
            orig = x[idx]
            x[idx] = orig + h
            fp = _value_of(f, arrays)
            x[idx] = orig - h
            fm = _value_of(f, arrays)
            x[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


def analytic_gradient(f, arrays: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
    tape = Tape()
    leaves = [tape.leaf(x) for x in arrays]
    loss = f(leaves)
    grads = backward(tape, loss)
    return loss.item(), [grads[t.node] for t in leaves]


def finite_diff_gradcheck(f, params, h: float = 1e-5) -> float:
    """Largest relative disagreement between backprop and central differences.

    ``f`` maps a list of tensors (one per entry of ``params``) to a 1x1
    tensor. For each parameter the error is
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`` using
    Frobenius norms; the maximum over parameters is returned.
    """
    arrays = [np.array(p.value if isinstance(p, Tensor) else p, dtype=np.float64) for p in params]
    base, analytic = analytic_gradient(f, arrays)
    again = _value_of(f, arrays)
    if again != base:
        raise OracleInvalidError(f"f returned {base!r} then {again!r} for identical parameters")
    numeric = numeric_gradient(f, arrays, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = max(1e-8, float(np.linalg.norm(a) + np.linalg.norm(n)))
        worst = max(worst, float(np.linalg.norm(a - n)) / denom)
    return worst
