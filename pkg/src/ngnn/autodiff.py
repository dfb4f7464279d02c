"""Dense 64-bit tensors with tape-based reverse-mode differentiation.

Operations are recorded only while a :class:`Tape` is active::

    with Tape() as tape:
        loss = reduce_sum(mul(x, x))
    grads = tape.backward(loss)
    grads[x]            # -> 2 * x.data

Outside a tape the same functions simply compute values, which is what the
evaluation code uses. There is no implicit broadcasting: shapes must match
exactly except for :func:`scale` (tensor times Python scalar). Row-bias
addition goes through the explicit :func:`tile_rows`.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_state = threading.local()

LEAKY_SLOPE = 0.01


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """A float64 array that can take part in a tape."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class GradientMap:
    """Gradients keyed by tensor identity.

    Looking up a tensor that the loss does not depend on yields zeros of the
    tensor's shape.
    """

    def __init__(self, grads: dict[int, np.ndarray], keep: list[Tensor]):
        self._grads = grads
        self._keep = keep

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        return np.zeros_like(t.data) if g is None else g

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads

    def reached(self, t: Tensor) -> bool:
        return id(t) in self._grads


class Tape:
    """Ordered log of primitive operations for one forward pass."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def backward(self, loss: Tensor) -> GradientMap:
        if loss.data.size != 1 or loss.data.ndim != 0:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        # holding the tensors keeps their id() keys from being recycled
        keep: list[Tensor] = [loss]
        for rec in reversed(self.records):
            g = grads.get(id(rec.out))
            if g is None:
                continue
            parts = rec.backward(g)
            for inp, part in zip(rec.inputs, parts):
                if part is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + part
                else:
                    grads[key] = part
                    keep.append(inp)
        return GradientMap(grads, keep)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = needs
    out.name = None
    tape = _active_tape()
    if needs and tape is not None:
        tape.records.append(_Record(out, inputs, backward))
    return out


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Plain 2-D matrix product."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def back(g):
        return g @ B.T, A.T @ g

    return _emit(A @ B, (a, b), back)


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum with an explicit output, e.g. ``"npq,nq->np"``.

    Each operand's labels must be distinct and each label of an operand must
    also appear in the other operand or in the output, so the gradient of one
    operand is again a two-operand einsum.
    """
    try:
        lhs, out_labels = spec.replace(" ", "").split("->")
        la, lb = lhs.split(",")
    except ValueError:
        raise ContractError(f"einsum: malformed spec {spec!r}") from None
    for labels, t in ((la, a), (lb, b)):
        if len(set(labels)) != len(labels):
            raise ContractError(f"einsum: repeated label in {labels!r}")
        if len(labels) != t.data.ndim:
            raise DimensionError(f"einsum {spec!r}: operand {labels!r} vs shape {t.shape}")
    for labels, other in ((la, lb), (lb, la)):
        for ch in labels:
            if ch not in other and ch not in out_labels:
                raise ContractError(f"einsum: label {ch!r} summed within a single operand")
    sizes: dict[str, int] = {}
    for labels, t in ((la, a), (lb, b)):
        for ch, n in zip(labels, t.shape):
            if sizes.setdefault(ch, n) != n:
                raise DimensionError(
                    f"einsum {spec!r}: label {ch!r} has size {sizes[ch]} in one operand, {n} in the other "
                    f"(shapes {a.shape} and {b.shape})"
                )
    A, B = a.data, b.data
    out = np.einsum(f"{la},{lb}->{out_labels}", A, B)

    def back(g):
        ga = np.einsum(f"{out_labels},{lb}->{la}", g, B) if a.requires_grad else None
        gb = np.einsum(f"{out_labels},{la}->{lb}", g, A) if b.requires_grad else None
        return ga, gb

    return _emit(out, (a, b), back)


def take(a: Tensor, index) -> Tensor:
    """Select entries along axis 0; repeated indices accumulate on backward."""
    idx = np.asarray(index, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError(f"take: index must be 1-D, got shape {idx.shape}")
    A = a.data
    if idx.size and (idx.min() < 0 or idx.max() >= A.shape[0]):
        raise DimensionError(f"take: index out of range for leading dimension {A.shape[0]}")

    def back(g):
        full = np.zeros_like(A)
        np.add.at(full, idx, g)
        return (full,)

    return _emit(A[idx], (a,), back)


def tile_rows(b: Tensor, n: int) -> Tensor:
    """Stack ``n`` copies of a 1-D tensor into an ``n x len(b)`` matrix."""
    if b.data.ndim != 1:
        raise DimensionError(f"tile_rows: expected a vector, got shape {b.shape}")
    B = b.data

    def back(g):
        return (g.sum(axis=0),)

    return _emit(np.tile(B, (n, 1)), (b,), back)


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    return _emit(A * B, (a, b), lambda g: (g * B, g * A))


hadamard = mul


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def one_minus(a: Tensor) -> Tensor:
    return _emit(1.0 - a.data, (a,), lambda g: (-g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _emit(y, (a,), lambda g: (g * y * (1.0 - y),))


def log_sigmoid(a: Tensor) -> Tensor:
    """ln(sigmoid(x)) without overflow for large |x|."""
    x = a.data
    y = -np.logaddexp(0.0, -x)
    s_neg = _sigmoid(-x)
    return _emit(y, (a,), lambda g: (g * s_neg,))


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    x = a.data
    d = np.where(x > 0, 1.0, slope)
    return _emit(np.where(x > 0, x, slope * x), (a,), lambda g: (g * d,))


def square(a: Tensor) -> Tensor:
    x = a.data
    return _emit(x * x, (a,), lambda g: (2.0 * g * x,))


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def sum_all(tensors: Sequence[Tensor]) -> Tensor:
    """Sum a list of scalar tensors; an empty list gives 0."""
    total = Tensor(0.0)
    for t in tensors:
        total = add(total, t)
    return total


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "leaky_relu": leaky_relu}
_BINARY = {"hadamard": mul, "add": add, "sub": sub}


def elementwise(op: str, *args):
    """Name-dispatched elementwise op: unary, binary, or ``scale(t, c)``."""
    if op in _UNARY:
        if op == "leaky_relu" and len(args) == 2:
            return leaky_relu(args[0], args[1])
        (a,) = args
        return _UNARY[op](a)
    if op in _BINARY:
        a, b = args
        return _BINARY[op](a, b)
    if op == "scale":
        a, c = args
        return scale(a, c)
    raise ContractError(f"unknown elementwise op {op!r}")
