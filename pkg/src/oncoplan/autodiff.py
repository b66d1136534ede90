"""Dense float64 tensors with reverse-mode differentiation.

Everything downstream (embedding projections, transformer blocks, losses)
is built from the primitives here. A fresh :class:`Tape` is created per
forward pass; calling :func:`backward` replays the recorded primitives in
reverse and accumulates gradients for every named parameter.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "ShapeError",
    "NumericError",
    "ConfigError",
    "UsageError",
    "Tensor",
    "Tape",
    "backward",
    "finite_diff_check",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat_rows",
    "slice_rows",
    "stack_rows",
    "exp",
    "log",
    "sqrt",
    "square",
    "absolute",
    "clamp_min",
    "sigmoid",
    "gelu",
    "tensor_sum",
    "tensor_mean",
    "softmax",
    "layer_norm",
    "attention",
    "masked_logsumexp",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NumericError(ArithmeticError):
    """A value that must be finite is NaN or infinite."""


class ConfigError(ValueError):
    """A configuration value is out of its legal range."""


class UsageError(RuntimeError):
    """An API was called outside its contract (e.g. backward off-tape)."""


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    # ascontiguousarray would promote 0-d scalars to 1-d; preserve rank
    if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """Immutable dense array of 64-bit floats, optionally tracked on a tape.

    Construction rejects NaN/Inf so that a non-finite value surfaces at the
    operation that produced it rather than after an entire forward pass.
    """

    __slots__ = ("data", "tape", "name")

    def __init__(self, data, tape: "Tape | None" = None, name: str | None = None):
        arr = _as_array(data)
        if not np.all(np.isfinite(arr)):
            raise NumericError(
                f"tensor{'' if name is None else ' ' + name!r} contains non-finite entries"
            )
        self.data = arr
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # Operator sugar; every path funnels through the module-level primitives.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


class _Record:
    __slots__ = ("inputs", "output", "vjp")

    def __init__(self, inputs, output, vjp):
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Single-owner: never share a tape across threads. Gradients are replayed
    in exact reverse order of forward execution.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._params: dict[str, Tensor] = {}

    def param(self, name: str, data) -> Tensor:
        if name in self._params:
            raise UsageError(f"parameter {name!r} already registered on this tape")
        t = Tensor(data, tape=self, name=name)
        self._params[name] = t
        return t

    def params(self) -> Mapping[str, Tensor]:
        return dict(self._params)

    def _record(self, inputs: tuple[Tensor, ...], output: Tensor, vjp) -> None:
        self._records.append(_Record(inputs, output, vjp))

    def __len__(self) -> int:
        return len(self._records)


def _lift(value, tape: Tape | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, tape=None)


def _result_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise UsageError("operands live on different tapes")
            tape = t.tape
    return tape


def _emit(inputs: tuple[Tensor, ...], out_data: np.ndarray, vjp) -> Tensor:
    tape = _result_tape(*inputs)
    out = Tensor(out_data, tape=tape)
    if tape is not None:
        tape._record(inputs, out, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit((a, b), a.data + b.data, vjp)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit((a, b), a.data - b.data, vjp)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit((a, b), a.data * b.data, vjp)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0.0):
        raise NumericError("div: divisor contains zero")

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _emit((a, b), a.data / b.data, vjp)


def neg(a) -> Tensor:
    a = _lift(a)
    return _emit((a,), -a.data, lambda g: (-g,))


def exp(a) -> Tensor:
    a = _lift(a)
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return _emit((a,), out_data, vjp)


def log(a) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0.0):
        raise NumericError("log: argument must be strictly positive")

    def vjp(g):
        return (g / a.data,)

    return _emit((a,), np.log(a.data), vjp)


def sqrt(a) -> Tensor:
    a = _lift(a)
    if np.any(a.data < 0.0):
        raise NumericError("sqrt: argument must be non-negative")
    out_data = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out_data,)

    return _emit((a,), out_data, vjp)


def square(a) -> Tensor:
    a = _lift(a)

    def vjp(g):
        return (g * 2.0 * a.data,)

    return _emit((a,), a.data * a.data, vjp)


def absolute(a) -> Tensor:
    a = _lift(a)

    def vjp(g):
        return (g * np.sign(a.data),)

    return _emit((a,), np.abs(a.data), vjp)


def clamp_min(a, floor: float) -> Tensor:
    a = _lift(a)
    mask = a.data >= floor

    def vjp(g):
        return (g * mask,)

    return _emit((a,), np.maximum(a.data, floor), vjp)


def sigmoid(a) -> Tensor:
    a = _lift(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def vjp(g):
        return (g * out_data * (1.0 - out_data),)

    return _emit((a,), out_data, vjp)


def gelu(a) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF via erf."""
    a = _lift(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return _emit((a,), x * cdf, vjp)


# ---------------------------------------------------------------------------
# reductions and structure


def tensor_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    if axis is not None and not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"sum: axis {axis} invalid for shape {a.shape}")
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _emit((a,), out_data, vjp)


def tensor_mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} x {b.shape}")

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _emit((a, b), a.data @ b.data, vjp)


def transpose(a) -> Tensor:
    a = _lift(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expects a 2-D tensor, got {a.shape}")

    def vjp(g):
        return (g.T.copy(),)

    return _emit((a,), a.data.T.copy(), vjp)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _lift(a)
    shape = tuple(shape)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")

    def vjp(g):
        return (g.reshape(a.shape),)

    return _emit((a,), a.data.reshape(shape), vjp)


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(_lift(p) for p in parts)
    if not parts:
        raise ShapeError("concat_rows: nothing to concatenate")
    widths = {p.shape[1:] for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: trailing dims differ: {sorted(widths)}")
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _emit(parts, np.concatenate([p.data for p in parts], axis=0), vjp)


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = _lift(a)
    if not 0 <= start <= stop <= a.shape[0]:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for shape {a.shape}")

    def vjp(g):
        full = np.zeros(a.shape)
        full[start:stop] = g
        return (full,)

    return _emit((a,), a.data[start:stop].copy(), vjp)


def stack_rows(vectors: Iterable[Tensor]) -> Tensor:
    """Stack 1-D tensors (or flattenable ones) into a matrix, one per row."""
    rows = [reshape(v, (1, v.size)) for v in vectors]
    return concat_rows(rows)


# ---------------------------------------------------------------------------
# composite building blocks (gradients flow through the primitives above)


def softmax(a, axis: int = -1) -> Tensor:
    a = _lift(a)
    if a.data.ndim == 0 or a.data.shape == () or a.data.size == 0:
        raise ShapeError("softmax: input must be non-empty")
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    if a.data.shape[axis] == 0:
        raise ShapeError("softmax: empty axis")
    # Max-subtraction for stability; the max is a constant, so the gradient
    # of the remaining expression is exact.
    shift = np.max(a.data, axis=axis, keepdims=True)
    e = exp(sub(a, Tensor(shift)))
    return div(e, tensor_sum(e, axis=axis, keepdims=True))


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be positive, got {eps}")
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} do not match last dim {width}"
        )
    mu = tensor_mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tensor_mean(square(centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    return add(mul(normed, gain), bias)


def attention(q, k, v) -> Tensor:
    """softmax(q k^T / sqrt(width)) v over fully visible rows (no masking)."""
    q, k, v = _lift(q), _lift(k), _lift(v)
    for t, label in ((q, "q"), (k, "k"), (v, "v")):
        if t.data.ndim != 2:
            raise ShapeError(f"attention: {label} must be 2-D, got {t.shape}")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"attention: query width {q.shape} != key width {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention: key rows {k.shape} != value rows {v.shape}")
    logits = mul(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[1]))
    return matmul(softmax(logits, axis=-1), v)


def masked_logsumexp(x, mask: np.ndarray, axis: int = -1) -> Tensor:
    """log(sum(exp(x) * mask)) along an axis; mask is a constant 0/1 array.

    Stable via a detached masked max. Rows whose mask is all-zero are invalid.
    """
    x = _lift(x)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.shape:
        raise ShapeError(f"masked_logsumexp: mask shape {mask.shape} != {x.shape}")
    if np.any(mask.sum(axis=axis) == 0):
        raise ShapeError("masked_logsumexp: a slice has an empty mask")
    neg_inf = np.where(mask > 0, x.data, -np.inf)
    shift = np.max(neg_inf, axis=axis, keepdims=True)
    e = mul(exp(sub(x, Tensor(shift))), Tensor(mask))
    s = tensor_sum(e, axis=axis, keepdims=True)
    out = add(log(s), Tensor(shift))
    return reshape(out, tuple(n for i, n in enumerate(out.shape) if i != (axis % x.data.ndim)))


# ---------------------------------------------------------------------------
# reverse pass and verification


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with respect to every registered parameter."""
    if not isinstance(loss, Tensor) or loss.tape is not tape:
        raise UsageError("backward: loss was not produced through this tape")
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for record in reversed(tape._records):
        g_out = grads.pop(id(record.output), None)
        if g_out is None:
            continue
        for tensor, g_in in zip(record.inputs, record.vjp(g_out)):
            if g_in is None or tensor.tape is None:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = np.asarray(g_in, dtype=np.float64)
    out: dict[str, np.ndarray] = {}
    for name, p in tape._params.items():
        g = grads.get(id(p))
        out[name] = np.zeros(p.shape) if g is None else g.reshape(p.shape)
    return out


def finite_diff_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a name->Tensor dict to a scalar Tensor; it is evaluated once
    under a tape for the analytic gradient and twice per coordinate for the
    central differences. Relative error uses a unit floor so near-zero
    gradients are compared absolutely.
    """
    if eps <= 0:
        raise ConfigError(f"finite_diff_check: eps must be positive, got {eps}")
    base = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    tape = Tape()
    wrapped = {k: tape.param(k, v) for k, v in base.items()}
    loss = f(wrapped)
    if not np.all(np.isfinite(loss.data)):
        raise NumericError("finite_diff_check: function value is not finite")
    analytic = backward(tape, loss)

    def value_at(arrays: Mapping[str, np.ndarray]) -> float:
        consts = {k: Tensor(v) for k, v in arrays.items()}
        out = f(consts)
        if not np.all(np.isfinite(out.data)):
            raise NumericError("finite_diff_check: function value is not finite")
        return out.item()

    worst = 0.0
    for name, arr in base.items():
        flat = arr.reshape(-1)
        an = analytic[name].reshape(-1)
        for i in range(flat.size):
            bumped = dict(base)
            plus = arr.copy()
            plus.reshape(-1)[i] += eps
            bumped[name] = plus
            up = value_at(bumped)
            minus = arr.copy()
            minus.reshape(-1)[i] -= eps
            bumped[name] = minus
            down = value_at(bumped)
            fd = (up - down) / (2.0 * eps)
            err = abs(fd - an[i]) / max(1.0, abs(fd), abs(an[i]))
            worst = max(worst, err)
    return worst
