"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Operations on :class:`Tensor` objects are recorded on the innermost active
:class:`Tape` whenever at least one input requires a gradient.  The tape is
an ordered list of primitive applications, so a reverse sweep over it is a
valid topological order::

    w = Parameter(np.array([3.0]))
    with Tape() as tape:
        loss = ad.sum(ad.square(w))
    tape.backward(loss)          # w.grad == [6.0]

Anything computed while no tape is active is a plain constant.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .rng import Stream

_state = threading.local()


def _tapes() -> list:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape() -> "Tape | None":
    stack = _tapes()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("value", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    __array_priority__ = 100

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


class Parameter(Tensor):
    """A trainable tensor with its gradient and Adam state."""

    __slots__ = ("grad", "m", "v", "step")

    def __init__(self, value, name: str | None = None, frozen: bool = False):
        super().__init__(np.array(value, dtype=np.float64, copy=True), requires_grad=not frozen, name=name)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0

    @property
    def frozen(self) -> bool:
        return not self.requires_grad

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


class _Record:
    __slots__ = ("out", "inputs", "adjoint")

    def __init__(self, out, inputs, adjoint):
        self.out = out
        self.inputs = inputs
        self.adjoint = adjoint


class Tape:
    """Ordered record of primitive applications.

    A tape supports a single reverse sweep; record a fresh one for every
    forward pass.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self._used = False

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tapes()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def gradient(self, output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """Return d(output)/d(t) for every tensor in ``wrt``."""
        if not self.records:
            raise RuntimeError("backward on an empty tape")
        if self._used:
            raise RuntimeError("tape already consumed by a backward pass")
        if output.value.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
        self._used = True
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            for inp, contrib in zip(rec.inputs, rec.adjoint(g)):
                if contrib is None or not (isinstance(inp, Tensor) and inp.requires_grad):
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib
        return [grads.get(id(t), np.zeros_like(t.value)) for t in wrt]

    def backward(self, output: Tensor, params: Iterable[Parameter] | None = None) -> list[np.ndarray]:
        """Accumulate gradients into ``Parameter.grad`` for every trainable leaf.

        When ``params`` is omitted, all parameters seen on the tape are used.
        """
        if params is None:
            params = self.parameters()
        params = [p for p in params if p.requires_grad]
        grads = self.gradient(output, params)
        for p, g in zip(params, grads):
            p.grad = p.grad + g
        return grads

    def parameters(self) -> list[Parameter]:
        seen: dict[int, Parameter] = {}
        for rec in self.records:
            for inp in rec.inputs:
                if isinstance(inp, Parameter) and inp.requires_grad:
                    seen.setdefault(id(inp), inp)
        return list(seen.values())


class no_grad:
    """Suspend recording: operations inside run as plain array math."""

    def __enter__(self):
        _tapes().append(None)
        return self

    def __exit__(self, *exc):
        _tapes().pop()
        return False


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return value


def _record(op: str, value: np.ndarray, inputs: tuple, adjoint: Callable) -> Tensor:
    out = Tensor(_finite(value, op))
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append(_Record(out, inputs, adjoint))
    return out


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not conform") from None


# ---------------------------------------------------------------- primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _record("add", a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _record("sub", a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _record("mul", a.value * b.value, (a, b),
                   lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    if np.any(b.value == 0):
        raise ZeroDivisionError("div by zero")
    q = a.value / b.value
    return _record("div", q, (a, b),
                   lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * q / b.value, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def adjoint(g):
        return (g @ b.value.T if a.requires_grad else None,
                a.value.T @ g if b.requires_grad else None)

    return _record("matmul", a.value @ b.value, (a, b), adjoint)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0  # subgradient 0 at exactly 0
    return _record("relu", np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.value)
    return _record("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = np.empty_like(x.value)
    pos = x.value >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x.value[pos]))
    e = np.exp(x.value[~pos])
    s[~pos] = e / (1.0 + e)
    return _record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        e = np.exp(x.value)
    return _record("exp", e, (x,), lambda g: (g * e,))


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.value <= 0):
        raise ValueError("log of non-positive value")
    return _record("log", np.log(x.value), (x,), lambda g: (g / x.value,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.value <= 0):
        raise ValueError("sqrt of non-positive value")
    r = np.sqrt(x.value)
    return _record("sqrt", r, (x,), lambda g: (g / (2.0 * r),))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _record("square", x.value * x.value, (x,), lambda g: (2.0 * g * x.value,))


def clamp(x, lo: float | None = None, hi: float | None = None) -> Tensor:
    x = as_tensor(x)
    v = x.value
    inside = np.ones(v.shape, dtype=bool)
    if lo is not None:
        inside &= v >= lo
    if hi is not None:
        inside &= v <= hi
    return _record("clamp", np.clip(v, lo, hi), (x,), lambda g: (g * inside,))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    shape = x.shape

    def adjoint(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", np.sum(x.value, axis=axis, keepdims=keepdims), (x,), adjoint)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def broadcast(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.value, shape).copy()
    except ValueError:
        raise ValueError(f"broadcast: cannot broadcast {x.shape} to {shape}") from None
    return _record("broadcast", out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _record("reshape", x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def slice_(x, index) -> Tensor:
    x = as_tensor(x)

    def adjoint(g):
        full = np.zeros_like(x.value)
        np.add.at(full, index, g)
        return (full,)

    return _record("slice", x.value[index], (x,), adjoint)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ValueError(f"concat: {exc}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record("concat", out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


# ---------------------------------------------------------------- layers

def seeded_init(shape, fan_in: int, seed: int, *keys) -> np.ndarray:
    """Uniform draw in [-sqrt(6/fan_in), sqrt(6/fan_in)] from a keyed stream."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    bound = math.sqrt(6.0 / fan_in)
    return Stream(seed, "init", *keys).uniform(tuple(shape), -bound, bound)


class Dense:
    """Affine layer ``x @ W + b`` with fan-in uniform weights and zero bias."""

    def __init__(self, n_in: int, n_out: int, seed: int, name: str, frozen: bool = False):
        self.weight = Parameter(seeded_init((n_in, n_out), n_in, seed, name, "weight"), name=f"{name}.weight", frozen=frozen)
        self.bias = Parameter(np.zeros(n_out), name=f"{name}.bias", frozen=frozen)

    def __call__(self, x) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


# ---------------------------------------------------------------- optimisation

def adam_update(params: Iterable[Parameter], lr: float, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> None:
    """One bias-corrected Adam step on every trainable parameter, in place."""
    params = [p for p in params if p.requires_grad]
    for p in params:
        if p.grad.shape != p.value.shape:
            raise ValueError(f"gradient shape {p.grad.shape} != parameter shape {p.value.shape}")
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient for {p.name}")
    for p in params:
        p.step += 1
        g = p.grad
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        # lr * m_hat / (sqrt(v_hat) + eps), computed in place
        denom = np.sqrt(p.v)
        denom *= 1.0 / math.sqrt(1.0 - beta2 ** p.step)
        denom += eps
        np.divide(p.m, denom, out=denom)
        denom *= lr / (1.0 - beta1 ** p.step)
        p.value -= denom


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-6,
                            coords: int | None = None, seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` builds the scalar from the current values of ``params``.  When
    ``coords`` is given, that many coordinates per tensor are sampled
    instead of checking every one.
    """
    with Tape() as tape:
        out = f()
    analytic = tape.gradient(out, params)
    stream = Stream(seed, "fd-check")
    worst = 0.0
    for t, grad in zip(params, analytic):
        flat = t.value.reshape(-1)
        idx = np.arange(flat.size)
        if coords is not None and coords < flat.size:
            idx = stream.permutation(flat.size)[:coords]
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                up = float(f().value)
            flat[i] = orig - h
            with no_grad():
                down = float(f().value)
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise FloatingPointError("non-finite evaluation in finite-difference check")
            numeric = (up - down) / (2.0 * h)
            a = float(grad.reshape(-1)[i])
            worst = max(worst, abs(a - numeric) / (abs(a) + 1e-8))
    return worst
