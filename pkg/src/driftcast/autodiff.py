"""A small numpy tensor type with a reverse-mode tape and an Adam optimizer.

Operations on tensors that require gradients are appended to the current
thread's :class:`Tape` in execution order, which is already a topological
order. :func:`backward` walks that list in reverse, summing gradients into
``Tensor.grad``, and then clears the tape.

Everything is float64.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGradient, NonScalarLoss, ShapeMismatch


class Tape:
    def __init__(self):
        self.records = []
        self.enabled = True

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records.clear()


_local = threading.local()


def current_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


@contextmanager
def no_grad():
    tape = current_tape()
    prev = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by constants")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(out, inputs, backward_fn) -> Tensor:
    """Wrap ``out`` as a tensor and, if any input needs gradients, put it on the tape.

    ``backward_fn(g)`` must return one gradient (or None) per input.
    """
    tape = current_tape()
    needs = tape.enabled and any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=needs)
    if needs:
        tape.records.append((result, inputs, backward_fn))
    return result


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_check(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data
    return record(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, with numpy broadcasting of leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeMismatch("matmul", a.shape, b.shape) from None
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return record(out, (a, b), backward)


# ---------------------------------------------------------------- structure

def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("stack", *[t.shape for t in tensors]) from None
    n = len(tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return record(out, tuple(tensors), backward)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    basic = not isinstance(idx, (list, np.ndarray)) and not (
        isinstance(idx, tuple) and any(isinstance(i, (list, np.ndarray)) for i in idx))

    def backward(g):
        z = np.zeros(shape)
        if basic:
            z[idx] = g
        else:
            np.add.at(z, idx, g)
        return (z,)

    return record(a.data[idx], (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", orig, shape) from None
    return record(out, (a,), lambda g: (g.reshape(orig),))


def swapaxes(a, ax1=-1, ax2=-2) -> Tensor:
    a = as_tensor(a)
    return record(np.swapaxes(a.data, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


# ---------------------------------------------------------------- elementwise

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return record(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return record(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record(out, (a,), lambda g: (g * out,))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return record(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def sqrt(a) -> Tensor:
    """Square root whose gradient is taken as 0 where the output is 0."""
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / out, 0.0)
        return (g * d,)

    return record(out, (a,), backward)


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record(out, (a,), backward)


def dropout(a, rate, rng) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0."""
    if rate <= 0.0:
        return as_tensor(a)
    a = as_tensor(a)
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, mask)


# ---------------------------------------------------------------- reductions

def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return record(out, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / float(count))


def mean_squared_error(pred, target, axis=None) -> Tensor:
    """Mean of (pred - target)**2 over ``axis`` (all elements when None)."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch("mean_squared_error", pred.shape, target.shape)
    return mean(square(sub(pred, target)), axis=axis)


# ---------------------------------------------------------------- backward

def backward(loss: Tensor, tape: Tape = None):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape, then clear it."""
    tape = tape or current_tape()
    if loss.data.size != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.records:
        raise NonScalarLoss("tape is empty: loss does not depend on any tensor requiring grad")
    grads = {id(loss): np.ones_like(loss.data)}
    try:
        for out, inputs, fn in reversed(tape.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            out.grad = g if out.grad is None else out.grad + g
            for inp, gi in zip(inputs, fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        # whatever is left reached leaves that no recorded op produced
        leaves = {}
        for _, inputs, _ in tape.records:
            for inp in inputs:
                if inp.requires_grad and id(inp) in grads:
                    leaves[id(inp)] = inp
        for key, t in leaves.items():
            g = grads[key]
            t.grad = g.copy() if t.grad is None else t.grad + g
    finally:
        tape.clear()


# ---------------------------------------------------------------- optimizer

@dataclass
class OptimizerState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)


def optimizer_step(state: OptimizerState, parameters):
    """One Adam update in place; gradients are zero-filled afterwards."""
    parameters = list(parameters)
    for p in parameters:
        if p.grad is None:
            raise MissingGradient(f"parameter {p.name or p.shape} has no gradient")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in parameters]
        state.second_moment = [np.zeros_like(p.data) for p in parameters]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(parameters, state.first_moment, state.second_moment):
        if m.shape != p.shape:
            raise ShapeMismatch("optimizer_step", m.shape, p.shape)
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = np.zeros_like(p.data)


class Adam:
    """Convenience wrapper binding an :class:`OptimizerState` to a parameter list."""

    def __init__(self, parameters, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.parameters = list(parameters)
        self.state = OptimizerState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self):
        optimizer_step(self.state, self.parameters)

    def zero_grad(self):
        for p in self.parameters:
            p.grad = None
