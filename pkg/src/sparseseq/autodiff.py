"""Dense float64 tensors with reverse-mode automatic differentiation.

A small tape-based engine sized for the recurrent models in this package:
eager numpy forward, per-op closures for local gradients, iterative
topological backward. Everything is 64-bit so gradient checks can run at
tight tolerances. One graph is single-threaded; tensors that do not require
gradients are treated as immutable and may be shared freely.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Operand shapes incompatible with a primitive."""


class ContractError(ValueError):
    """An operation precondition was violated by the caller."""


class NumericInstabilityError(ArithmeticError):
    """Non-finite values showed up where finite math was required."""


class NonFiniteGradientError(ArithmeticError):
    """The optimizer saw a NaN/inf gradient; message names the parameter."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure numpy forward)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple = ()
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; every op lives at module level
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Wrap an op result; record the closure only when gradients can flow."""
    out = Tensor(data)
    if _grad_enabled:
        live = tuple(p for p in parents if p.requires_grad)
        if live:
            out.requires_grad = True
            out._parents = live
            out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not broadcast")


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accum(-g)

    return _make(-a.data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: shapes {a.data.shape} @ {b.data.shape}")

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def affine(bias, *pairs) -> Tensor:
    """bias + sum of x @ W over (x, W) pairs; one node instead of five.

    All x must share a leading (batch) dimension; bias broadcasts over rows.
    """
    bias = _as_tensor(bias)
    pairs = tuple((_as_tensor(x), _as_tensor(w)) for x, w in pairs)
    acc = None
    for x, w in pairs:
        if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
            raise DimensionError(f"affine: shapes {x.data.shape} @ {w.data.shape}")
        term = x.data @ w.data
        acc = term if acc is None else acc + term
    out_data = acc + bias.data

    def backward(g):
        if bias.requires_grad:
            bias._accum(_unbroadcast(g, bias.data.shape))
        for x, w in pairs:
            if x.requires_grad:
                x._accum(g @ w.data.T)
            if w.requires_grad:
                w._accum(x.data.T @ g)

    parents = (bias,) + tuple(t for pair in pairs for t in pair)
    return _make(out_data, parents, backward)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a._accum(g * (y * (1.0 - y)))

    return _make(y, (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)

    def backward(g):
        a._accum(g * (1.0 - y * y))

    return _make(y, (a,), backward)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    y = np.exp(a.data)

    def backward(g):
        a._accum(g * y)

    return _make(y, (a,), backward)


def log(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accum(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def relu(a) -> Tensor:
    """max(x, 0); subgradient at 0 is 0."""
    a = _as_tensor(a)

    def backward(g):
        a._accum(g * (a.data > 0))

    return _make(np.maximum(a.data, 0.0), (a,), backward)


def exp_neg_relu(a) -> Tensor:
    """exp(-max(x, 0)), fused; always in (0, 1], the decay-rate squashing."""
    a = _as_tensor(a)
    y = np.exp(-np.maximum(a.data, 0.0))

    def backward(g):
        a._accum(g * (-y) * (a.data > 0))

    return _make(y, (a,), backward)


def lerp(t, a, b) -> Tensor:
    """t*a + (1-t)*b, fused; exact at the endpoints t=0 and t=1."""
    t, a, b = _as_tensor(t), _as_tensor(a), _as_tensor(b)

    def backward(g):
        if t.requires_grad:
            t._accum(_unbroadcast(g * (a.data - b.data), t.data.shape))
        if a.requires_grad:
            a._accum(_unbroadcast(g * t.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * (1.0 - t.data), b.data.shape))

    return _make(t.data * a.data + (1.0 - t.data) * b.data, (t, a, b), backward)


def square(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accum(g * (2.0 * a.data))

    return _make(a.data * a.data, (a,), backward)


def absolute(a) -> Tensor:
    """|x|; subgradient at 0 is 0 (np.sign(0) == 0)."""
    a = _as_tensor(a)

    def backward(g):
        a._accum(g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise ContractError("concat: need at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(piece)

    return _make(data, tensors, backward)


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(gg, a.data.shape))

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def masked_sum(a, mask: np.ndarray) -> Tensor:
    """sum(a * mask) as a scalar; no gradient flows to the mask."""
    a = _as_tensor(a)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.data.shape:
        raise DimensionError(f"masked_sum: shapes {a.data.shape} and {mask.shape}")

    def backward(g):
        a._accum(g * mask)

    return _make(np.sum(a.data * mask), (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        dot = np.sum(g * y, axis=axis, keepdims=True)
        a._accum(y * (g - dot))

    return _make(y, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse
    y = np.exp(out)

    def backward(g):
        a._accum(g - y * np.sum(g, axis=axis, keepdims=True))

    return _make(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape

    def backward(g):
        a._accum(g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        pieces = np.moveaxis(g, axis, 0)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accum(piece)

    return _make(data, tensors, backward)


def select_time(a, idx: np.ndarray) -> Tensor:
    """a is time-major (T, B, ...); returns a[idx[b], b] per batch row b."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(idx.shape[0])
    if a.data.ndim < 2 or idx.shape[0] != a.data.shape[1]:
        raise DimensionError(f"select_time: shape {a.data.shape} with index of length {idx.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (idx, rows), g)
        a._accum(full)

    return _make(a.data[idx, rows], (a,), backward)


def take_per_row(a, idx: np.ndarray) -> Tensor:
    """a is (B, K); returns a[b, idx[b]] as a (B,) tensor."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, idx), g)
        a._accum(full)

    return _make(a.data[rows, idx], (a,), backward)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable tensor.

    Deterministic: the traversal order is a pure function of graph structure.
    Iterative so that 100-step recurrences do not hit the recursion limit.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss._accum(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

ParameterSet = dict  # name -> Tensor, insertion-ordered


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def zero_grads(params: ParameterSet) -> None:
    for p in params.values():
        p.zero_grad()


def snapshot(params: ParameterSet) -> dict:
    return {name: p.data.copy() for name, p in params.items()}


def restore(params: ParameterSet, snap: dict) -> None:
    for name, p in params.items():
        p.data = snap[name].copy()


def params_to_obj(params: ParameterSet) -> dict:
    return {
        name: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
        for name, p in params.items()
    }


def params_from_obj(obj: dict, requires_grad: bool = True) -> ParameterSet:
    params: ParameterSet = {}
    for name, rec in obj.items():
        data = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        params[name] = Tensor(data, requires_grad=requires_grad, name=name)
    return params


def save_params(params: ParameterSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_obj(params), fh)


def load_params(path, requires_grad: bool = True) -> ParameterSet:
    with open(path, encoding="utf-8") as fh:
        return params_from_obj(json.load(fh), requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParameterSet, state: AdamState) -> None:
    """One bias-corrected Adam update from the gradients stored on params."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(fn, params: ParameterSet, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    `fn()` must rebuild the scalar loss from the current parameter values and
    be deterministic (dropout disabled). Error per entry is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    zero_grads(params)
    loss = fn()
    backward(loss)
    if not np.isfinite(loss.data).all():
        raise NumericInstabilityError("loss is not finite")
    analytic = {name: p.grad.copy() for name, p in params.items()}
    worst = 0.0
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            a_flat = analytic[name].reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + eps
                f_plus = float(fn().data)
                flat[i] = keep - eps
                f_minus = float(fn().data)
                flat[i] = keep
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise NumericInstabilityError(f"non-finite loss while perturbing {name!r}")
                numeric = (f_plus - f_minus) / (2.0 * eps)
                err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
