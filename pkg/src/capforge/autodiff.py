"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough machinery for the fusion reference: every primitive records its
parents and a vector-Jacobian product, and backward() accumulates gradients
in reverse topological order. Single-threaded, 64-bit, no broadcasting rules
beyond what the fusion math needs.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "parents", "vjp", "grad")

    def __init__(
        self,
        value,
        parents: Sequence["Var"] = (),
        vjp: Optional[Callable[[Array], tuple[Array, ...]]] = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.vjp = vjp
        self.grad: Optional[Array] = None


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum grad down to the given shape, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Var, b: Var) -> Var:
    return Var(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def mul(a: Var, b: Var) -> Var:
    return Var(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def matmul(a: Var, b: Var) -> Var:
    def vjp(g: Array):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.value.shape), _unbroadcast(gb, b.value.shape)

    return Var(a.value @ b.value, (a, b), vjp)


def scale(a: Var, c: float) -> Var:
    return Var(a.value * c, (a,), lambda g: (g * c,))


def tanh(a: Var) -> Var:
    t = np.tanh(a.value)
    return Var(t, (a,), lambda g: (g * (1.0 - t * t),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Var) -> Var:
    """Gaussian error linear unit, tanh form (smooth everywhere)."""
    x = a.value
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def vjp(g: Array):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        return (g * dx,)

    return Var(out, (a,), vjp)


def reshape(a: Var, shape: tuple[int, ...]) -> Var:
    return Var(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.value.shape),))


def transpose(a: Var, axes: tuple[int, ...]) -> Var:
    inv = np.argsort(axes)
    return Var(a.value.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def softmax_last(a: Var) -> Var:
    """Softmax over the last axis."""
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g: Array):
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return Var(p, (a,), vjp)


def layer_norm(a: Var, scale_v: Var, shift_v: Var, eps: float = 1e-5) -> Var:
    """Row-wise (last axis) layer norm with learned scale and shift."""
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    out = xn * scale_v.value + shift_v.value

    def vjp(g: Array):
        n = x.shape[-1]
        gxn = g * scale_v.value
        gscale = _unbroadcast(g * xn, scale_v.value.shape)
        gshift = _unbroadcast(g, shift_v.value.shape)
        # d xn / d x through mean and variance
        gx = inv * (gxn - gxn.mean(axis=-1, keepdims=True) - xn * (gxn * xn).mean(axis=-1, keepdims=True))
        return gx, gscale, gshift

    return Var(out, (a, scale_v, shift_v), vjp)


def concat_rows(a: Var, b: Var) -> Var:
    na = a.value.shape[0]

    def vjp(g: Array):
        return g[:na], g[na:]

    return Var(np.concatenate([a.value, b.value], axis=0), (a, b), vjp)


def weighted_sum(a: Var, weights: Array) -> Var:
    w = np.asarray(weights, dtype=np.float64)
    return Var((a.value * w).sum(), (a,), lambda g: (g * w,))


class NP:
    """Value-only twins of the primitives above, for cheap re-evaluation.

    Same formulas on raw ndarrays; test-verified to agree with the Var path
    bit for bit.
    """

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def mul(a, b):
        return a * b

    @staticmethod
    def matmul(a, b):
        return a @ b

    @staticmethod
    def scale(a, c):
        return a * c

    @staticmethod
    def tanh(a):
        return np.tanh(a)

    @staticmethod
    def gelu(a):
        inner = _GELU_C * (a + 0.044715 * a**3)
        return 0.5 * a * (1.0 + np.tanh(inner))

    @staticmethod
    def reshape(a, shape):
        return a.reshape(shape)

    @staticmethod
    def transpose(a, axes):
        return a.transpose(axes)

    @staticmethod
    def softmax_last(a):
        shifted = a - a.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    @staticmethod
    def layer_norm(a, scale_v, shift_v, eps: float = 1e-5):
        mu = a.mean(axis=-1, keepdims=True)
        xc = a - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        return xc * inv * scale_v + shift_v

    @staticmethod
    def concat_rows(a, b):
        return np.concatenate([a, b], axis=0)

    @staticmethod
    def weighted_sum(a, weights):
        return (a * weights).sum()


def backward(root: Var) -> None:
    """Accumulate grads into every node reachable from root; root must be scalar."""
    if root.value.shape != ():
        raise ValueError("backward needs a scalar root")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        grads = node.vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            parent.grad = parent.grad + g if parent.grad is not None else np.array(g)
