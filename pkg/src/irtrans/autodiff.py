"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the ops the transformer needs. Gradients are exact (closed-form
vector-Jacobian products), which is what makes the finite-difference
acceptance checks meaningful.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "parents", "requires_grad")

    def __init__(self, data, parents=(), requires_grad=False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        if not _grad_enabled:
            parents = ()
            requires_grad = False
        else:
            requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        self.parents = parents if requires_grad else ()
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        assert self.data.size == 1, "backward() needs a scalar"
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node.parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            g = node.grad
            for parent, vjp in node.parents:
                if not parent.requires_grad:
                    continue
                pg = vjp(g)
                if parent.grad is None:
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg

    def item(self) -> float:
        return float(self.data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def constant(data) -> Tensor:
    return Tensor(np.asarray(data))


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data + b.data, parents=(
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(a.data * b.data, parents=(
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ))


def scale(a: Tensor, s: float) -> Tensor:
    return Tensor(a.data * s, parents=((a, lambda g: g * s),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def grad_a(g):
        return _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)

    def grad_b(g):
        return _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)

    return Tensor(a.data @ b.data, parents=((a, grad_a), (b, grad_b)))


def gelu(x: Tensor) -> Tensor:
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    cdf = 0.5 * (1.0 + erf(x.data * inv_sqrt2))

    def grad(g):
        pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return g * (cdf + x.data * pdf)

    return Tensor(x.data * cdf, parents=((x, grad),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def grad_x(g):
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return (dxhat - m1 - xhat * m2) * inv

    def grad_gamma(g):
        return (g * xhat).reshape(-1, x.data.shape[-1]).sum(axis=0)

    def grad_beta(g):
        return g.reshape(-1, x.data.shape[-1]).sum(axis=0)

    return Tensor(xhat * gamma.data + beta.data, parents=(
        (x, grad_x), (gamma, grad_gamma), (beta, grad_beta)))


def softmax(x: Tensor, bias: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; bias is a non-differentiated additive
    mask (0 / large-negative) applied to the logits first."""
    z = x.data if bias is None else x.data + bias
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad(g):
        return (g - (g * y).sum(axis=-1, keepdims=True)) * y

    return Tensor(y, parents=((x, grad),))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    def grad(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, g.shape[-1]))
        return out

    return Tensor(table.data[ids], parents=((table, grad),))


def rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows from a 2-D tensor (scatter-add on the way back)."""
    def grad(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return out

    return Tensor(x.data[idx], parents=((x, grad),))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.data.shape
    return Tensor(x.data.reshape(shape),
                  parents=((x, lambda g: g.reshape(old)),))


def transpose(x: Tensor, axes: tuple) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return Tensor(x.data.transpose(axes),
                  parents=((x, lambda g: g.transpose(inverse)),))


def cross_entropy(logits: Tensor, targets: np.ndarray,
                  weights: np.ndarray) -> Tensor:
    """Sum of weighted token-level cross-entropy from raw logits.

    logits: (N, V); targets: (N,) int; weights: (N,) float (0 drops a
    position). Fused log-softmax keeps the gradient exact and cheap:
    d logits = w * (softmax - onehot).
    """
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    logp = z[np.arange(z.shape[0]), targets] - lse
    loss = -(weights * logp).sum()

    def grad(g):
        soft = np.exp(z - lse[:, None])
        soft[np.arange(z.shape[0]), targets] -= 1.0
        return g * soft * weights[:, None]

    return Tensor(np.asarray(loss), parents=((logits, grad),))
