"""A small tensor-level reverse-mode gradient engine on numpy arrays.

Only the layers the tracker needs are provided: convolution, dense layers,
ReLU / tanh, an LSTM cell, structural ops and the two training losses
(masked L1 and advantage-weighted Gaussian log-density). Each op records a
closure that pushes its output gradient to its inputs; ``backward`` runs the
closures in reverse topological order.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Var:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, requires_grad: bool = False) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Var, ...] = ()
        self.backward_fn: Callable[[np.ndarray], None] | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Var(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)

    # arithmetic sugar used by the losses and tests
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _result(data: np.ndarray, parents: Sequence[Var], fn: Callable[[np.ndarray], None]) -> Var:
    out = Var(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def fn(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))
    return _result(a.data + b.data, (a, b), fn)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def fn(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, (a, b), fn)


def relu(x: Var) -> Var:
    mask = x.data > 0

    def fn(g):
        x.accumulate(g * mask)
    return _result(x.data * mask, (x,), fn)


def tanh(x: Var) -> Var:
    y = np.tanh(x.data)

    def fn(g):
        x.accumulate(g * (1.0 - y * y))
    return _result(y, (x,), fn)


def sigmoid(x: Var) -> Var:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def fn(g):
        x.accumulate(g * y * (1.0 - y))
    return _result(y, (x,), fn)


def square(x: Var) -> Var:
    def fn(g):
        x.accumulate(2.0 * g * x.data)
    return _result(x.data * x.data, (x,), fn)


def total(x: Var) -> Var:
    def fn(g):
        x.accumulate(np.broadcast_to(g, x.shape))
    return _result(np.asarray(x.data.sum()), (x,), fn)


# -- structural ----------------------------------------------------------------

def reshape(x: Var, shape: tuple[int, ...]) -> Var:
    def fn(g):
        x.accumulate(g.reshape(x.shape))
    return _result(x.data.reshape(shape), (x,), fn)


def concat(xs: Sequence[Var], axis: int = 0) -> Var:
    xs = [as_var(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def fn(g):
        for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if x.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                x.accumulate(g[tuple(idx)])
    return _result(np.concatenate([x.data for x in xs], axis=axis), xs, fn)


def take(x: Var, index) -> Var:
    """Basic (non-fancy) indexing."""
    def fn(g):
        full = np.zeros_like(x.data)
        full[index] = g
        x.accumulate(full)
    return _result(np.array(x.data[index]), (x,), fn)


# -- layers --------------------------------------------------------------------

def linear(x: Var, w: Var, b: Var | None = None) -> Var:
    """``x @ w + b`` for ``x`` of shape (D,) or (N, D) and ``w`` of shape (D, O)."""
    y = x.data @ w.data
    if b is not None:
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)

    def fn(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            if x.data.ndim == 1:
                w.accumulate(np.outer(x.data, g))
            else:
                w.accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b.accumulate(g if g.ndim == 1 else g.sum(axis=0))
    return _result(y, parents, fn)


def _conv_geometry(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def conv2d(x: Var, w: Var, b: Var | None, stride: int = 1, pad: int = 0) -> Var:
    """2-D cross-correlation. ``x``: (N, C, H, W); ``w``: (F, C, k, k); output (N, F, Ho, Wo)."""
    n, c, h, wd = x.shape
    f, c2, k, k2 = w.shape
    if c != c2 or k != k2:
        raise ValueError(f"conv shape mismatch: input {x.shape}, kernel {w.shape}")
    ho, wo = _conv_geometry(h, wd, k, stride, pad)
    if pad:
        xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
        xp[:, :, pad:pad + h, pad:pad + wd] = x.data
    else:
        xp = x.data
    # cols: (N, Ho, Wo, C, k, k)
    cols = np.empty((n, ho, wo, c, k, k))
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            cols[:, :, :, :, i, j] = patch.transpose(0, 2, 3, 1)
    cols2 = cols.reshape(n * ho * wo, c * k * k)
    wmat = w.data.reshape(f, c * k * k)
    y = cols2 @ wmat.T
    if b is not None:
        y = y + b.data
    out = y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    parents = (x, w) if b is None else (x, w, b)

    def fn(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        if w.requires_grad:
            w.accumulate((g2.T @ cols2).reshape(w.shape))
        if b is not None and b.requires_grad:
            b.accumulate(g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, k, k)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            x.accumulate(dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp)
    return _result(np.ascontiguousarray(out), parents, fn)


def lstm_cell(z: Var, c_prev: Var) -> tuple[Var, Var]:
    """Pointwise LSTM update from pre-activations ``z`` = [i, f, g, o] (4H,)."""
    hdim = c_prev.shape[-1]
    zi, zf, zg, zo = (z.data[..., k * hdim:(k + 1) * hdim] for k in range(4))
    i = 1.0 / (1.0 + np.exp(-zi))
    f = 1.0 / (1.0 + np.exp(-zf))
    gg = np.tanh(zg)
    o = 1.0 / (1.0 + np.exp(-zo))
    c = f * c_prev.data + i * gg
    tc = np.tanh(c)
    h = o * tc
    both = np.stack([h, c])

    def fn(g):
        gh, gc = g[0], g[1]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * gg * i * (1.0 - i),
            dc * c_prev.data * f * (1.0 - f),
            dc * i * (1.0 - gg * gg),
            gh * tc * o * (1.0 - o),
        ], axis=-1)
        if z.requires_grad:
            z.accumulate(dz)
        if c_prev.requires_grad:
            c_prev.accumulate(dc * f)
    hc = _result(both, (z, c_prev), fn)
    return take(hc, 0), take(hc, 1)


# -- losses --------------------------------------------------------------------

def masked_l1(pred: Var, target: np.ndarray, mask: float | np.ndarray) -> Var:
    """``sum(|target - pred| * mask)``; the subgradient at zero is taken as 0."""
    diff = pred.data - np.asarray(target, dtype=np.float64)
    m = np.broadcast_to(np.asarray(mask, dtype=np.float64), diff.shape)

    def fn(g):
        pred.accumulate(g * np.sign(diff) * m)
    return _result(np.asarray((np.abs(diff) * m).sum()), (pred,), fn)


LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def gaussian_log_density(mean: Var, sample: np.ndarray, sigma: np.ndarray) -> Var:
    """Diagonal Gaussian log-density of ``sample``; ``sigma`` is treated as a constant."""
    sample = np.asarray(sample, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    z = (sample - mean.data) / sigma
    value = float(np.sum(-0.5 * z * z - np.log(sigma) - LOG_SQRT_2PI))

    def fn(g):
        mean.accumulate(g * z / sigma)
    return _result(np.asarray(value), (mean,), fn)
