"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every op records its parents and a closure that routes the output gradient
back to them; ``Tensor.backward()`` walks the graph once in reverse
topological order. float64 throughout unless the caller feeds float32.
Gradients are accumulated in a fixed, graph-construction order, so repeated
runs are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(grad, shape):
    """Sum `grad` over the axes numpy broadcast to produce it from `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    # make numpy defer to the reflected operators instead of broadcasting
    # elementwise over this object
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        if type(data) is np.ndarray and data.dtype == np.float64:
            arr = data
        else:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def _accumulate(self, grad):
        # grads are never mutated in place, so aliasing the incoming array
        # (often another node's grad) is safe and saves a copy per edge
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar, got shape %s" % (self.shape,))
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def bw(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return _node(self.data + other.data, (self, other), bw)

    __radd__ = __add__

    def __neg__(self):
        def bw(g, a=self):
            if a.requires_grad:
                a._accumulate(-g)

        return _node(-self.data, (self,), bw)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def bw(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return _node(self.data * other.data, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)

        def bw(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return _node(self.data / other.data, (self, other), bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("only scalar exponents are supported")

        def bw(g, a=self, c=exponent):
            if a.requires_grad:
                a._accumulate(g * c * a.data ** (c - 1))

        return _node(self.data ** exponent, (self,), bw)

    def __matmul__(self, other):
        other = as_tensor(other)

        def bw(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

        return _node(self.data @ other.data, (self, other), bw)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    def __getitem__(self, idx):
        def bw(g, a=self, i=idx):
            if a.requires_grad:
                buf = np.zeros_like(a.data)
                np.add.at(buf, i, g)
                a._accumulate(buf)

        return _node(self.data[idx], (self,), bw)

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape

        def bw(g, a=self, s=old):
            if a.requires_grad:
                a._accumulate(g.reshape(s))

        return _node(self.data.reshape(shape), (self,), bw)

    def transpose(self, axes=None):
        axes = tuple(axes) if axes is not None else tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))

        def bw(g, a=self, p=inv):
            if a.requires_grad:
                a._accumulate(g.transpose(p))

        return _node(self.data.transpose(axes), (self,), bw)

    @property
    def T(self):
        return self.transpose()

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        def bw(g, a=self, ax=axis, kd=keepdims):
            if not a.requires_grad:
                return
            if ax is not None and not kd:
                g = np.expand_dims(g, ax)
            a._accumulate(np.broadcast_to(g, a.data.shape))

        return _node(self.data.sum(axis=axis, keepdims=keepdims), (self,), bw)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            n = int(np.prod([self.data.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise --------------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def bw(g, a=self, y=out_data):
            if a.requires_grad:
                a._accumulate(g * y)

        return _node(out_data, (self,), bw)

    def log(self):
        def bw(g, a=self):
            if a.requires_grad:
                a._accumulate(g / a.data)

        return _node(np.log(self.data), (self,), bw)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def bw(g, a=self, y=out_data):
            if a.requires_grad:
                a._accumulate(g * 0.5 / y)

        return _node(out_data, (self,), bw)

    def tanh(self):
        out_data = np.tanh(self.data)

        def bw(g, a=self, y=out_data):
            if a.requires_grad:
                a._accumulate(g * (1.0 - y * y))

        return _node(out_data, (self,), bw)

    def relu(self):
        _watch_kink(self.data)

        def bw(g, a=self):
            if a.requires_grad:
                a._accumulate(g * (a.data > 0))

        return _node(np.maximum(self.data, 0.0), (self,), bw)

    def clamp_min0(self):
        """relu without kink monitoring, for guards whose kink is masked out
        downstream (e.g. the zero diagonal of a distance matrix)."""

        def bw(g, a=self):
            if a.requires_grad:
                a._accumulate(g * (a.data > 0))

        return _node(np.maximum(self.data, 0.0), (self,), bw)

    def abs(self):
        _watch_kink(self.data)

        def bw(g, a=self):
            if a.requires_grad:
                a._accumulate(g * np.sign(a.data))

        return _node(np.abs(self.data), (self,), bw)

    def gelu(self):
        x = self.data
        phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))

        def bw(g, a=self, cdf=phi):
            if a.requires_grad:
                pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
                a._accumulate(g * (cdf + a.data * pdf))

        return _node(x * phi, (self,), bw)


def _node(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# Central differences cannot verify a subgradient at a relu/abs kink, so
# grad_check callers may watch how close a forward pass comes to one and
# discard ill-conditioned instances.
_KINK_WATCH = None


def _watch_kink(data):
    global _KINK_WATCH
    if _KINK_WATCH is not None and data.size:
        _KINK_WATCH = min(_KINK_WATCH, float(np.abs(data).min()))


class watch_kinks:
    """Context manager reporting the smallest |input| any relu/abs saw."""

    def __enter__(self):
        global _KINK_WATCH
        self._prev = _KINK_WATCH
        _KINK_WATCH = np.inf
        return self

    def __exit__(self, *exc):
        global _KINK_WATCH
        self.min_gap = _KINK_WATCH
        _KINK_WATCH = self._prev
        return False


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g, ts=tensors, sp=splits, ax=axis):
        for t, piece in zip(ts, np.split(g, sp, axis=ax)):
            if t.requires_grad:
                t._accumulate(piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def logsumexp(t, axis, keepdims=False):
    """log(sum(exp(t))) with the usual max-shift; gradient is exactly softmax."""
    shift = np.max(t.data, axis=axis, keepdims=True)
    out = (t - shift).exp().sum(axis=axis, keepdims=True).log() + shift
    if not keepdims:
        out = out.reshape(np.squeeze(out.data, axis=axis).shape)
    return out


def l2_normalize(t, eps=1e-12):
    """Row-normalize along the last axis; eps guards the zero vector.

    The norm is nonsmooth at the origin, so it is kink-watched; the tiny
    constant inside the sqrt keeps the backward pass finite there (value
    shift <= 5e-25 for unit-scale rows).
    """
    sumsq = (t * t).sum(axis=-1, keepdims=True)
    _watch_kink(sumsq.data)
    norm = (sumsq + 1e-24).sqrt()
    return t / (norm + eps)


def pairwise_distances(t):
    """Euclidean distance matrix of row vectors [n, d] -> [n, n].

    The diagonal is forced to exactly zero and carries no gradient (the
    sqrt at zero would otherwise produce NaNs). Off-diagonal coincident
    rows are a genuine nonsmooth point, so their squared distance is
    kink-watched.
    """
    n = t.data.shape[0]
    sq = (t * t).sum(axis=-1)
    gram = t @ t.T
    d2 = sq.reshape(n, 1) + sq.reshape(1, n) - 2.0 * gram
    eye = np.eye(n, dtype=t.data.dtype)
    if n > 1:
        _watch_kink(d2.data + 4.0 * np.abs(d2.data).max() * eye + eye)
    return (d2.clamp_min0() + eye).sqrt() * (1.0 - eye)


def zero_grads(params):
    for p in params:
        p.zero_grad()


def _central_diff(f, flat, i, eps):
    orig = flat[i]
    flat[i] = orig + eps
    f_plus = float(f().data)
    flat[i] = orig - eps
    f_minus = float(f().data)
    flat[i] = orig
    return (f_plus - f_minus) / (2.0 * eps)


def grad_check(f, params, eps=1e-5, recheck_above=1e-6):
    """Compare reverse-mode gradients of f() against central differences.

    `f` must rebuild its forward pass from `params` on every call and return
    a scalar Tensor. Per parameter, the error is the worst coordinate's
    |analytic - numeric| divided by the parameter's largest gradient
    magnitude (guarded at 1e-12); the max over parameters is returned.

    A coordinate whose error exceeds `recheck_above` is probed again at
    eps/2: a wrong analytic gradient reproduces (the two finite differences
    agree with each other, not with the analytic value) and is reported,
    while a self-inconsistent finite difference — a relu/abs kink inside
    the probe interval, or oracle truncation — is excluded, since central
    differences prove nothing there.
    """
    zero_grads(params)
    f().backward()
    analytic = [None if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ana in zip(params, analytic):
        if ana is None:
            ana = np.zeros_like(p.data)
        flat_ana = ana.ravel()
        flat = p.data.ravel()
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            numeric[i] = _central_diff(f, flat, i, eps)
        scale = max(np.abs(ana).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
        err = np.abs(flat_ana - numeric) / scale
        for i in np.flatnonzero(err > recheck_above):
            refined = _central_diff(f, flat, i, eps / 2.0)
            if abs(refined - numeric[i]) > 0.3 * abs(numeric[i] - flat_ana[i]):
                err[i] = 0.0  # the oracle contradicts itself at this coordinate
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
