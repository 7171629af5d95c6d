"""Rank-4 tensors with tape-based reverse-mode differentiation.

Every tensor is ``(N, C, H, W)`` float64; scalars are ``(1, 1, 1, 1)``.
Operations that touch a tensor with ``requires_grad`` leave a :class:`Record`
behind, and :func:`backward` replays those records in reverse topological
order.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ContractError

_ids = itertools.count()
_state = threading.local()


def _grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Run operations without recording them."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@dataclass(eq=False)
class Record:
    kind: str
    inputs: tuple
    output_id: int
    backward: Callable[[np.ndarray], Sequence]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "record", "retain")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise ContractError(f"tensors are rank-4 (N, C, H, W); got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ContractError(f"all dimensions must be positive; got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = next(_ids)
        self.record = None
        self.retain = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def retain_grad(self):
        """Keep the gradient of a non-leaf tensor after backward."""
        self.retain = True
        return self

    def detach(self):
        return Tensor(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


class Parameter(Tensor):
    """A trainable leaf tensor carrying its Adam moments."""

    __slots__ = ("m", "v", "t")

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.t = 0


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def scalar(value):
    return Tensor(np.full((1, 1, 1, 1), float(value)))


def _result(kind, data, inputs, backward):
    out = Tensor(data)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.record = Record(kind, tuple(inputs), out.node_id, backward)
    return out


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ContractError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise ------------------------------------------------------------

def add(a, b):
    _same_shape(a, b, "add")
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    _same_shape(a, b, "sub")
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    _same_shape(a, b, "mul")
    x, y = a.data, b.data
    return _result("mul", x * y, (a, b), lambda g: (g * y, g * x))


def scale(a, c):
    c = float(c)
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def shift(a, c):
    """Add a Python scalar to every element."""
    c = float(c)
    return _result("shift", a.data + c, (a,), lambda g: (g,))


def add_bias(x, b):
    """Add a per-channel bias of shape (1, C, 1, 1)."""
    if b.shape != (1, x.shape[1], 1, 1):
        raise ContractError(f"bias shape {b.shape} does not match channels of {x.shape}")
    return _result("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=(0, 2, 3), keepdims=True)))


def abs_(a):
    s = np.sign(a.data)
    return _result("abs", np.abs(a.data), (a,), lambda g: (g * s,))


# -- channel plumbing -------------------------------------------------------

def concat_channels(parts):
    parts = list(parts)
    if not parts:
        raise ContractError("concat_channels: empty list")
    n, _, h, w = parts[0].shape
    for p in parts:
        if (p.shape[0], p.shape[2], p.shape[3]) != (n, h, w):
            raise ContractError(f"concat_channels: N/H/W mismatch {p.shape} vs {parts[0].shape}")
    if len(parts) == 1:
        return parts[0]
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result("concat", np.concatenate([p.data for p in parts], axis=1), parts, backward)


def slice_channels(x, start, stop):
    c = x.shape[1]
    if not 0 <= start < stop <= c:
        raise ContractError(f"slice_channels: [{start}, {stop}) out of range for {c} channels")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _result("slice", x.data[:, start:stop].copy(), (x,), backward)


# -- convolution, pooling, resampling ---------------------------------------

def _pair(v):
    if isinstance(v, int):
        return v, v
    a, b = v
    return int(a), int(b)


def conv2d(x, w, b=None, stride=1, pad=0):
    """Zero-padded cross-correlation; ``w`` is (Cout, Cin, kh, kw), ``b`` is (1, Cout, 1, 1)."""
    cout, cin, kh, kw = w.shape
    ph, pw = _pair(pad)
    n, c, h, wd = x.shape
    if c != cin:
        raise ContractError(f"conv2d: input has {c} channels, kernel expects {cin}")
    if stride < 1:
        raise ContractError("conv2d: stride must be >= 1")
    span_h, span_w = h + 2 * ph - kh, wd + 2 * pw - kw
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ContractError(
            f"conv2d: output size not integral for input {h}x{wd}, kernel {kh}x{kw}, "
            f"stride {stride}, pad ({ph},{pw})"
        )
    if b is not None and b.shape != (1, cout, 1, 1):
        raise ContractError(f"conv2d: bias shape {b.shape}, expected (1, {cout}, 1, 1)")
    bias = None if b is None else b.data
    out = kernels.conv2d_forward(x.data, w.data, bias, stride, ph, pw)
    xd, wdat = x.data, w.data

    def backward(g):
        gx, gw, gb = kernels.conv2d_backward(g, xd, wdat, stride, ph, pw)
        if b is None:
            return gx, gw
        return gx, gw, gb.reshape(1, cout, 1, 1)

    inputs = (x, w) if b is None else (x, w, b)
    return _result("conv2d", out, inputs, backward)


def adaptive_avg_pool2d(x, th, tw):
    """Mean over windows [floor(i*H/t), ceil((i+1)*H/t)); targets may exceed the input."""
    if th < 1 or tw < 1:
        raise ContractError(f"adaptive_avg_pool2d: targets must be positive, got ({th}, {tw})")
    h, w = x.shape[2:]
    if (th, tw) == (1, 1):
        out = x.data.mean(axis=(2, 3), keepdims=True)
    else:
        out = kernels.adaptive_pool_forward(x.data, th, tw)
    return _result(
        "adaptive_avg_pool2d",
        out,
        (x,),
        lambda g: (kernels.adaptive_pool_backward(g, h, w),),
    )


def upsample(x, th, tw):
    """Bilinear upsampling with half-pixel sample centres."""
    h, w = x.shape[2:]
    if th < h or tw < w:
        raise ContractError(f"upsample: target ({th}, {tw}) smaller than input ({h}, {w})")
    if (th, tw) == (h, w):
        return x
    return _result(
        "upsample",
        kernels.upsample_forward(x.data, th, tw),
        (x,),
        lambda g: (kernels.upsample_backward(g, h, w),),
    )


def resize(x, th, tw):
    """Bring ``x`` to (th, tw): area-pool any axis that is too large, then upsample."""
    h, w = x.shape[2:]
    if h > th or w > tw:
        x = adaptive_avg_pool2d(x, min(h, th), min(w, tw))
    return upsample(x, th, tw)


# -- activations and normalisation ------------------------------------------

def relu(x):
    mask = x.data > 0
    return _result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    factor = np.where(x.data > 0, 1.0, slope)
    return _result("leaky_relu", x.data * factor, (x,), lambda g: (g * factor,))


def tanh(x):
    y = np.tanh(x.data)
    return _result("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def softmax_channels(x):
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _result("softmax_channels", y, (x,), backward)


def instance_norm(x, gamma=None, beta=None, eps=1e-5):
    """Normalise each (n, c) plane to zero mean / unit variance, then scale and shift."""
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    c = x.shape[1]
    for p in (gamma, beta):
        if p is not None and p.shape != (1, c, 1, 1):
            raise ContractError(f"instance_norm: affine shape {p.shape}, expected (1, {c}, 1, 1)")
    gam = 1.0 if gamma is None else gamma.data
    y = xhat * gam + (0.0 if beta is None else beta.data)

    def backward(g):
        gh = g * gam
        gx = inv * (gh - gh.mean(axis=(2, 3), keepdims=True)
                    - xhat * (gh * xhat).mean(axis=(2, 3), keepdims=True))
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=(0, 2, 3), keepdims=True))
        if beta is not None:
            grads.append(g.sum(axis=(0, 2, 3), keepdims=True))
        return tuple(grads)

    inputs = (x,) + tuple(p for p in (gamma, beta) if p is not None)
    return _result("instance_norm", y, inputs, backward)


# -- reductions -------------------------------------------------------------

_SCALAR = (1, 1, 1, 1)


def sum_(x):
    return _result("sum", np.full(_SCALAR, x.data.sum()), (x,), lambda g: (np.full(x.shape, g.item()),))


def mean(x):
    k = x.data.size
    return _result("mean", np.full(_SCALAR, x.data.mean()), (x,), lambda g: (np.full(x.shape, g.item() / k),))


def l1_distance(a, b):
    """Sum of absolute differences."""
    _same_shape(a, b, "l1_distance")
    d = a.data - b.data
    s = np.sign(d)

    def backward(g):
        gs = g.item() * s
        return gs, -gs

    return _result("l1_distance", np.full(_SCALAR, np.abs(d).sum()), (a, b), backward)


def add_scalars(terms):
    """Sum of a list of scalar tensors."""
    terms = list(terms)
    for t in terms:
        if t.shape != _SCALAR:
            raise ContractError(f"add_scalars: expected scalars, got {t.shape}")
    total = np.full(_SCALAR, sum(t.data.item() for t in terms))
    return _result("add_scalars", total, terms, lambda g: tuple(g for _ in terms))


# -- backward ---------------------------------------------------------------

@dataclass
class Tape:
    """Records reachable from one output, in topological order."""

    records: list = field(default_factory=list)

    @classmethod
    def from_output(cls, out):
        order, seen = [], set()
        stack = [(out, False)]
        while stack:
            t, expanded = stack.pop()
            rec = t.record
            if rec is None:
                continue
            if expanded:
                order.append(rec)
                continue
            if id(rec) in seen:
                continue
            seen.add(id(rec))
            stack.append((t, True))
            for inp in rec.inputs:
                if inp.record is not None and id(inp.record) not in seen:
                    stack.append((inp, False))
        return cls(order)

    def __len__(self):
        return len(self.records)


def _accumulate(t, g):
    if g.shape != t.shape:
        raise ContractError(f"gradient shape {g.shape} does not match tensor {t.shape}")
    t.grad = g.copy() if t.grad is None else t.grad + g


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.shape != _SCALAR:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward: loss does not depend on any tensor that requires grad")
    tape = Tape.from_output(loss)
    pending = {loss.node_id: np.ones(_SCALAR)}
    if loss.retain:
        _accumulate(loss, pending[loss.node_id])
    for rec in reversed(tape.records):
        g = pending.pop(rec.output_id, None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.record is None:
                _accumulate(inp, gi)
                continue
            prev = pending.get(inp.node_id)
            pending[inp.node_id] = gi if prev is None else prev + gi
            if inp.retain:
                _accumulate(inp, gi)
    return tape


# -- optimiser --------------------------------------------------------------

def adam_step(params, lr, beta1=0.0, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update applied in place."""
    for p in params:
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {p!r} has no gradient")
    for p in params:
        g = p.grad
        p.t += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.t)
        v_hat = p.v / (1.0 - beta2 ** p.t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def zero_grad(params):
    for p in params:
        p.grad = None
