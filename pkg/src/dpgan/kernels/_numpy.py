"""Vectorised numpy kernels.

Pooling and bilinear resampling are separable, so both are expressed as a
pair of small dense matrices applied along H and W.
"""
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def pool_windows(size, target):
    """Return (start, end) arrays of the adaptive pooling windows along one axis."""
    i = np.arange(target)
    start = (i * size) // target
    end = -((-(i + 1) * size) // target)
    return start, end


@lru_cache(maxsize=256)
def pool_matrix(size, target):
    start, end = pool_windows(size, target)
    m = np.zeros((target, size))
    for i in range(target):
        m[i, start[i]:end[i]] = 1.0 / (end[i] - start[i])
    m.setflags(write=False)
    return m


@lru_cache(maxsize=256)
def resize_matrix(size, target):
    """Half-pixel bilinear interpolation weights, shape (target, size)."""
    m = np.zeros((target, size))
    scale = size / target
    for i in range(target):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), size - 1)
        i1 = min(i0 + 1, size - 1)
        lam = src - i0
        m[i, i0] += 1.0 - lam
        m[i, i1] += lam
    m.setflags(write=False)
    return m


def _separable(x, mh, mw):
    return np.einsum("ih,nchw,jw->ncij", mh, x, mw, optimize=True)


def adaptive_pool_forward(x, th, tw):
    _, _, h, w = x.shape
    return _separable(x, pool_matrix(h, th), pool_matrix(w, tw))


def adaptive_pool_backward(g, h, w):
    th, tw = g.shape[2:]
    return _separable(g, pool_matrix(h, th).T, pool_matrix(w, tw).T)


def upsample_forward(x, th, tw):
    _, _, h, w = x.shape
    return _separable(x, resize_matrix(h, th), resize_matrix(w, tw))


def upsample_backward(g, h, w):
    th, tw = g.shape[2:]
    return _separable(g, resize_matrix(h, th).T, resize_matrix(w, tw).T)


def _windows(x, kh, kw, stride, ph, pw):
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return xp.shape, win[:, :, ::stride, ::stride]


def _pointwise(w, stride, ph, pw):
    return w.shape[2:] == (1, 1) and stride == 1 and ph == 0 and pw == 0


def conv2d_forward(x, w, b, stride, ph, pw):
    if _pointwise(w, stride, ph, pw):
        out = np.einsum("oc,nchw->nohw", w[:, :, 0, 0], x, optimize=True)
        if b is not None:
            out = out + b.reshape(1, -1, 1, 1)
        return out
    _, win = _windows(x, w.shape[2], w.shape[3], stride, ph, pw)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, Cout)
    out = out.transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out)


def conv2d_backward(g, x, w, stride, ph, pw):
    cout, cin, kh, kw = w.shape
    n, _, ho, wo = g.shape
    if _pointwise(w, stride, ph, pw):
        gx = np.einsum("oc,nohw->nchw", w[:, :, 0, 0], g, optimize=True)
        gw = np.einsum("nohw,nchw->oc", g, x, optimize=True).reshape(w.shape)
        return gx, gw, g.sum(axis=(0, 2, 3))
    padded_shape, win = _windows(x, kh, kw, stride, ph, pw)
    gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
    gb = g.sum(axis=(0, 2, 3))
    gcols = np.tensordot(g, w, axes=([1], [0]))  # (N, Ho, Wo, Cin, kh, kw)
    gxp = np.zeros(padded_shape)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += (
                gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    hp, wp = padded_shape[2:]
    gx = gxp[:, :, ph:hp - ph, pw:wp - pw]
    return np.ascontiguousarray(gx), gw, gb
