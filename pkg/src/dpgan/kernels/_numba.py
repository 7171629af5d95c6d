"""Loop kernels compiled with numba; same contracts as the numpy path."""
import numpy as np
from numba import njit


@njit(cache=True)
def _window(i, size, target):
    start = (i * size) // target
    end = -((-(i + 1) * size) // target)
    return start, end


@njit(cache=True)
def adaptive_pool_forward(x, th, tw):
    n, c, h, w = x.shape
    out = np.empty((n, c, th, tw))
    for a in range(n):
        for ch in range(c):
            for i in range(th):
                r0, r1 = _window(i, h, th)
                for j in range(tw):
                    c0, c1 = _window(j, w, tw)
                    acc = 0.0
                    for r in range(r0, r1):
                        for s in range(c0, c1):
                            acc += x[a, ch, r, s]
                    out[a, ch, i, j] = acc / ((r1 - r0) * (c1 - c0))
    return out


@njit(cache=True)
def adaptive_pool_backward(g, h, w):
    n, c, th, tw = g.shape
    gx = np.zeros((n, c, h, w))
    for a in range(n):
        for ch in range(c):
            for i in range(th):
                r0, r1 = _window(i, h, th)
                for j in range(tw):
                    c0, c1 = _window(j, w, tw)
                    share = g[a, ch, i, j] / ((r1 - r0) * (c1 - c0))
                    for r in range(r0, r1):
                        for s in range(c0, c1):
                            gx[a, ch, r, s] += share
    return gx


@njit(cache=True)
def _taps(size, target):
    i0 = np.empty(target, dtype=np.int64)
    i1 = np.empty(target, dtype=np.int64)
    lam = np.empty(target)
    scale = size / target
    for i in range(target):
        src = (i + 0.5) * scale - 0.5
        if src < 0.0:
            src = 0.0
        k = min(int(np.floor(src)), size - 1)
        i0[i] = k
        i1[i] = min(k + 1, size - 1)
        lam[i] = src - k
    return i0, i1, lam


@njit(cache=True)
def upsample_forward(x, th, tw):
    n, c, h, w = x.shape
    y0, y1, ly = _taps(h, th)
    x0, x1, lx = _taps(w, tw)
    out = np.empty((n, c, th, tw))
    for a in range(n):
        for ch in range(c):
            for i in range(th):
                for j in range(tw):
                    top = (1.0 - lx[j]) * x[a, ch, y0[i], x0[j]] + lx[j] * x[a, ch, y0[i], x1[j]]
                    bot = (1.0 - lx[j]) * x[a, ch, y1[i], x0[j]] + lx[j] * x[a, ch, y1[i], x1[j]]
                    out[a, ch, i, j] = (1.0 - ly[i]) * top + ly[i] * bot
    return out


@njit(cache=True)
def upsample_backward(g, h, w):
    n, c, th, tw = g.shape
    y0, y1, ly = _taps(h, th)
    x0, x1, lx = _taps(w, tw)
    gx = np.zeros((n, c, h, w))
    for a in range(n):
        for ch in range(c):
            for i in range(th):
                for j in range(tw):
                    v = g[a, ch, i, j]
                    gx[a, ch, y0[i], x0[j]] += (1.0 - ly[i]) * (1.0 - lx[j]) * v
                    gx[a, ch, y0[i], x1[j]] += (1.0 - ly[i]) * lx[j] * v
                    gx[a, ch, y1[i], x0[j]] += ly[i] * (1.0 - lx[j]) * v
                    gx[a, ch, y1[i], x1[j]] += ly[i] * lx[j] * v
    return gx


@njit(cache=True)
def _im2col(x, kh, kw, stride, ph, pw, ho, wo):
    c, h, w = x.shape
    cols = np.zeros((c * kh * kw, ho * wo))
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ch * kh + i) * kw + j
                for p in range(ho):
                    r = p * stride + i - ph
                    if r < 0 or r >= h:
                        continue
                    for q in range(wo):
                        s = q * stride + j - pw
                        if s >= 0 and s < w:
                            cols[row, p * wo + q] = x[ch, r, s]
    return cols


@njit(cache=True)
def _col2im(cols, c, h, w, kh, kw, stride, ph, pw, ho, wo):
    gx = np.zeros((c, h, w))
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ch * kh + i) * kw + j
                for p in range(ho):
                    r = p * stride + i - ph
                    if r < 0 or r >= h:
                        continue
                    for q in range(wo):
                        s = q * stride + j - pw
                        if s >= 0 and s < w:
                            gx[ch, r, s] += cols[row, p * wo + q]
    return gx


@njit(cache=True)
def _cols(x, kh, kw, stride, ph, pw, ho, wo):
    if kh == 1 and kw == 1 and stride == 1 and ph == 0 and pw == 0:
        return np.ascontiguousarray(x).reshape(x.shape[0], ho * wo)
    return _im2col(x, kh, kw, stride, ph, pw, ho, wo)


@njit(cache=True)
def _conv_fwd(x, w2, b, kh, kw, stride, ph, pw, ho, wo):
    n = x.shape[0]
    cout = w2.shape[0]
    out = np.empty((n, cout, ho * wo))
    for a in range(n):
        y = np.dot(w2, _cols(x[a], kh, kw, stride, ph, pw, ho, wo))
        for o in range(cout):
            out[a, o] = y[o] + b[o]
    return out.reshape(n, cout, ho, wo)


@njit(cache=True)
def _conv_bwd(g, x, w2, kh, kw, stride, ph, pw):
    n, cin, h, w = x.shape
    cout = w2.shape[0]
    ho, wo = g.shape[2], g.shape[3]
    gx = np.empty_like(x)
    gw2 = np.zeros_like(w2)
    gb = np.zeros(cout)
    wt = np.ascontiguousarray(w2.T)
    for a in range(n):
        g2 = np.ascontiguousarray(g[a]).reshape(cout, ho * wo)
        cols = _cols(x[a], kh, kw, stride, ph, pw, ho, wo)
        gw2 += np.dot(g2, cols.T)
        for o in range(cout):
            gb[o] += g2[o].sum()
        gcols = np.dot(wt, g2)
        if kh == 1 and kw == 1 and stride == 1 and ph == 0 and pw == 0:
            gx[a] = gcols.reshape(cin, h, w)
        else:
            gx[a] = _col2im(gcols, cin, h, w, kh, kw, stride, ph, pw, ho, wo)
    return gx, gw2, gb


def conv2d_forward(x, w, b, stride, ph, pw):
    cout, cin, kh, kw = w.shape
    ho = (x.shape[2] + 2 * ph - kh) // stride + 1
    wo = (x.shape[3] + 2 * pw - kw) // stride + 1
    bias = np.zeros(cout) if b is None else np.ascontiguousarray(b.reshape(-1))
    w2 = np.ascontiguousarray(w.reshape(cout, -1))
    return _conv_fwd(np.ascontiguousarray(x), w2, bias, kh, kw, stride, ph, pw, ho, wo)


def conv2d_backward(g, x, w, stride, ph, pw):
    cout, cin, kh, kw = w.shape
    w2 = np.ascontiguousarray(w.reshape(cout, -1))
    gx, gw2, gb = _conv_bwd(np.ascontiguousarray(g), np.ascontiguousarray(x), w2, kh, kw, stride, ph, pw)
    return gx, gw2.reshape(w.shape), gb
