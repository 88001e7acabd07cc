"""Slow loop-based reference implementations.

These exist only to cross-check the vectorised kernels.  They accumulate
in float64, index sites explicitly and never reuse the fast code paths.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d(x, w, b=None, stride=1, pad=0):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for bi in range(n):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else float(b[oc])
                    for ic in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                y = i * stride + di - pad
                                xx = j * stride + dj - pad
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += x[bi, ic, y, xx] * w[oc, ic, di, dj]
                    out[bi, oc, i, j] = acc
    return out


def depthwise_conv2d(x, w, b=None, stride=1, pad=0):
    x = np.asarray(x, dtype=np.float64)
    n, c, h, wd = x.shape
    out = None
    for ch in range(c):
        part = conv2d(x[:, ch:ch + 1], w[ch:ch + 1], None if b is None else b[ch:ch + 1],
                      stride, pad)
        if out is None:
            out = np.zeros((n, c) + part.shape[2:])
        out[:, ch] = part[:, 0]
    return out


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    r, k = a.shape
    _, c = b.shape
    out = np.zeros((r, c))
    for i in range(r):
        for j in range(c):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def softmax_rows(m):
    m = np.asarray(m, dtype=np.float64)
    out = np.zeros_like(m)
    for i, row in enumerate(m):
        top = max(row)
        e = [math.exp(v - top) for v in row]
        s = sum(e)
        out[i] = [v / s for v in e]
    return out


def avg_pool2(x):
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for bi in range(n):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[bi, ch, i, j] = (x[bi, ch, 2 * i, 2 * j] + x[bi, ch, 2 * i, 2 * j + 1]
                                         + x[bi, ch, 2 * i + 1, 2 * j]
                                         + x[bi, ch, 2 * i + 1, 2 * j + 1]) / 4.0
    return out


def attention(q, k, v):
    """Per-pair exponential-weighted sum; rows of q attend over rows of k."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        logits = [sum(q[i, c] * k[j, c] for c in range(q.shape[1])) for j in range(k.shape[0])]
        top = max(logits)
        weights = [math.exp(s - top) for s in logits]
        total = sum(weights)
        for j, wt in enumerate(weights):
            out[i] += (wt / total) * v[j]
    return out


def _sites(x, b):
    """Return {(y, x): channel vector} for batch item ``b`` of an NCHW array."""
    return {(i, j): x[b, :, i, j] for i in range(x.shape[2]) for j in range(x.shape[3])}


def longrange(xq, xk, xv, k):
    """Attention within each stride-sqrt(k) lattice, enumerated by residues."""
    s = math.isqrt(k)
    n, _, h, w = xq.shape
    out = np.zeros((n, xv.shape[1], h, w))
    for b in range(n):
        for a in range(s):
            for c in range(s):
                sites = [(y, x) for y in range(h) for x in range(w) if y % s == a and x % s == c]
                q = np.array([xq[b, :, y, x] for y, x in sites])
                kk = np.array([xk[b, :, y, x] for y, x in sites])
                vv = np.array([xv[b, :, y, x] for y, x in sites])
                res = attention(q, kk, vv)
                for (y, x), row in zip(sites, res):
                    out[b, :, y, x] = row
    return out


def shortrange(ag, xk, xv, k):
    """Attention within each contiguous sqrt(k) x sqrt(k) block."""
    s = math.isqrt(k)
    n, _, h, w = ag.shape
    out = np.zeros((n, xv.shape[1], h, w))
    for b in range(n):
        for by in range(0, h, s):
            for bx in range(0, w, s):
                sites = [(y, x) for y in range(by, by + s) for x in range(bx, bx + s)]
                q = np.array([ag[b, :, y, x] for y, x in sites])
                kk = np.array([xk[b, :, y, x] for y, x in sites])
                vv = np.array([xv[b, :, y, x] for y, x in sites])
                res = attention(q, kk, vv)
                for (y, x), row in zip(sites, res):
                    out[b, :, y, x] = row
    return out


def pointwise(x, w, b):
    """1x1 convolution evaluated site by site."""
    x = np.asarray(x, dtype=np.float64)
    n, _, h, wd = x.shape
    out = np.zeros((n, w.shape[0], h, wd))
    for bi in range(n):
        for i in range(h):
            for j in range(wd):
                out[bi, :, i, j] = w[:, :, 0, 0].astype(np.float64) @ x[bi, :, i, j] + b
    return out


def ena(xq, xk, xv, u, weights, k):
    """Full efficient attention block: project, mask, long, short, project, add."""
    q = pointwise(xq, weights["q.weight"], weights["q.bias"])
    kk = pointwise(xk, weights["k.weight"], weights["k.bias"])
    vv = pointwise(xv, weights["v.weight"], weights["v.bias"])
    if u is not None:
        for b in range(q.shape[0]):
            for i in range(q.shape[2]):
                for j in range(q.shape[3]):
                    q[b, :, i, j] *= u[b, 0, i, j]
    ag = longrange(q, kk, vv, k)
    al = shortrange(ag, kk, vv, k)
    return np.asarray(xq, dtype=np.float64) + pointwise(al, weights["out.weight"], weights["out.bias"])


def dilate(mask, radius):
    """Square-structuring-element dilation by scanning every neighbourhood."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            for di in range(-radius, radius + 1):
                for dj in range(-radius, radius + 1):
                    y, x = i + di, j + dj
                    if 0 <= y < h and 0 <= x < w and mask[y, x]:
                        out[i, j] = True
                        break
                if out[i, j]:
                    break
    return out
