"""Dense float32 kernels over NCHW arrays.

Every function here is pure: inputs are never mutated and the result is a
fresh ``np.float32`` array.  Tensors are plain NumPy arrays of rank <= 4.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Coerce ``x`` to a contiguous float32 array and check the invariants."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim > 4:
        raise ShapeError(f"{name}: rank {arr.ndim} exceeds 4")
    if arr.ndim and min(arr.shape) < 1:
        raise ShapeError(f"{name}: empty extent in shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite values")
    return arr


def _require_nchw(x: np.ndarray, name: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected NCHW, got shape {x.shape}")


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation of an NCHW input with an OIHW kernel, zero padded."""
    x = np.asarray(x, dtype=DTYPE)
    weight = np.asarray(weight, dtype=DTYPE)
    _require_nchw(x, "input")
    if weight.ndim != 4 or weight.shape[1] != x.shape[1]:
        raise ShapeError(
            f"conv2d: weight {weight.shape} does not match input {x.shape}")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: stride={stride} pad={pad}")
    out_c, _, kh, kw = weight.shape
    if x.shape[2] + 2 * pad < kh or x.shape[3] + 2 * pad < kw:
        raise ShapeError(
            f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")

    if kh == 1 and kw == 1 and pad == 0:
        xs = x[:, :, ::stride, ::stride]
        out = np.einsum("oi,nihw->nohw", weight[:, :, 0, 0], xs, optimize=True)
    else:
        win = sliding_window_view(_pad(x, pad), (kh, kw), axis=(2, 3))
        win = win[:, :, ::stride, ::stride]
        # (N, C, Ho, Wo, kh, kw) x (O, C, kh, kw) -> (N, Ho, Wo, O)
        out = np.tensordot(win, weight, axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out, dtype=DTYPE)
    if bias is not None:
        bias = np.asarray(bias, dtype=DTYPE).reshape(-1)
        if bias.shape[0] != out_c:
            raise ShapeError(f"conv2d: bias {bias.shape} for {out_c} outputs")
        out += bias[None, :, None, None]
    return out


def depthwise_conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Per-channel convolution; ``weight`` is C x 1 x kH x kW."""
    x = np.asarray(x, dtype=DTYPE)
    weight = np.asarray(weight, dtype=DTYPE)
    _require_nchw(x, "input")
    if weight.ndim != 4 or weight.shape[0] != x.shape[1] or weight.shape[1] != 1:
        raise ShapeError(
            f"depthwise_conv2d: weight {weight.shape} does not match input {x.shape}")
    if stride < 1 or pad < 0:
        raise ValueError(f"depthwise_conv2d: stride={stride} pad={pad}")
    _, _, kh, kw = weight.shape
    if x.shape[2] + 2 * pad < kh or x.shape[3] + 2 * pad < kw:
        raise ShapeError(
            f"depthwise_conv2d: kernel {weight.shape} larger than padded input {x.shape}")
    win = sliding_window_view(_pad(x, pad), (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    out = np.einsum("nchwij,cij->nchw", win, weight[:, 0], optimize=True)
    out = np.ascontiguousarray(out, dtype=DTYPE)
    if bias is not None:
        bias = np.asarray(bias, dtype=DTYPE).reshape(-1)
        if bias.shape[0] != x.shape[1]:
            raise ShapeError(f"depthwise_conv2d: bias {bias.shape} for {x.shape[1]} channels")
        out += bias[None, :, None, None]
    return out


def avg_pool2(x) -> np.ndarray:
    """Mean over non-overlapping 2x2 blocks."""
    x = np.asarray(x, dtype=DTYPE)
    _require_nchw(x, "input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2: odd spatial extent in {x.shape}")
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2)
    # fixed summation order keeps results reproducible
    s = (blocks[:, :, :, 0, :, 0] + blocks[:, :, :, 0, :, 1]) + \
        (blocks[:, :, :, 1, :, 0] + blocks[:, :, :, 1, :, 1])
    return np.ascontiguousarray(s * DTYPE(0.25), dtype=DTYPE)


def _upsample_axis(x: np.ndarray, axis: int) -> np.ndarray:
    size = x.shape[axis]
    src = (np.arange(2 * size, dtype=np.float64) + 0.5) / 2.0 - 0.5
    src = np.clip(src, 0.0, None)
    lo = np.floor(src).astype(np.intp)
    lo = np.minimum(lo, size - 1)
    hi = np.minimum(lo + 1, size - 1)
    frac = (src - lo).astype(DTYPE)
    shape = [1] * x.ndim
    shape[axis] = 2 * size
    frac = frac.reshape(shape)
    a = np.take(x, lo, axis=axis)
    b = np.take(x, hi, axis=axis)
    return a + (b - a) * frac


def upsample_bilinear2(x) -> np.ndarray:
    """Double H and W with half-pixel-centred (align_corners=False) bilinear weights."""
    x = np.asarray(x, dtype=DTYPE)
    _require_nchw(x, "input")
    out = _upsample_axis(_upsample_axis(x, 2), 3)
    return np.ascontiguousarray(out, dtype=DTYPE)


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax over the last axis, max-subtracted."""
    m = np.asarray(m, dtype=DTYPE)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(DTYPE, copy=False)


def log_softmax(m, axis: int = -1) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def matmul(a, b) -> np.ndarray:
    """Matrix product; leading batch axes broadcast like ``np.matmul``."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents disagree for {a.shape} and {b.shape}")
    return np.matmul(a, b)


def _binary_operands(a, b, op: str):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        try:
            target = np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            target = None
        if target != a.shape:
            raise ShapeError(f"{op}: operand {b.shape} not broadcastable onto {a.shape}")
    return a, b


def add(a, b) -> np.ndarray:
    a, b = _binary_operands(a, b, "add")
    return a + b


def mul(a, b) -> np.ndarray:
    a, b = _binary_operands(a, b, "mul")
    return a * b


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=DTYPE), DTYPE(0))


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def scale(x, factor: float) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE) * DTYPE(factor)


def clamp01(x) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=DTYPE), 0.0, 1.0)


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "relu": relu,
    "sigmoid": sigmoid,
    "scale": scale,
    "clamp01": clamp01,
}


def elementwise(kind: str, *operands) -> np.ndarray:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {kind!r}") from None
    return fn(*operands)


def batchnorm_infer(x, gamma, beta, mean, var, eps: float = 1e-5) -> np.ndarray:
    """Inference-mode batch normalisation with per-channel statistics."""
    x = np.asarray(x, dtype=DTYPE)
    _require_nchw(x, "input")
    c = x.shape[1]
    stats = [np.asarray(p, dtype=DTYPE).reshape(-1) for p in (gamma, beta, mean, var)]
    for label, p in zip(("gamma", "beta", "mean", "var"), stats):
        if p.shape[0] != c:
            raise ShapeError(f"batchnorm_infer: {label} has {p.shape[0]} entries, input has {c} channels")
    gamma, beta, mean, var = stats
    if np.any(var < 0):
        raise ValueError("batchnorm_infer: negative variance")
    inv = gamma / np.sqrt(var + DTYPE(eps))
    shift = beta - mean * inv
    return x * inv[None, :, None, None] + shift[None, :, None, None]
