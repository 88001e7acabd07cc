"""Dense non-local attention and the efficient long/short-range variant.

Feature maps are NCHW.  ``sample_partition`` gathers the k interleaved
lattices {(y, x): y = a mod s, x = b mod s} with s = sqrt(k); the short-range
stage instead cuts the map into contiguous s x s tiles.  Both are pure
reshapes, so partition/merge round-trips are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import tensor as T


def _side(k: int) -> int:
    if k < 1:
        raise ValueError(f"k={k} must be positive")
    s = math.isqrt(k)
    if s * s != k:
        raise ValueError(f"k={k} is not a perfect square")
    return s


def _check_grid(h: int, w: int, k: int) -> int:
    s = _side(k)
    if h % s or w % s:
        raise ValueError(f"sqrt(k)={s} does not divide spatial extents {h}x{w}")
    return s


def nonlocal_dense(q, k, v) -> np.ndarray:
    """softmax(q k^T) v over the site axis; accepts n x C or batched ... x n x C."""
    q = np.asarray(q, dtype=T.DTYPE)
    k = np.asarray(k, dtype=T.DTYPE)
    v = np.asarray(v, dtype=T.DTYPE)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise T.ShapeError(f"nonlocal_dense: q {q.shape}, k {k.shape}, v {v.shape}")
    logits = T.matmul(q, np.swapaxes(k, -1, -2))
    return T.matmul(T.softmax_rows(logits), v)


def mask_query(x_q, u) -> np.ndarray:
    x_q = np.asarray(x_q, dtype=T.DTYPE)
    u = np.asarray(u, dtype=T.DTYPE)
    if u.ndim != 4 or u.shape[1] != 1 or u.shape[0] != x_q.shape[0] or u.shape[2:] != x_q.shape[2:]:
        raise T.ShapeError(f"mask_query: mask {u.shape} does not match query {x_q.shape}")
    return T.mul(x_q, u)


# site permutations ------------------------------------------------------

def _to_lattices(x: np.ndarray, s: int) -> np.ndarray:
    """N x C x H x W -> N x k x (n/k) x C, lattice (a, b) at index a*s + b."""
    n, c, h, w = x.shape
    r = x.reshape(n, c, h // s, s, w // s, s)
    r = r.transpose(0, 3, 5, 2, 4, 1)  # N, a, b, Y, X, C
    return np.ascontiguousarray(r.reshape(n, s * s, (h // s) * (w // s), c))


def _from_lattices(g: np.ndarray, s: int, h: int, w: int) -> np.ndarray:
    n, _, _, c = g.shape
    r = g.reshape(n, s, s, h // s, w // s, c).transpose(0, 5, 3, 1, 4, 2)
    return np.ascontiguousarray(r.reshape(n, c, h, w))


def _to_tiles(x: np.ndarray, s: int) -> np.ndarray:
    """N x C x H x W -> N x (n/k) x k x C, tiles in row-major tile order."""
    n, c, h, w = x.shape
    r = x.reshape(n, c, h // s, s, w // s, s)
    r = r.transpose(0, 2, 4, 3, 5, 1)  # N, Y, X, a, b, C
    return np.ascontiguousarray(r.reshape(n, (h // s) * (w // s), s * s, c))


def _from_tiles(g: np.ndarray, s: int, h: int, w: int) -> np.ndarray:
    n, _, _, c = g.shape
    r = g.reshape(n, h // s, w // s, s, s, c).transpose(0, 5, 1, 3, 2, 4)
    return np.ascontiguousarray(r.reshape(n, c, h, w))


def sample_partition(x, k: int) -> list[np.ndarray]:
    """Split sites into k stride-sqrt(k) lattices.

    Returns k arrays of shape N x (n/k) x C.  Subset ``a*sqrt(k) + b`` holds
    sites with y = a and x = b modulo sqrt(k), in row-major order of
    (y // sqrt(k), x // sqrt(k)).
    """
    x = np.asarray(x, dtype=T.DTYPE)
    if x.ndim != 4:
        raise T.ShapeError(f"sample_partition: expected NCHW, got {x.shape}")
    s = _check_grid(x.shape[2], x.shape[3], k)
    g = _to_lattices(x, s)
    return [g[:, i] for i in range(k)]


def merge_partition(subsets, k: int, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`sample_partition`."""
    s = _check_grid(h, w, k)
    if len(subsets) != k:
        raise T.ShapeError(f"merge_partition: {len(subsets)} subsets for k={k}")
    shapes = {np.shape(p) for p in subsets}
    if len(shapes) != 1:
        raise T.ShapeError(f"merge_partition: subset extents differ: {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 3 or shape[1] * k != h * w:
        raise T.ShapeError(f"merge_partition: subset shape {shape} inconsistent with {h}x{w}, k={k}")
    g = np.stack([np.asarray(p, dtype=T.DTYPE) for p in subsets], axis=1)
    return _from_lattices(g, s, h, w)


def _check_qkv(x_q, x_k, x_v):
    x_q, x_k, x_v = (np.asarray(a, dtype=T.DTYPE) for a in (x_q, x_k, x_v))
    for name, a in (("query", x_q), ("key", x_k), ("value", x_v)):
        if a.ndim != 4:
            raise T.ShapeError(f"{name}: expected NCHW, got {a.shape}")
    if not (x_q.shape[0] == x_k.shape[0] == x_v.shape[0]) or \
            not (x_q.shape[2:] == x_k.shape[2:] == x_v.shape[2:]) or x_q.shape[1] != x_k.shape[1]:
        raise T.ShapeError(f"attention: q {x_q.shape}, k {x_k.shape}, v {x_v.shape}")
    return x_q, x_k, x_v


def longrange_attention(x_q, x_k, x_v, k: int) -> np.ndarray:
    """Dense attention inside each of the k interleaved lattices."""
    x_q, x_k, x_v = _check_qkv(x_q, x_k, x_v)
    h, w = x_q.shape[2:]
    s = _check_grid(h, w, k)
    a = nonlocal_dense(_to_lattices(x_q, s), _to_lattices(x_k, s), _to_lattices(x_v, s))
    return _from_lattices(a, s, h, w)


def shortrange_attention(a_g, x_k, x_v, k: int) -> np.ndarray:
    """Dense attention inside each contiguous sqrt(k) x sqrt(k) tile."""
    a_g, x_k, x_v = _check_qkv(a_g, x_k, x_v)
    h, w = a_g.shape[2:]
    s = _check_grid(h, w, k)
    a = nonlocal_dense(_to_tiles(a_g, s), _to_tiles(x_k, s), _to_tiles(x_v, s))
    return _from_tiles(a, s, h, w)


@dataclass(frozen=True)
class EnaConfig:
    """Group count plus the four 1x1 projections (query, key, value, output).

    ``weights`` maps ``q.weight``, ``q.bias``, ``k.*``, ``v.*`` and ``out.*``
    to arrays; the embedded width is the output extent of ``q.weight``.
    """

    k_groups: int
    weights: Mapping[str, np.ndarray]

    @property
    def embed_channels(self) -> int:
        return self.weights["q.weight"].shape[0]

    def validate(self, h: int, w: int) -> None:
        _check_grid(h, w, self.k_groups)
        c = self.embed_channels
        for name in ("k.weight", "v.weight"):
            if self.weights[name].shape[0] != c:
                raise T.ShapeError(f"{name}: {self.weights[name].shape} vs embedded width {c}")
        if self.weights["out.weight"].shape[1] != c:
            raise T.ShapeError(f"out.weight: {self.weights['out.weight'].shape} vs embedded width {c}")


def _project(x, weights, name):
    return T.conv2d(x, weights[f"{name}.weight"], weights[f"{name}.bias"])


def ena(x_q, x_k, x_v, u: Optional[np.ndarray], config: EnaConfig) -> np.ndarray:
    """Efficient non-local attention fused residually into ``x_q``.

    Queries come from the encoder/decoder feature and are masked by the
    unknown map ``u`` after projection; keys and values come from the image
    features.  The short-range stage queries with the long-range output and
    re-reads keys/values from the projected image features.
    """
    x_q = np.asarray(x_q, dtype=T.DTYPE)
    config.validate(x_q.shape[2], x_q.shape[3])
    wts = config.weights
    q = _project(x_q, wts, "q")
    if u is not None:
        q = mask_query(q, u)
    kk = _project(x_k, wts, "k")
    vv = _project(x_v, wts, "v")
    a_g = longrange_attention(q, kk, vv, config.k_groups)
    a_l = shortrange_attention(a_g, kk, vv, config.k_groups)
    return T.add(x_q, _project(a_l, wts, "out"))


def nonlocal_block(x_q, x_k, x_v, u: Optional[np.ndarray], weights: Mapping[str, np.ndarray],
                   eps: float = 1e-5) -> np.ndarray:
    """Whole-image embedded-Gaussian non-local block (dense baseline).

    Same projections as :func:`ena`, attention over all sites at once, and a
    batch norm on the output projection before the residual add.
    """
    x_q = np.asarray(x_q, dtype=T.DTYPE)
    q = _project(x_q, weights, "q")
    if u is not None:
        q = mask_query(q, u)
    kk = _project(x_k, weights, "k")
    vv = _project(x_v, weights, "v")
    n, c, h, w = q.shape
    flat = lambda a: a.reshape(n, a.shape[1], h * w).transpose(0, 2, 1)
    a = nonlocal_dense(flat(q), flat(kk), flat(vv))
    a = np.ascontiguousarray(a.transpose(0, 2, 1).reshape(n, vv.shape[1], h, w))
    z = _project(a, weights, "out")
    z = T.batchnorm_infer(z, weights["bn.gamma"], weights["bn.beta"],
                          weights["bn.mean"], weights["bn.var"], eps)
    return T.add(x_q, z)


def attention_shapes(channels: int, dense: bool = False) -> dict[str, tuple[int, ...]]:
    """Projection parameter shapes; embedded width is half the feature width."""
    embed = max(channels // 2, 1)
    shapes = {
        "q.weight": (embed, channels, 1, 1), "q.bias": (embed,),
        "k.weight": (embed, channels, 1, 1), "k.bias": (embed,),
        "v.weight": (embed, channels, 1, 1), "v.bias": (embed,),
        "out.weight": (channels, embed, 1, 1), "out.bias": (channels,),
    }
    if dense:
        for p in ("gamma", "beta", "mean", "var"):
            shapes[f"bn.{p}"] = (channels,)
    return shapes
