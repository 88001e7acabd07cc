"""Cross-level fusion: channel-gated deep features injected into a shallow level."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import tensor as T

REDUCTION = 4


def channel_attention(x, params: Mapping[str, np.ndarray]) -> np.ndarray:
    """Squeeze-and-excitation gate, N x C x 1 x 1 with values in (0, 1).

    ``params``: ``reduce.weight`` (C/r x C x 1 x 1), ``reduce.bias``,
    ``restore.weight`` (C x C/r x 1 x 1), ``restore.bias``.
    """
    x = np.asarray(x, dtype=T.DTYPE)
    if x.ndim != 4:
        raise T.ShapeError(f"channel_attention: expected NCHW, got {x.shape}")
    rw, ow = params["reduce.weight"], params["restore.weight"]
    if rw.shape[1] != x.shape[1] or ow.shape[1] != rw.shape[0] or ow.shape[0] != x.shape[1]:
        raise T.ShapeError(
            f"channel_attention: reduce {rw.shape}, restore {ow.shape}, input {x.shape}")
    pooled = x.mean(axis=(2, 3), dtype=np.float64).astype(T.DTYPE)
    # pooled vector as rows: N x C  @  C x C/r
    hidden = T.relu(T.add(T.matmul(pooled, rw[:, :, 0, 0].T), params["reduce.bias"]))
    gate = T.sigmoid(T.add(T.matmul(hidden, ow[:, :, 0, 0].T), params["restore.bias"]))
    return gate[:, :, None, None]


def cfm(en2, en4, params: Mapping[str, np.ndarray]) -> np.ndarray:
    """Gate ``en4`` per channel, upsample x4, project to en2's width, add to ``en2``.

    ``params`` holds the :func:`channel_attention` weights plus a bias-free
    ``proj.weight`` (C2 x C4 x 1 x 1), so a zero ``en4`` leaves ``en2`` intact.
    """
    en2 = np.asarray(en2, dtype=T.DTYPE)
    en4 = np.asarray(en4, dtype=T.DTYPE)
    if en2.ndim != 4 or en4.ndim != 4 or en2.shape[0] != en4.shape[0] \
            or en2.shape[2] != 4 * en4.shape[2] or en2.shape[3] != 4 * en4.shape[3]:
        raise T.ShapeError(f"cfm: en4 {en4.shape} must be en2 {en2.shape} at quarter resolution")
    gated = T.mul(en4, channel_attention(en4, params))
    up = T.upsample_bilinear2(T.upsample_bilinear2(gated))
    return T.add(en2, T.conv2d(up, params["proj.weight"]))


def cfm_shapes(c_shallow: int, c_deep: int) -> dict[str, tuple[int, ...]]:
    squeeze = max(c_deep // REDUCTION, 1)
    return {
        "reduce.weight": (squeeze, c_deep, 1, 1), "reduce.bias": (squeeze,),
        "restore.weight": (c_deep, squeeze, 1, 1), "restore.bias": (c_deep,),
        "proj.weight": (c_shallow, c_deep, 1, 1),
    }
