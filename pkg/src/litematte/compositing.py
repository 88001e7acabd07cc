"""Alpha compositing, trimap labels and dilated evaluation trimaps."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import tensor as T

UNKNOWN_VALUE = 0.5


def _check_unit(alpha, name):
    alpha = np.asarray(alpha, dtype=T.DTYPE)
    if np.any(alpha < 0) or np.any(alpha > 1) or not np.all(np.isfinite(alpha)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return alpha


def composite_image(fg, bg, alpha) -> np.ndarray:
    """I = alpha * F + (1 - alpha) * B, alpha broadcast over colour channels."""
    fg = np.asarray(fg, dtype=T.DTYPE)
    bg = np.asarray(bg, dtype=T.DTYPE)
    alpha = _check_unit(alpha, "alpha")
    if fg.shape != bg.shape or fg.ndim != 4 or alpha.shape != (fg.shape[0], 1) + fg.shape[2:]:
        raise T.ShapeError(f"composite: fg {fg.shape}, bg {bg.shape}, alpha {alpha.shape}")
    return alpha * fg + (T.DTYPE(1) - alpha) * bg


def make_tgt(alpha_gt) -> np.ndarray:
    """Labels 0 (alpha == 0), 1 (alpha == 1), 2 (strictly between)."""
    alpha_gt = _check_unit(alpha_gt, "alpha_gt")
    labels = np.full(alpha_gt.shape, 2, dtype=T.DTYPE)
    labels[alpha_gt == 0] = 0
    labels[alpha_gt == 1] = 1
    return labels


def trimap_from_alpha(alpha_gt, radius: int = 25) -> np.ndarray:
    """Trimap in {0, 0.5, 1}: the fractional region grown by a (2r+1)^2 square.

    Works on N x 1 x H x W or H x W input; dilation never crosses images.
    """
    if radius < 0:
        raise ValueError(f"radius={radius} must be non-negative")
    labels = make_tgt(alpha_gt)
    unknown = labels == 2
    if radius > 0:
        size = [1] * (unknown.ndim - 2) + [2 * radius + 1, 2 * radius + 1]
        unknown = ndimage.maximum_filter(unknown.astype(np.uint8), size=size,
                                         mode="constant", cval=0).astype(bool)
    out = np.where(labels == 1, T.DTYPE(1), T.DTYPE(0))
    out[unknown] = UNKNOWN_VALUE
    return out
