"""Training objectives for the two stages.

Every loss is a mean over pixels (and batch items) so magnitudes do not
depend on resolution.  Values are returned as Python floats computed in
float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T

BOUNDARY_WEIGHT = 0.1


@dataclass(frozen=True)
class LossWeights:
    w_sn: float = 1.0
    w_l1: float = 5.0
    w_g: float = 0.5

    def __post_init__(self):
        if min(self.w_sn, self.w_l1, self.w_g) < 0:
            raise ValueError(f"loss weights must be non-negative: {self}")


@dataclass(frozen=True)
class LossBreakdown:
    sn: float
    l1: float
    grad: float
    total: float
    normalization: str = "mean over pixels"


def _upsample_to(logits: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    while logits.shape[2:] != size:
        if logits.shape[2] * 2 > size[0] or logits.shape[3] * 2 > size[1]:
            raise T.ShapeError(f"cannot upsample logits {logits.shape} to {size} by doubling")
        logits = T.upsample_bilinear2(logits)
    return logits


def cross_entropy(logits, t_gt) -> float:
    """Mean of -log softmax(logits)[true class] over all pixels."""
    logits = np.asarray(logits, dtype=T.DTYPE)
    t_gt = np.asarray(t_gt)
    if logits.ndim != 4 or t_gt.shape != (logits.shape[0], 1) + logits.shape[2:]:
        raise T.ShapeError(f"cross_entropy: logits {logits.shape}, labels {t_gt.shape}")
    logp = T.log_softmax(logits, axis=1)
    picked = np.take_along_axis(logp, t_gt.astype(np.intp), axis=1)
    return float(-picked.mean())


def loss_sn(logit_levels, t_gt) -> float:
    """Sum of per-level cross entropies, coarse levels upsampled to the label grid."""
    if len(logit_levels) != 3:
        raise ValueError(f"loss_sn expects 3 logit levels, got {len(logit_levels)}")
    t_gt = np.asarray(t_gt)
    size = t_gt.shape[2:]
    return sum(cross_entropy(_upsample_to(np.asarray(l, dtype=T.DTYPE), size), t_gt)
               for l in logit_levels)


def _pair(alpha, alpha_gt):
    a = np.asarray(alpha, dtype=np.float64)
    g = np.asarray(alpha_gt, dtype=np.float64)
    if a.shape != g.shape:
        raise T.ShapeError(f"alpha {a.shape} vs ground truth {g.shape}")
    return a, g


def loss_l1_weighted(alpha, alpha_gt) -> float:
    """Weight 1 where the ground truth is fractional, 0.1 where it is 0 or 1."""
    a, g = _pair(alpha, alpha_gt)
    w = np.where((g > 0) & (g < 1), 1.0, BOUNDARY_WEIGHT)
    return float((w * np.abs(a - g)).sum() / a.size)


def _forward_diff(a: np.ndarray, axis: int) -> np.ndarray:
    d = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    hi = list(src)
    lo = list(src)
    hi[axis] = slice(1, None)
    lo[axis] = slice(None, -1)
    d[tuple(lo)] = a[tuple(hi)] - a[tuple(lo)]
    return d


def loss_grad(alpha, alpha_gt) -> float:
    """Mean of |dx(a) - dx(g)| + |dy(a) - dy(g)|, forward differences, 0 at the far edge."""
    a, g = _pair(alpha, alpha_gt)
    dx = np.abs(_forward_diff(a, -1) - _forward_diff(g, -1))
    dy = np.abs(_forward_diff(a, -2) - _forward_diff(g, -2))
    return float((dx + dy).sum() / a.size)


def weighted_total(l_sn: float, l1: float, lg: float, weights: LossWeights = LossWeights()) -> float:
    return weights.w_sn * l_sn + weights.w_l1 * l1 + weights.w_g * lg


def loss_total(seg_levels, t_gt, alpha, alpha_gt,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    l_sn = loss_sn(seg_levels, t_gt)
    l1 = loss_l1_weighted(alpha, alpha_gt)
    lg = loss_grad(alpha, alpha_gt)
    return LossBreakdown(l_sn, l1, lg, weighted_total(l_sn, l1, lg, weights))
