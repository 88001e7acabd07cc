"""SAD / MSE / Grad / Conn matting metrics.

Grad uses first-derivative-of-Gaussian filters (sigma = 1.4) and reports the
summed squared difference of gradient magnitudes / 1000.  Conn sweeps
thresholds in steps of 0.1, finds for each pixel the last threshold at which
it still belongs to the largest common 4-connected foreground component, and
sums the differences of the resulting connectivity scores / 1000.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

GRAD_SIGMA = 1.4
CONN_STEP = 0.1


def _images(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        return a[None]
    if a.ndim == 4 and a.shape[1] == 1:
        return a[:, 0]
    raise ValueError(f"expected H x W or N x 1 x H x W alpha, got {a.shape}")


def _gauss(x, sigma):
    return np.exp(-x ** 2 / (2 * sigma ** 2)) / (sigma * np.sqrt(2 * np.pi))


def gaussian_gradient(im: np.ndarray, sigma: float = GRAD_SIGMA):
    eps = 1e-2
    half = int(np.ceil(sigma * np.sqrt(-2 * np.log(np.sqrt(2 * np.pi) * sigma * eps))))
    u = np.arange(-half, half + 1, dtype=np.float64)
    # hx[i, j] = g(u_i) * g'(u_j)
    hx = np.outer(_gauss(u, sigma), -u * _gauss(u, sigma) / sigma ** 2)
    hx /= np.sqrt((hx ** 2).sum())
    gx = ndimage.convolve(im, hx, mode="nearest")
    gy = ndimage.convolve(im, hx.T, mode="nearest")
    return gx, gy


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(mask)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == np.argmax(sizes)


def connectivity_map(pred: np.ndarray, gt: np.ndarray, step: float = CONN_STEP):
    steps = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    level = np.full(pred.shape, -1.0)
    for i in range(1, len(steps)):
        omega = _largest_component((pred >= steps[i]) & (gt >= steps[i]))
        level[(level == -1) & ~omega] = steps[i - 1]
    level[level == -1] = 1.0
    phi = lambda a: 1 - (a - level) * ((a - level) >= 0.15)
    return phi(pred), phi(gt)


def metric_suite(alpha_pred, alpha_gt, eval_mask=None) -> dict[str, float]:
    """All four metrics; ``eval_mask`` (bool, same shape) restricts the sums."""
    preds, gts = _images(alpha_pred), _images(alpha_gt)
    if preds.shape != gts.shape:
        raise ValueError(f"prediction {preds.shape} vs ground truth {gts.shape}")
    if np.any((preds < 0) | (preds > 1)) or np.any((gts < 0) | (gts > 1)):
        raise ValueError("alphas must lie in [0, 1]")
    masks = np.ones(preds.shape, dtype=bool) if eval_mask is None else \
        _images(eval_mask).astype(bool)
    if masks.shape != preds.shape:
        raise ValueError(f"mask {masks.shape} vs alpha {preds.shape}")

    diff = preds - gts
    count = masks.sum()
    sad = np.abs(diff)[masks].sum() / 1000.0
    mse = float((diff ** 2)[masks].sum() / count) if count else 0.0
    grad = conn = 0.0
    for p, g, m in zip(preds, gts, masks):
        px, py = gaussian_gradient(p)
        gx, gy = gaussian_gradient(g)
        amp_err = (np.hypot(px, py) - np.hypot(gx, gy)) ** 2
        grad += amp_err[m].sum() / 1000.0
        phi_p, phi_g = connectivity_map(p, g)
        conn += np.abs(phi_p - phi_g)[m].sum() / 1000.0
    return {"sad": float(sad), "mse": mse, "grad": float(grad), "conn": float(conn)}
