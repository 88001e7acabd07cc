import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litematte import tensor as T
from litematte.losses import (LossWeights, cross_entropy, loss_grad, loss_l1_weighted, loss_sn,
                              loss_total, weighted_total)


def pixel(v):
    return np.full((1, 1, 1, 1), v)


def labels(seed=0, size=8):
    return np.random.default_rng(seed).integers(0, 3, (1, 1, size, size)).astype(np.float32)


def levels(value=0.0, size=8):
    return [np.full((1, 3, s, s), value, np.float32) for s in (size // 4, size // 2, size)]


def test_uniform_logits():
    t = labels()
    assert abs(cross_entropy(np.zeros((1, 3, 8, 8), np.float32), t) - math.log(3)) < 1e-6
    assert abs(loss_sn(levels(), t) - 3 * math.log(3)) < 3e-6
    assert abs(loss_sn(levels(), t) - 3.296) < 1e-3


def test_saturated_logits():
    t = labels()
    onehot = [np.moveaxis(np.eye(3, dtype=np.float32)[t[:, 0].astype(int)], -1, 1) * 60]
    assert cross_entropy(onehot[0], t) < 1e-12
    t_const = np.ones((1, 1, 8, 8), np.float32)
    lv = [np.zeros((1, 3, s, s), np.float32) for s in (2, 4, 8)]
    for lvl in lv:
        lvl[:, 1] = 60
    assert loss_sn(lv, t_const) < 1e-12


def test_ce_permutation_invariant():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
    t = labels(2, 4)
    perm = rng.permutation(16)
    pl = logits.reshape(1, 3, 16)[:, :, perm].reshape(logits.shape)
    pt = t.reshape(1, 1, 16)[:, :, perm].reshape(t.shape)
    assert abs(cross_entropy(pl, pt) - cross_entropy(logits, t)) < 1e-6


def test_loss_sn_errors():
    with pytest.raises(ValueError):
        loss_sn(levels()[:2], labels())
    with pytest.raises(T.ShapeError):
        cross_entropy(np.zeros((1, 3, 4, 4)), labels())


def test_l1_fixtures():
    assert abs(loss_l1_weighted(pixel(0.5), pixel(0.7)) - 0.2) < 1e-12
    assert abs(loss_l1_weighted(pixel(0.8), pixel(1.0)) - 0.02) < 1e-12
    assert abs(loss_l1_weighted(pixel(0.3), pixel(0.0)) - 0.03) < 1e-12
    g = np.random.default_rng(0).uniform(0, 1, (1, 1, 4, 4))
    assert loss_l1_weighted(g, g) == 0
    with pytest.raises(T.ShapeError):
        loss_l1_weighted(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


def test_grad_fixtures():
    g = np.random.default_rng(0).integers(0, 64, (1, 1, 8, 8)) / 128.0
    assert loss_grad(g + 0.125, g) == 0
    g = np.random.default_rng(1).uniform(0, 0.8, (1, 1, 8, 8))
    assert loss_grad(g + 0.1, g) < 1e-12
    ramp = np.tile(np.arange(6) * 0.1, (6, 1))[None, None]
    flat = np.zeros_like(ramp)
    # five of six columns carry the 0.1 slope difference
    assert abs(loss_grad(ramp, flat) - 0.1 * 5 / 6) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_alpha_losses_symmetry_and_permutation(seed):
    rng = np.random.default_rng(seed)
    a, g = rng.uniform(0, 1, (1, 1, 5, 5)), rng.uniform(0, 1, (1, 1, 5, 5))
    assert abs(loss_grad(a, g) - loss_grad(g, a)) < 1e-12
    assert loss_grad(a, g) >= 0 and loss_l1_weighted(a, g) >= 0
    perm = rng.permutation(25)
    pa, pg = (x.reshape(25)[perm].reshape(x.shape) for x in (a, g))
    assert abs(loss_l1_weighted(pa, pg) - loss_l1_weighted(a, g)) < 1e-12


def test_total():
    assert abs(weighted_total(3.296, 0.2, 0.1) - 4.346) < 1e-6
    t = labels()
    onehot = np.moveaxis(np.eye(3, dtype=np.float32)[t[:, 0].astype(int)], -1, 1) * 80
    seg = [T.avg_pool2(T.avg_pool2(onehot)), T.avg_pool2(onehot), onehot]
    g = np.random.default_rng(3).uniform(0, 1, (1, 1, 8, 8))
    perfect = loss_total([onehot] * 3, t, g, g)
    assert perfect.total < 1e-12 and perfect.normalization == "mean over pixels"
    parts = loss_total(seg, t, np.clip(g + 0.05, 0, 1), g)
    assert abs(parts.total - (parts.sn + 5 * parts.l1 + 0.5 * parts.grad)) < 1e-12
    bigger = loss_total(seg, t, np.clip(g + 0.2, 0, 1), g)
    assert bigger.l1 > parts.l1 and bigger.total > parts.total
    with pytest.raises(ValueError):
        LossWeights(-1, 1, 1)
