import numpy as np
import pytest

from litematte import tensor as T
from litematte.fusion import cfm, cfm_shapes, channel_attention


def params(rng, c2, c4):
    return {n: rng.uniform(-1, 1, s).astype(np.float32) for n, s in cfm_shapes(c2, c4).items()}


def test_zero_restore_gives_half():
    rng = np.random.default_rng(0)
    p = params(rng, 4, 8)
    p["restore.weight"][:] = 0
    p["restore.bias"][:] = 0
    gate = channel_attention(rng.standard_normal((2, 8, 4, 4)), p)
    assert gate.shape == (2, 8, 1, 1)
    np.testing.assert_array_equal(gate, 0.5)


def test_gate_range_and_oracle():
    rng = np.random.default_rng(1)
    p = params(rng, 4, 8)
    x = (rng.standard_normal((3, 8, 4, 4)) * 10).astype(np.float32)
    gate = channel_attention(x, p)
    assert np.all((gate > 0) & (gate < 1))
    pooled = x.mean(axis=(2, 3))
    hidden = np.maximum(pooled @ p["reduce.weight"][:, :, 0, 0].T + p["reduce.bias"], 0)
    want = 1 / (1 + np.exp(-(hidden @ p["restore.weight"][:, :, 0, 0].T + p["restore.bias"])))
    np.testing.assert_allclose(gate[:, :, 0, 0], want, atol=1e-6)


def test_gate_ignores_spatial_order():
    rng = np.random.default_rng(2)
    p = params(rng, 4, 8)
    x = rng.standard_normal((1, 8, 4, 4)).astype(np.float32)
    perm = rng.permutation(16)
    shuffled = x.reshape(1, 8, 16)[:, :, perm].reshape(x.shape)
    np.testing.assert_allclose(channel_attention(shuffled, p), channel_attention(x, p), atol=1e-6)


def test_cfm_identities():
    rng = np.random.default_rng(3)
    p = params(rng, 4, 8)
    en2 = rng.standard_normal((1, 4, 16, 16)).astype(np.float32)
    en4 = rng.standard_normal((1, 8, 4, 4)).astype(np.float32)
    out = cfm(en2, en4, p)
    assert out.shape == en2.shape
    np.testing.assert_array_equal(cfm(en2, np.zeros_like(en4), p), en2)
    d = rng.standard_normal(en2.shape).astype(np.float32)
    np.testing.assert_allclose(cfm(en2 + d, en4, p), out + d, atol=1e-6)


def test_cfm_saturated_gate():
    rng = np.random.default_rng(4)
    p = params(rng, 4, 8)
    p["restore.weight"][:] = 0
    p["restore.bias"][:] = -60
    en2 = rng.standard_normal((1, 4, 16, 16)).astype(np.float32)
    out = cfm(en2, rng.standard_normal((1, 8, 4, 4)).astype(np.float32), p)
    np.testing.assert_allclose(out, en2, atol=1e-3)


def test_cfm_shape_errors():
    rng = np.random.default_rng(5)
    with pytest.raises(T.ShapeError):
        cfm(np.zeros((1, 4, 16, 16)), np.zeros((1, 8, 8, 8)), params(rng, 4, 8))
    with pytest.raises(T.ShapeError):
        channel_attention(np.zeros((1, 6, 4, 4)), params(rng, 4, 8))
