import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litematte import tensor as T
from litematte.octave import (OctConvWeights, OctFeature, block_shapes, ocblock, ocblock_general,
                              ocblock_merge, ocblock_split, octconv, split_channels)


def rand(rng, *shape):
    return rng.standard_normal(shape).astype(np.float32)


def random_params(shapes, rng, zero=False):
    params = {}
    for name, shape in shapes.items():
        if name.endswith(".var"):
            params[name] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        elif zero and (name.endswith(".weight") or name.endswith(".beta")):
            params[name] = np.zeros(shape, np.float32)
        elif zero and name.endswith((".gamma", ".mean")):
            params[name] = np.zeros(shape, np.float32) if name.endswith(".mean") else np.ones(shape, np.float32)
        else:
            params[name] = (rand(rng, *shape) * 0.5).astype(np.float32)
    return params


def feature(rng, n, ch, cl, size):
    return OctFeature(rand(rng, n, ch, size, size), rand(rng, n, cl, size // 2, size // 2) if cl else None)


def test_feature_invariants():
    with pytest.raises(T.ShapeError):
        OctFeature(np.zeros((1, 2, 8, 8)), np.zeros((1, 2, 8, 8)))
    with pytest.raises(ValueError):
        OctFeature(None, None)
    assert split_channels(16, 0.5) == (8, 8)
    assert split_channels(5, 0.0) == (5, 0)


def test_weights_validation():
    with pytest.raises(ValueError):
        OctConvWeights(hh=np.zeros((2, 2, 3, 3)), ll=np.zeros((2, 2, 3, 3)), alpha_oct=0.0)
    with pytest.raises(T.ShapeError):
        OctConvWeights(hh=np.zeros((2, 2, 3, 3)), lh=np.zeros((3, 2, 3, 3)))


def test_alpha_zero_is_plain_conv():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, w, b = rand(rng, 2, 3, 6, 6), rand(rng, 4, 3, 3, 3), rand(rng, 4)
        out = octconv(OctFeature(x), OctConvWeights(hh=w, bias_h=b, alpha_oct=0.0), pad=1)
        assert out.low is None
        np.testing.assert_allclose(out.high, T.conv2d(x, w, b, pad=1), atol=1e-6)


def test_low_output_from_pooled_high_only():
    rng = np.random.default_rng(1)
    x = feature(rng, 1, 4, 4, 8)
    hl = rand(rng, 3, 4, 3, 3)
    w = OctConvWeights(hl=hl, lh=np.zeros((5, 4, 3, 3), np.float32), ll=np.zeros((3, 4, 3, 3), np.float32),
                       hh=rand(rng, 5, 4, 3, 3))
    out = octconv(OctFeature(x.high, np.zeros_like(x.low)), w, pad=1)
    np.testing.assert_allclose(out.low, T.conv2d(T.avg_pool2(x.high), hl, pad=1), atol=1e-6)


def test_four_path_composition():
    rng = np.random.default_rng(2)
    x = feature(rng, 1, 4, 4, 8)
    hh, hl, lh, ll = (rand(rng, 4, 4, 3, 3) for _ in range(4))
    out = octconv(x, OctConvWeights(hh, hl, lh, ll), pad=1)
    want_h = T.conv2d(x.high, hh, pad=1) + T.upsample_bilinear2(T.conv2d(x.low, lh, pad=1))
    want_l = T.conv2d(T.avg_pool2(x.high), hl, pad=1) + T.conv2d(x.low, ll, pad=1)
    np.testing.assert_allclose(out.high, want_h, atol=1e-5)
    np.testing.assert_allclose(out.low, want_l, atol=1e-5)


def test_general_zero_branch_is_skip():
    rng = np.random.default_rng(3)
    params = random_params(block_shapes(8, 8, True, True, 0.5), rng, zero=True)
    x = feature(rng, 2, 4, 4, 8)
    y = ocblock_general(x, params)
    np.testing.assert_array_equal(y.high, x.high)
    np.testing.assert_array_equal(y.low, x.low)


def _bn(x, p, prefix):
    return T.batchnorm_infer(x, p[prefix + ".gamma"], p[prefix + ".beta"], p[prefix + ".mean"],
                             p[prefix + ".var"], 1e-5)


def test_general_matches_stage_composition():
    rng = np.random.default_rng(4)
    p = random_params(block_shapes(8, 8, True, True, 0.5), rng)
    x = feature(rng, 1, 4, 4, 8)
    eh = T.relu(_bn(T.conv2d(x.high, p["expand.hh.weight"]), p, "expand.bn_h"))
    el = T.relu(_bn(T.conv2d(x.low, p["expand.ll.weight"]), p, "expand.bn_l"))
    dw = lambda a, n: T.depthwise_conv2d(a, p[f"octave.{n}.weight"], pad=1)
    oh = dw(eh, "hh") + T.upsample_bilinear2(dw(el, "lh"))
    ol = dw(T.avg_pool2(eh), "hl") + dw(el, "ll")
    oh, ol = T.relu(_bn(oh, p, "octave.bn_h")), T.relu(_bn(ol, p, "octave.bn_l"))
    ph = _bn(T.conv2d(oh, p["project.hh.weight"]), p, "project.bn_h") + x.high
    pl = _bn(T.conv2d(ol, p["project.ll.weight"]), p, "project.bn_l") + x.low
    y = ocblock_general(x, p)
    np.testing.assert_allclose(y.high, ph, atol=1e-5)
    np.testing.assert_allclose(y.low, pl, atol=1e-5)


def test_split_shapes_and_zero():
    rng = np.random.default_rng(5)
    shapes = block_shapes(3, 8, False, True, 0.5)
    x = rand(rng, 1, 3, 8, 8)
    y = ocblock_split(x, random_params(shapes, rng))
    assert y.high.shape == (1, 4, 8, 8) and y.low.shape == (1, 4, 4, 4)
    z = ocblock_split(x, random_params(shapes, rng, zero=True))
    assert not z.high.any() and not z.low.any()
    p = random_params(shapes, rng)
    a, b = ocblock_split(x, p), ocblock_general(OctFeature(x), p)
    np.testing.assert_allclose(a.low, b.low, atol=1e-6)
    with pytest.raises(ValueError):
        ocblock_split(x, random_params(block_shapes(8, 8, True, True, 0.5), rng))


def test_merge_zero_low_equals_high_only_block():
    rng = np.random.default_rng(6)
    p = random_params(block_shapes(8, 6, True, False, 0.5), rng)
    # bn(0) == 0 on the low expansion, so a zero low input carries nothing upward
    p["expand.bn_l.beta"] = np.zeros(8, np.float32)
    p["expand.bn_l.mean"] = np.zeros(8, np.float32)
    x = rand(rng, 1, 4, 8, 8)
    y = ocblock_merge(OctFeature(x, np.zeros((1, 4, 4, 4), np.float32)), p)
    high_only = {k: v for k, v in p.items() if not k.startswith(("expand.ll", "expand.bn_l", "octave.lh"))}
    assert y.shape == (1, 6, 8, 8)
    np.testing.assert_allclose(y, ocblock_merge(OctFeature(x), high_only), atol=1e-5)


def test_merge_rejects_low_output_params():
    rng = np.random.default_rng(7)
    with pytest.raises(ValueError):
        ocblock_merge(feature(rng, 1, 4, 4, 8), random_params(block_shapes(8, 8, True, True, 0.5), rng))


def test_merge_constant_inputs_give_constant_output():
    rng = np.random.default_rng(8)
    p = random_params(block_shapes(8, 6, True, False, 0.5), rng)
    for name in ("octave.hh.weight", "octave.lh.weight"):
        k = np.zeros(p[name].shape, np.float32)
        k[:, 0, 1, 1] = 1
        p[name] = k
    x = OctFeature(np.full((1, 4, 8, 8), 0.7, np.float32), np.full((1, 4, 4, 4), -0.2, np.float32))
    y = ocblock_merge(x, p)
    np.testing.assert_allclose(y, np.broadcast_to(y[:, :, :1, :1], y.shape), atol=1e-6)


def test_residual_only_when_layouts_match():
    rng = np.random.default_rng(9)
    p = random_params(block_shapes(8, 12, True, True, 0.5), rng, zero=True)
    y = ocblock(feature(rng, 1, 4, 4, 8), p)
    assert y.high.shape == (1, 6, 8, 8) and not y.high.any()


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(2, 10), st.booleans(), st.booleans(),
       st.sampled_from([0.0, 0.25, 0.5]), st.integers(0, 2**31 - 1))
def test_block_shapes_follow_config(c_in, c_out, in_low, out_low, alpha, seed):
    rng = np.random.default_rng(seed)
    shapes = block_shapes(c_in, c_out, in_low, out_low, alpha)
    ch_in, cl_in = split_channels(c_in, alpha) if in_low else (c_in, 0)
    ch_out, cl_out = split_channels(c_out, alpha) if out_low else (c_out, 0)
    x = feature(rng, 1, ch_in, cl_in, 8)
    y = ocblock(x, random_params(shapes, rng))
    assert y.high.shape == (1, ch_out, 8, 8)
    if cl_out:
        assert y.low.shape == (1, cl_out, 4, 4)
    else:
        assert y.low is None
