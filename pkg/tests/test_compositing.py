import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litematte import reference as R
from litematte.compositing import composite_image, make_tgt, trimap_from_alpha


def test_composite_endpoints_and_midpoint():
    rng = np.random.default_rng(0)
    f, b = rng.uniform(0, 1, (1, 3, 4, 4)), rng.uniform(0, 1, (1, 3, 4, 4))
    ones, zeros = np.ones((1, 1, 4, 4)), np.zeros((1, 1, 4, 4))
    np.testing.assert_array_equal(composite_image(f, b, ones), f.astype(np.float32))
    np.testing.assert_array_equal(composite_image(f, b, zeros), b.astype(np.float32))
    mid = composite_image(np.full((1, 3, 1, 1), 200.0), np.full((1, 3, 1, 1), 100.0), np.full((1, 1, 1, 1), 0.5))
    np.testing.assert_array_equal(mid, 150)
    with pytest.raises(ValueError):
        composite_image(f, b, ones * 1.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_same_layers_ignore_alpha(seed):
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 1, (1, 3, 3, 3)).astype(np.float32)
    a = rng.uniform(0, 1, (1, 1, 3, 3)).astype(np.float32)
    np.testing.assert_allclose(composite_image(f, f, a), f, atol=1e-7)


def test_make_tgt_table():
    np.testing.assert_array_equal(make_tgt(np.array([0.0, 1.0, 0.37])), [0, 1, 2])
    binary = (np.random.default_rng(1).uniform(size=(5, 5)) > 0.5).astype(np.float32)
    assert not (make_tgt(binary) == 2).any()
    a = np.random.default_rng(2).uniform(-0.5, 1.5, (8, 8)).clip(0, 1).astype(np.float32)
    assert (make_tgt(a) == 2).sum() == ((a > 0) & (a < 1)).sum()
    with pytest.raises(ValueError):
        make_tgt(np.array([-0.1]))


def test_make_tgt_binary_recoding_idempotent():
    a = np.random.default_rng(3).uniform(-0.5, 1.5, (8, 8)).clip(0, 1)
    labels = make_tgt((a > 0.5).astype(np.float32))
    np.testing.assert_array_equal(make_tgt(labels), labels)


def test_trimap_radius_zero_and_binary():
    a = np.random.default_rng(4).uniform(-1, 2, (1, 1, 10, 10)).clip(0, 1).astype(np.float32)
    t = trimap_from_alpha(a, 0)
    np.testing.assert_array_equal(t == 0.5, make_tgt(a) == 2)
    np.testing.assert_array_equal(t[make_tgt(a) == 1], 1)
    binary = (a > 0.5).astype(np.float32)
    assert not (trimap_from_alpha(binary, 0) == 0.5).any()


@pytest.mark.parametrize("radius", [1, 2, 5, 30])
def test_trimap_matches_brute_force_dilation(radius):
    a = np.random.default_rng(radius).uniform(-4, 5, (2, 1, 12, 12)).clip(0, 1).astype(np.float32)
    t = trimap_from_alpha(a, radius)
    for i in range(2):
        grown = R.dilate(make_tgt(a[i, 0]) == 2, radius)
        np.testing.assert_array_equal(t[i, 0] == 0.5, grown)
        np.testing.assert_array_equal(t[i, 0][~grown], a[i, 0][~grown])
    with pytest.raises(ValueError):
        trimap_from_alpha(a, -1)
