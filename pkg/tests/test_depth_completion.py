import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from vmvs.depth_completion import DensifierConfig, densify, densify_oracle, diamond_kernel, full_kernel
from vmvs.errors import ConfigError, EmptyInput


def random_sparse(rng, h=32, w=32, fill=None, max_depth=80.0):
    fill = rng.uniform(0.02, 0.3) if fill is None else fill
    depth = np.round(rng.uniform(1.0, max_depth, (h, w)), 2)
    depth[rng.random((h, w)) > fill] = 0.0
    if not depth.any():
        depth[h // 2, w // 2] = 10.0
    return depth


def test_kernels():
    np.testing.assert_array_equal(diamond_kernel(5).sum(), 13)
    assert full_kernel(7).all() and full_kernel(7).shape == (7, 7)


def test_single_pixel_fills_diamond_with_its_depth():
    sparse = np.zeros((9, 9))
    sparse[4, 4] = 10.0
    dense = densify(sparse)
    assert dense[4, 4] == 10.0
    diamond = np.zeros((9, 9), dtype=bool)
    diamond[2:7, 2:7] = diamond_kernel(5)
    assert np.all(dense[diamond] == 10.0)
    assert set(np.unique(dense[dense > 0])) == {10.0}
    np.testing.assert_array_equal(dense, densify_oracle(sparse))


def test_fully_valid_map_unchanged():
    rng = np.random.default_rng(0)
    sparse = rng.uniform(1, 50, (12, 10))
    np.testing.assert_array_equal(densify(sparse), sparse)
    np.testing.assert_array_equal(densify_oracle(sparse), sparse)


def test_empty_map_raises():
    with pytest.raises(EmptyInput):
        densify(np.zeros((5, 5)))
    with pytest.raises(EmptyInput):
        densify_oracle(np.zeros((5, 5)))


def test_foreground_preferred_where_dilations_overlap():
    sparse = np.zeros((9, 9))
    sparse[4, 3], sparse[4, 5] = 5.0, 20.0
    dense = densify(sparse)
    assert dense[4, 4] == 5.0
    assert dense[4, 5] == 20.0


def test_depths_above_max_are_clamped():
    sparse = np.zeros((5, 5))
    sparse[2, 2] = 120.0
    dense = densify(sparse, DensifierConfig(max_depth=80.0))
    assert dense.max() == 80.0


@pytest.mark.parametrize("bad", [
    dict(max_depth=0.0),
    dict(dilation_kernel=np.ones((4, 4), bool)),
    dict(smoothing_window=4),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        DensifierConfig(**bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_structure_coverage_and_range(seed):
    rng = np.random.default_rng(seed)
    sparse = random_sparse(rng, *rng.integers(4, 40, 2))
    dense = densify(sparse)
    valid = sparse > 0
    np.testing.assert_array_equal(dense[valid], sparse[valid])
    reach = ndimage.binary_dilation(valid, structure=full_kernel(7))
    assert np.all(dense[reach] > 0)
    assert np.all(dense[dense > 0] <= 80.0)


def test_matches_oracle_on_random_maps():
    rng = np.random.default_rng(11)
    for _ in range(20):
        sparse = random_sparse(rng)
        np.testing.assert_array_equal(densify(sparse), densify_oracle(sparse))


def test_matches_oracle_with_other_kernels():
    rng = np.random.default_rng(12)
    cfg = DensifierConfig(max_depth=40.0, dilation_kernel=full_kernel(3), closing_kernel=diamond_kernel(3),
                          fill_kernel=full_kernel(5), smoothing_window=3)
    for _ in range(10):
        sparse = random_sparse(rng, 20, 24, max_depth=50.0)
        np.testing.assert_array_equal(densify(sparse, cfg), densify_oracle(sparse, cfg))


def test_deterministic():
    sparse = random_sparse(np.random.default_rng(5), 64, 64)
    a, b = densify(sparse), densify(sparse)
    assert a.tobytes() == b.tobytes()
