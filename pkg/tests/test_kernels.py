"""Backend parity: the compiled kernels must match the numpy fallback."""

import numpy as np
import pytest

from spotfill.kernels import _numpy

try:
    from spotfill.kernels import _native
except ImportError:
    _native = None

needs_native = pytest.mark.skipif(_native is None, reason="compiled kernels not built")


@needs_native
def test_nearest_neighbors_parity():
    rng = np.random.default_rng(0)
    for _ in range(15):
        a = rng.uniform(-1, 1, (int(rng.integers(1, 200)), 3))
        b = rng.uniform(-1, 1, (int(rng.integers(1, 200)), 3))
        np_ab, np_ba = _numpy.nearest_neighbors(a, b)
        nt_ab, nt_ba = _native.nearest_neighbors(a, b)
        assert np.array_equal(np_ab, nt_ab)
        assert np.array_equal(np_ba, nt_ba)


@needs_native
def test_farthest_point_sample_parity():
    rng = np.random.default_rng(1)
    for _ in range(15):
        n = int(rng.integers(1, 300))
        pts = rng.uniform(-1, 1, (n, 3))
        count = int(rng.integers(1, n + 1))
        assert np.array_equal(_numpy.farthest_point_sample(pts, count),
                              _native.farthest_point_sample(pts, count))


@needs_native
def test_ball_query_parity():
    rng = np.random.default_rng(2)
    for _ in range(15):
        q = rng.uniform(-1, 1, (int(rng.integers(1, 100)), 3))
        s = rng.uniform(-1, 1, (int(rng.integers(1, 150)), 3))
        radius = float(rng.uniform(0.05, 0.8))
        cap = int(rng.integers(1, 12))
        np_idx, np_cnt = _numpy.ball_query(q, s, radius, cap)
        nt_idx, nt_cnt = _native.ball_query(q, s, radius, cap)
        assert np.array_equal(np_idx, nt_idx)
        assert np.array_equal(np_cnt, nt_cnt)


@needs_native
def test_ball_query_parity_more_slots_than_sources():
    rng = np.random.default_rng(3)
    q = rng.uniform(-1, 1, (5, 3))
    s = rng.uniform(-1, 1, (3, 3))
    np_idx, np_cnt = _numpy.ball_query(q, s, 0.6, 8)
    nt_idx, nt_cnt = _native.ball_query(q, s, 0.6, 8)
    assert np.array_equal(np_idx, nt_idx)
    assert np.array_equal(np_cnt, nt_cnt)


@needs_native
def test_parity_with_duplicate_points():
    # duplicates force exact distance ties through both code paths
    pts = np.repeat(np.arange(5.0)[:, None], 3, axis=1)
    pts = np.concatenate([pts, pts, pts])
    assert np.array_equal(_numpy.farthest_point_sample(pts, 15),
                          _native.farthest_point_sample(pts, 15))
    idx_np, cnt_np = _numpy.ball_query(pts, pts, 0.5, 4)
    idx_nt, cnt_nt = _native.ball_query(pts, pts, 0.5, 4)
    assert np.array_equal(idx_np, idx_nt)
    assert np.array_equal(cnt_np, cnt_nt)
