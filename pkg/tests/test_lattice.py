import math

import numpy as np
import pytest

from loopsoup.lattice import (Box, ball_boundary, ball_volume,
                              ball_points_cached, canonical_edge, diameter,
                              dist_sets, neighbors, pack_points)


def test_ball_boundary_d2_r1():
    b = ball_boundary(Box((0, 0), 1))
    assert b == {(1, 0), (-1, 0), (0, 1), (0, -1)}


def test_ball_boundary_d3_r1():
    assert len(ball_boundary(Box((0, 0, 0), 1))) == 6


def test_ball_boundary_radius_zero():
    assert ball_boundary(Box((2, -1), 0)) == {(2, -1)}


def test_ball_boundary_d5_r4_brute_force():
    # definition scan over the enclosing cube
    box = Box((0,) * 5, 4)
    expected = set()
    for p in box.points():
        if any(not box.contains(q) for q in neighbors(p)):
            expected.add(p)
    assert ball_boundary(box) == expected


def test_boundary_points_are_in_ball_with_outside_neighbor():
    box = Box((1, 0, -2), 3)
    for p in ball_boundary(box):
        assert box.contains(p)
        assert any(not box.contains(q) for q in neighbors(p))


def test_dist_sets_basic():
    assert dist_sets([(0, 0, 0)], [(0, 0, 0)]) == 0.0
    assert dist_sets([(0, 0, 0)], [(3, 4, 0)]) == 5.0


def test_dist_sets_empty_raises():
    with pytest.raises(ValueError, match="empty set"):
        dist_sets([], [(0, 0)])


def test_dist_sets_matches_pair_scan():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = [tuple(v) for v in rng.integers(-5, 6, size=(10, 3))]
        b = [tuple(v) for v in rng.integers(-5, 6, size=(10, 3))]
        brute = min(math.dist(x, y) for x in a for y in b)
        assert dist_sets(a, b) == pytest.approx(brute)


def test_edge_canonicalization():
    assert canonical_edge((0, 0), (1, 0)) == canonical_edge((1, 0), (0, 0))
    with pytest.raises(ValueError):
        canonical_edge((0, 0), (1, 1))


def test_ball_volume_matches_scan():
    for d, r in [(3, 5), (4, 3), (5, 4)]:
        assert ball_volume(d, r) == len(Box((0,) * d, r).points())


def test_ball_points_cached_sorted():
    pts = ball_points_cached(3, (0, 0, 0), 2)
    assert list(pts) == sorted(pts)
    assert len(pts) == ball_volume(3, 2)


def test_pack_points_injective_on_ball():
    pts = np.asarray(Box((0,) * 4, 3).points(), dtype=np.int64)
    keys = pack_points(pts, 10)
    assert len(np.unique(keys)) == len(pts)


def test_diameter():
    assert diameter([(0, 0)]) == 0.0
    assert diameter([(0, 0, 0), (1, 0, 0), (0, 2, 0)]) == pytest.approx(math.sqrt(5))
