import numpy as np
import pytest
from hypothesis import given, strategies as st

from evquad.errors import BoundsError, CorruptStreamError
from evquad.events import SensorGeometry
from evquad.quadtree import (OccupancyStream, build_occupancy, child_nibble, expected_length,
                             morton, popcount, quadrant, reconstruct_arrays, reconstruct_coords,
                             required_depth, unmorton)

from helpers import naive_occupancy


@st.composite
def coord_sets(draw, max_depth=8):
    depth = draw(st.integers(1, max_depth))
    side = 1 << depth
    pts = draw(st.sets(st.tuples(st.integers(0, side - 1), st.integers(0, side - 1)),
                       min_size=1, max_size=60))
    return depth, sorted(pts)


@pytest.mark.parametrize("w,h,d", [(640, 480, 10), (1280, 720, 11), (2, 2, 1), (1, 1, 1),
                                   (3, 1, 2), (1024, 1024, 10), (1025, 8, 11), (65535, 1, 16)])
def test_required_depth(w, h, d):
    assert required_depth(SensorGeometry(w, h)) == d


def test_child_nibble_convention():
    assert child_nibble([True, False, False, False]) == 8
    assert child_nibble([True] * 4) == 15
    assert child_nibble([False] * 4) == 0
    assert child_nibble([False, False, False, True]) == 1
    with pytest.raises(ValueError):
        child_nibble([True])


def test_quadrant_index():
    # (x, y) = (1, 0) at depth 1 lies in NE; (0, 1) in SW
    assert quadrant(1, 0, 1, 1) == 1
    assert quadrant(0, 1, 1, 1) == 2
    assert quadrant(3, 3, 1, 2) == 3
    assert quadrant(3, 3, 2, 2) == 3


class TestBuild:
    @pytest.mark.parametrize("coords,depth,nibbles", [
        ([(0, 0)], 1, [8]),
        ([(0, 0), (1, 1)], 1, [9]),
        ([(0, 0)], 2, [8, 8]),
        ([(0, 0), (0, 1), (1, 0), (1, 1)], 1, [15]),
        ([(3, 0)], 2, [4, 4]),
    ])
    def test_examples(self, coords, depth, nibbles):
        assert build_occupancy(coords, depth).nibbles.tolist() == nibbles

    def test_accepts_array_columns(self):
        xs, ys = np.array([0, 1]), np.array([0, 1])
        assert build_occupancy((xs, ys), 1).nibbles.tolist() == [9]

    def test_bounds(self):
        with pytest.raises(BoundsError):
            build_occupancy([(4, 0)], 2)

    def test_rejects_unsorted_or_duplicate(self):
        with pytest.raises(ValueError):
            build_occupancy([(1, 0), (0, 0)], 1)
        with pytest.raises(ValueError):
            build_occupancy([(0, 0), (0, 0)], 1)

    def test_rejects_empty_and_bad_depth(self):
        with pytest.raises(ValueError):
            build_occupancy([], 3)
        with pytest.raises(ValueError):
            build_occupancy([(0, 0)], 0)

    @given(coord_sets())
    def test_matches_recursive_reference(self, case):
        depth, coords = case
        assert build_occupancy(coords, depth).nibbles.tolist() == naive_occupancy(coords, depth)

    @given(coord_sets())
    def test_stream_invariants(self, case):
        depth, coords = case
        stream = build_occupancy(coords, depth)
        assert np.all((stream.nibbles >= 1) & (stream.nibbles <= 15))
        levels = stream.levels()
        assert len(levels) == depth and len(levels[0]) == 1
        for upper, lower in zip(levels, levels[1:]):
            assert len(lower) == popcount(upper).sum()
        assert len(stream) == expected_length(stream)
        assert stream.leaf_count() == len(coords)

    @given(coord_sets(max_depth=11))
    def test_deterministic(self, case):
        depth, coords = case
        assert build_occupancy(coords, depth) == build_occupancy(list(coords), depth)


class TestReconstruct:
    @pytest.mark.parametrize("nibbles,depth,coords", [
        ([8], 1, [(0, 0)]),
        ([9], 1, [(0, 0), (1, 1)]),
        ([15], 1, [(0, 0), (0, 1), (1, 0), (1, 1)]),
        ([8, 8], 2, [(0, 0)]),
    ])
    def test_examples(self, nibbles, depth, coords):
        assert reconstruct_coords(OccupancyStream(np.array(nibbles, np.uint8), depth)) == coords

    @given(coord_sets(max_depth=12))
    def test_round_trip(self, case):
        depth, coords = case
        assert reconstruct_coords(build_occupancy(coords, depth)) == coords

    @pytest.mark.parametrize("nibbles,depth", [
        ([8], 2),          # too short
        ([8, 8, 8], 2),    # surplus
        ([0], 1),          # zero nibble
        ([12, 8], 2),      # second level needs two nibbles
        ([], 1),
    ])
    def test_corrupt(self, nibbles, depth):
        stream = OccupancyStream(np.array(nibbles, np.uint8), depth)
        with pytest.raises(CorruptStreamError):
            reconstruct_coords(stream)
        with pytest.raises(CorruptStreamError):
            stream.levels()

    def test_arrays_view(self):
        xs, ys = reconstruct_arrays(build_occupancy([(0, 3), (2, 1)], 2))
        assert xs.tolist() == [0, 2] and ys.tolist() == [3, 1]


@given(st.lists(st.integers(0, 65535), min_size=1, max_size=20),
       st.lists(st.integers(0, 65535), min_size=1, max_size=20))
def test_morton_round_trip(xs, ys):
    n = min(len(xs), len(ys))
    xs, ys = np.array(xs[:n]), np.array(ys[:n])
    codes = morton(xs, ys)
    back = unmorton(codes)
    assert back[0].tolist() == xs.tolist() and back[1].tolist() == ys.tolist()
    # y supplies the high bit of each pair
    assert int(morton(np.array([0]), np.array([1]))[0]) == 2
