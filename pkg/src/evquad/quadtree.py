"""Quadtree occupancy coding of a coding unit's pixel set.

A node's nibble has bit 3 = NW, bit 2 = NE, bit 1 = SW, bit 0 = SE (y grows
downward). Nibbles are emitted breadth first; inside a level nodes follow their
parent's order and then quadrant order, which is exactly ascending order of the
node's Morton prefix when y takes the higher bit of every pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoundsError, CorruptStreamError
from .events import SensorGeometry

MAX_DEPTH = 16
_QUAD_SHIFTS = np.array([3, 2, 1, 0], dtype=np.uint8)
_QUAD_INDEX = np.arange(4, dtype=np.uint64)


def required_depth(geometry: SensorGeometry) -> int:
    """Smallest D >= 1 with 2**D >= max(width, height)."""
    side = max(geometry.width, geometry.height)
    return max(1, (side - 1).bit_length())


def child_nibble(occupied: Sequence[bool]) -> int:
    """Pack quadrant flags (NW, NE, SW, SE) into a nibble, NW in the MSB."""
    if len(occupied) != 4:
        raise ValueError("expected 4 quadrant flags")
    return sum(1 << (3 - q) for q, occ in enumerate(occupied) if occ)


def quadrant(x: int, y: int, level: int, depth: int) -> int:
    """Quadrant index (0..3) of pixel (x, y) below its depth ``level - 1`` ancestor."""
    shift = depth - level
    return 2 * ((y >> shift) & 1) + ((x >> shift) & 1)


# ----------------------------------------------------------------- morton codes

def _spread(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64) & np.uint64(0xFFFF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x00FF00FF)
    v = (v | (v << np.uint64(4))) & np.uint64(0x0F0F0F0F)
    v = (v | (v << np.uint64(2))) & np.uint64(0x33333333)
    v = (v | (v << np.uint64(1))) & np.uint64(0x55555555)
    return v


def _compact(v: np.ndarray) -> np.ndarray:
    v = v & np.uint64(0x55555555)
    v = (v | (v >> np.uint64(1))) & np.uint64(0x33333333)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x0F0F0F0F)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x00FF00FF)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x0000FFFF)
    return v


def morton(xs, ys) -> np.ndarray:
    return (_spread(np.asarray(ys)) << np.uint64(1)) | _spread(np.asarray(xs))


def unmorton(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    codes = np.asarray(codes, dtype=np.uint64)
    return (_compact(codes).astype(np.int64),
            _compact(codes >> np.uint64(1)).astype(np.int64))


# ---------------------------------------------------------------- stream type

@dataclass(frozen=True, eq=False)
class OccupancyStream:
    nibbles: np.ndarray  # uint8, level order
    depth: int

    def __len__(self):
        return len(self.nibbles)

    def __eq__(self, other):
        if not isinstance(other, OccupancyStream):
            return NotImplemented
        return self.depth == other.depth and np.array_equal(self.nibbles, other.nibbles)

    def levels(self) -> list[np.ndarray]:
        """Split the stream per level; raises on inconsistent node counts."""
        out, pos, count = [], 0, 1
        nib = self.nibbles
        for _ in range(self.depth):
            if pos + count > len(nib):
                raise CorruptStreamError("occupancy stream too short for its tree")
            level = nib[pos:pos + count]
            if np.any(level == 0) or np.any(level > 15):
                raise CorruptStreamError("occupancy nibble outside 1..15")
            out.append(level)
            pos += count
            count = int(_POPCOUNT[level].sum())
        if pos != len(nib):
            raise CorruptStreamError(f"{len(nib) - pos} surplus nibble(s) after leaf level")
        return out

    def leaf_count(self) -> int:
        return int(_POPCOUNT[self.levels()[-1]].sum())


_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def popcount(nibbles) -> np.ndarray:
    return _POPCOUNT[np.asarray(nibbles, dtype=np.uint8)]


# --------------------------------------------------------------- operations

def _coord_columns(coords) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(coords, tuple) and len(coords) == 2 and isinstance(coords[0], np.ndarray):
        return np.asarray(coords[0], dtype=np.int64), np.asarray(coords[1], dtype=np.int64)
    arr = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def build_occupancy(coords, depth: int) -> OccupancyStream:
    """Occupancy nibbles for a strictly (x, y)-sorted, non-empty pixel set.

    ``coords`` is a sequence of ``(x, y)`` pairs or an ``(xs, ys)`` array tuple.
    """
    from ._backend import kernels

    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [1, {MAX_DEPTH}]")
    xs, ys = _coord_columns(coords)
    if len(xs) == 0:
        raise ValueError("cannot build a quadtree for an empty unit")
    side = 1 << depth
    if xs.min() < 0 or ys.min() < 0 or xs.max() >= side or ys.max() >= side:
        raise BoundsError(f"coordinate outside the {side}x{side} quadtree square")
    if len(xs) > 1:
        dx, dy = np.diff(xs), np.diff(ys)
        if np.any((dx < 0) | ((dx == 0) & (dy <= 0))):
            raise ValueError("coords must be strictly increasing in (x, y)")
    nibbles, _ = kernels.occupancy_batch(xs, ys, np.array([0, len(xs)], dtype=np.int64), depth)
    return OccupancyStream(nibbles, depth)


def reconstruct_coords(stream: OccupancyStream) -> list[tuple[int, int]]:
    """Inverse of :func:`build_occupancy`, sorted lexicographically by (x, y)."""
    xs, ys = reconstruct_arrays(stream)
    return list(zip(xs.tolist(), ys.tolist()))


def reconstruct_arrays(stream: OccupancyStream) -> tuple[np.ndarray, np.ndarray]:
    from ._backend import kernels

    nib = np.ascontiguousarray(stream.nibbles, dtype=np.uint8)
    xs, ys, _, err = kernels.reconstruct_batch(
        nib, np.array([0, len(nib)], dtype=np.int64), stream.depth)
    if err is not None:
        raise CorruptStreamError(err[1])
    return xs, ys


def expected_length(stream: OccupancyStream) -> int:
    """1 + sum of popcounts over every non-leaf level."""
    return 1 + sum(int(popcount(lv).sum()) for lv in stream.levels()[:-1])
