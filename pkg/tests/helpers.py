"""Shared generators and independent oracles for the test suite."""
import numpy as np

from evquad.events import EventArray, SensorGeometry


def random_events(rng, geometry: SensorGeometry, n_units: int, per_unit: float,
                  max_gap: int = 1000) -> EventArray:
    """Canonically ordered events: ``n_units`` timestamps, ~``per_unit`` pixels each."""
    w, h = geometry.width, geometry.height
    counts = np.maximum(1, rng.poisson(per_unit, n_units))
    counts = np.minimum(counts, w * h)
    unit = np.repeat(np.arange(n_units), counts)
    pix = rng.integers(0, w * h, len(unit))
    key = np.unique(unit.astype(np.int64) * (w * h) + pix)
    unit, pix = key // (w * h), key % (w * h)
    gaps = rng.integers(1, max_gap + 1, n_units)
    t_unit = int(rng.integers(0, 10**6)) + np.cumsum(gaps) - gaps[0]
    t = t_unit[unit]
    x, y = pix // h, pix % h  # key order is then (t, x, y)
    p = rng.choice(np.array([-1, 1]), len(t))
    return EventArray(t, x, y, p)


def random_pmf(rng, sparsity: float = 0.5, zero_first: bool = True) -> np.ndarray:
    p = rng.random(16) ** 3
    p[rng.random(16) < sparsity] = 0
    if zero_first:
        p[0] = 0
    if p.sum() == 0:
        p[int(rng.integers(1, 16))] = 1
    return p / p.sum()


def naive_occupancy(coords, depth):
    """Recursive reference quadtree: breadth-first nibbles, NW bit first."""
    nibbles = []
    level = [(0, 0, 1 << depth, sorted(set(coords)))]
    while level and level[0][2] > 1:
        nxt = []
        for x0, y0, size, pts in level:
            half = size // 2
            nib = 0
            for q, (qx, qy) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
                sub = [(x, y) for x, y in pts
                       if x0 + qx * half <= x < x0 + (qx + 1) * half
                       and y0 + qy * half <= y < y0 + (qy + 1) * half]
                if sub:
                    nib |= 1 << (3 - q)
                    nxt.append((x0 + qx * half, y0 + qy * half, half, sub))
            nibbles.append(nib)
        level = nxt
    return nibbles


def rice_bits(n: int, k: int) -> str:
    """Rice codeword as a '0'/'1' string built straight from the definition."""
    q, m = divmod(n, 2 ** k)
    return "1" * q + "0" + (format(m, f"0{k}b") if k else "")


def bits_of(data: bytes) -> str:
    return "".join(format(b, "08b") for b in data)
