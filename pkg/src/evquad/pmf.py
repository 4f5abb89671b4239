"""Empirical symbol PMFs and the rolling window of recent ones."""
from __future__ import annotations

import numpy as np

from .quadtree import OccupancyStream

N_SYMBOLS = 16
DEFAULT_WINDOW = 10


def uniform_pmf() -> np.ndarray:
    return np.full(N_SYMBOLS, 1.0 / N_SYMBOLS)


def compute_pmf(stream) -> np.ndarray:
    """Relative frequency of each nibble value in an occupancy stream."""
    nibbles = stream.nibbles if isinstance(stream, OccupancyStream) else np.asarray(stream)
    if len(nibbles) == 0:
        raise ValueError("PMF of an empty occupancy stream is undefined")
    counts = np.bincount(np.asarray(nibbles, dtype=np.int64), minlength=N_SYMBOLS)
    if len(counts) > N_SYMBOLS:
        raise ValueError("nibble values must be < 16")
    return counts / len(nibbles)


class PmfBuffer:
    """The ``window`` most recent PMFs, oldest first, bootstrapped with uniform PMFs.

    ``history`` is float64; :meth:`as_model_input` gives the float32 view the
    predictor consumes, which is what encoder and decoder must agree on.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("PMF window must be >= 1")
        self.window = window
        self.history = np.tile(uniform_pmf(), (window, 1))

    def push(self, pmf) -> "PmfBuffer":
        pmf = np.asarray(pmf, dtype=np.float64)
        if pmf.shape != (N_SYMBOLS,):
            raise ValueError("PMF must have 16 entries")
        self.history[:-1] = self.history[1:]
        self.history[-1] = pmf
        return self

    def as_model_input(self) -> np.ndarray:
        return self.history.astype(np.float32)

    def copy(self) -> "PmfBuffer":
        other = PmfBuffer(self.window)
        other.history = self.history.copy()
        return other

    def __len__(self):
        return self.window

    def __eq__(self, other):
        if not isinstance(other, PmfBuffer):
            return NotImplemented
        return np.array_equal(self.history, other.history)


def new_buffer(window: int = DEFAULT_WINDOW) -> PmfBuffer:
    return PmfBuffer(window)


def push(buffer: PmfBuffer, pmf) -> PmfBuffer:
    return buffer.push(pmf)
