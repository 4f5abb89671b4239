"""Result types shared by the compiled and pure-Python kernels."""
from typing import NamedTuple

import numpy as np


class ParsedBody(NamedTuple):
    nibbles: np.ndarray  # uint8, all units concatenated
    nib_starts: np.ndarray  # int64, n + 1
    dts: np.ndarray  # uint64 timestamp deltas
    counts: np.ndarray  # int64 events per unit
    pol_offsets: np.ndarray  # int64 byte offset of each polarity payload
    record_offsets: np.ndarray  # int64, n + 1; last entry is the end of the body
    end: int
    err: tuple | None  # (unit_index, message)
