"""Frequency substitution and Rice coding of occupancy nibbles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitio import BitReader, BitWriter
from .errors import CorruptStreamError

N_SYMBOLS = 16
MAX_K = 8
DEFAULT_K = 1


@dataclass(frozen=True, eq=False)
class SubstitutionTable:
    rank_of: np.ndarray  # symbol -> rank
    symbol_of: np.ndarray  # rank -> symbol

    def __eq__(self, other):
        return isinstance(other, SubstitutionTable) and np.array_equal(self.rank_of, other.rank_of)

    @classmethod
    def identity(cls) -> "SubstitutionTable":
        ident = np.arange(N_SYMBOLS, dtype=np.int64)
        return cls(ident, ident.copy())


def rank_order(scores) -> np.ndarray:
    """Symbols ordered by descending score, ties by ascending symbol."""
    scores = np.asarray(scores)
    if scores.shape != (N_SYMBOLS,):
        raise ValueError(f"expected {N_SYMBOLS} scores, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return np.lexsort((np.arange(N_SYMBOLS), -scores))


def build_table(pmf) -> SubstitutionTable:
    """Rank symbols by probability (highest first); ``pmf`` may be any monotone score."""
    symbol_of = rank_order(pmf).astype(np.int64)
    rank_of = np.empty(N_SYMBOLS, dtype=np.int64)
    rank_of[symbol_of] = np.arange(N_SYMBOLS)
    return SubstitutionTable(rank_of, symbol_of)


def _check_k(k: int) -> None:
    if not 0 <= k <= MAX_K:
        raise ValueError(f"Rice parameter k must be in [0, {MAX_K}], got {k}")


def code_length(n: int, k: int) -> int:
    return (n >> k) + 1 + k


def rice_encode(n: int, k: int, out: BitWriter) -> None:
    if n < 0:
        raise ValueError("Rice coding needs a non-negative integer")
    out.write_unary(n >> k)
    out.write_bits(n & ((1 << k) - 1), k)


def rice_decode(reader: BitReader, k: int, max_quotient: int | None = None) -> int:
    q = reader.read_unary(max_quotient)
    return (q << k) | reader.read_bits(k)


def encode_nibbles(nibbles, table: SubstitutionTable, k: int, out: BitWriter) -> None:
    _check_k(k)
    rank_of = table.rank_of
    for s in np.asarray(nibbles).tolist():
        if not 1 <= s <= 15:
            raise ValueError(f"occupancy nibble {s} outside 1..15")
        rice_encode(int(rank_of[s]), k, out)


def decode_nibbles(reader: BitReader, count: int, table: SubstitutionTable, k: int) -> np.ndarray:
    _check_k(k)
    max_q = (N_SYMBOLS - 1) >> k
    out = np.empty(count, dtype=np.uint8)
    for i in range(count):
        rank = rice_decode(reader, k, max_q)
        if rank >= N_SYMBOLS:
            raise CorruptStreamError(f"rank {rank} out of range")
        sym = int(table.symbol_of[rank])
        if sym == 0:
            raise CorruptStreamError("decoded the empty-node symbol 0 inside a stream")
        out[i] = sym
    return out


# ----------------------------------------------------------- vectorized forms

def rice_pack(values, k: int) -> bytes:
    """Rice-code a whole array at once; byte-aligned, zero padded."""
    v = np.asarray(values, dtype=np.int64)
    if v.size == 0:
        return b""
    q = v >> k
    lengths = q + 1 + k
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    total = int(lengths.sum())
    bits = np.zeros(total, dtype=np.uint8)
    nq = int(q.sum())
    if nq:
        run_base = np.repeat(starts, q)
        within = np.arange(nq) - np.repeat(np.cumsum(q) - q, q)
        bits[run_base + within] = 1
    rem_start = starts + q + 1
    for b in range(k):
        bits[rem_start + b] = (v >> (k - 1 - b)) & 1
    return np.packbits(bits).tobytes()


def rice_lengths(values, k: int) -> np.ndarray:
    return (np.asarray(values, dtype=np.int64) >> k) + 1 + k
