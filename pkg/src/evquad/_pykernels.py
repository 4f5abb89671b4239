"""Pure-Python (numpy) implementation of the hot kernels.

Same signatures and byte-identical results as the compiled ``_kernels``
module; used when the extension is unavailable or ``EVQUAD_PURE=1``.

Kernel contract
---------------
occupancy_batch(xs, ys, unit_starts, depth) -> (nibbles, nib_starts)
reconstruct_batch(nibbles, nib_starts, depth) -> (xs, ys, coord_starts, err)
encode_body(nibbles, nib_starts, pol_bits, ev_starts, dts, model, k)
    -> (body, record_offsets)
parse_body(data, pos, n_units, depth, k, model) -> ParsedBody

``err`` is ``None`` or ``(unit_index, message)``; on error all arrays cover
only the units before ``unit_index``. ``model`` is the tuple
``(w0, b0, w1, b1, w2, b2)`` of float32 arrays.
"""
from __future__ import annotations

import numpy as np

from .bitio import decode_varint, encode_varint
from .entropy import rank_order, rice_pack
from ._ktypes import ParsedBody
from .errors import CorruptStreamError, ModelError
from .predictor import ModelWeights, predict_scores
from .quadtree import _POPCOUNT, morton, unmorton

BACKEND = "python"
_F32_UNIFORM = np.float32(1.0 / 16)


def occupancy_batch(xs, ys, unit_starts, depth):
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    unit_starts = np.asarray(unit_starts, dtype=np.int64)
    n_units = len(unit_starts) - 1
    if n_units <= 0 or len(xs) == 0:
        return np.zeros(0, np.uint8), np.zeros(max(n_units, 0) + 1, np.int64)
    unit_id = np.repeat(np.arange(n_units, dtype=np.uint64), np.diff(unit_starts))
    keys = np.sort((unit_id << np.uint64(32)) | morton(xs, ys))
    nibs, units, levels = [], [], []
    for d in range(depth):
        shift = np.uint64(2 * (depth - d - 1))
        parent = keys >> (shift + np.uint64(2))
        child = ((keys >> shift) & np.uint64(3)).astype(np.uint8)
        first = np.flatnonzero(np.concatenate([[True], parent[1:] != parent[:-1]]))
        nibs.append(np.bitwise_or.reduceat(np.uint8(8) >> child, first))
        units.append(keys[first] >> np.uint64(32))
        levels.append(np.full(len(first), d, dtype=np.int64))
    nib, unit, level = (np.concatenate(a) for a in (nibs, units, levels))
    order = np.lexsort((level, unit))
    per_unit = np.bincount(unit.astype(np.int64), minlength=n_units)
    starts = np.concatenate([[0], np.cumsum(per_unit)]).astype(np.int64)
    return nib[order].astype(np.uint8), starts


_QUADRANT_BITS = np.array([8, 4, 2, 1], dtype=np.uint8)
_QUADRANT_IDS = np.arange(4, dtype=np.uint64)


def _reconstruct_one(nib, depth):
    prefixes = np.zeros(1, dtype=np.uint64)
    pos = 0
    for _ in range(depth):
        n = len(prefixes)
        if pos + n > len(nib):
            raise CorruptStreamError("occupancy stream too short for its tree")
        level = nib[pos:pos + n]
        if np.any(level == 0) or np.any(level > 15):
            raise CorruptStreamError("occupancy nibble outside 1..15")
        occupied = (level[:, None] & _QUADRANT_BITS) != 0
        prefixes = ((prefixes[:, None] << np.uint64(2)) | _QUADRANT_IDS)[occupied]
        pos += n
    if pos != len(nib):
        raise CorruptStreamError(f"{len(nib) - pos} surplus nibble(s) after leaf level")
    xs, ys = unmorton(prefixes)
    order = np.lexsort((ys, xs))
    return xs[order], ys[order]


def reconstruct_batch(nibbles, nib_starts, depth):
    nibbles = np.asarray(nibbles, dtype=np.uint8)
    xs_parts, ys_parts, counts = [], [], [0]
    err = None
    for u, (a, b) in enumerate(zip(nib_starts[:-1].tolist(), nib_starts[1:].tolist())):
        try:
            x, y = _reconstruct_one(nibbles[a:b], depth)
        except CorruptStreamError as exc:
            err = (u, str(exc))
            break
        xs_parts.append(x)
        ys_parts.append(y)
        counts.append(len(x))
    cat = (lambda parts: np.concatenate(parts) if parts else np.zeros(0, np.int64))
    return cat(xs_parts), cat(ys_parts), np.cumsum(counts).astype(np.int64), err


def _weights(model) -> ModelWeights:
    return model if isinstance(model, ModelWeights) else ModelWeights(*model)


def _ranking(weights, history):
    return rank_order(predict_scores(weights, history))


def _push(history, nib):
    counts = np.bincount(nib, minlength=16)
    history[:-1] = history[1:]
    history[-1] = (counts / len(nib)).astype(np.float32)


def encode_body(nibbles, nib_starts, pol_bits, ev_starts, dts, model, k):
    weights = _weights(model)
    history = np.full((weights.window, 16), _F32_UNIFORM, dtype=np.float32)
    nibbles = np.asarray(nibbles, dtype=np.int64)
    parts = []
    offsets = [0]
    rank_of = np.empty(16, dtype=np.int64)
    for u in range(len(nib_starts) - 1):
        nib = nibbles[nib_starts[u]:nib_starts[u + 1]]
        pol = pol_bits[ev_starts[u]:ev_starts[u + 1]]
        rank_of[_ranking(weights, history)] = np.arange(16)
        record = b"".join((encode_varint(int(dts[u])), encode_varint(len(pol)),
                           rice_pack(rank_of[nib], k), np.packbits(pol).tobytes()))
        parts.append(record)
        offsets.append(offsets[-1] + len(record))
        _push(history, nib)
    return b"".join(parts), np.array(offsets, dtype=np.int64)


def _bit_string(data: bytes, start: int) -> str:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=start)).tobytes() \
        .translate(bytes.maketrans(b"\x00\x01", b"01")).decode("ascii")


def parse_body(data, pos, n_units, depth, k, model):
    weights = _weights(model)
    history = np.full((weights.window, 16), _F32_UNIFORM, dtype=np.float32)
    data = bytes(data)
    bits = _bit_string(data, 0)
    max_q = 15 >> k
    nib_parts, nib_starts, dts, counts, pol_offsets, rec_offsets = [], [0], [], [], [], [pos]
    err = None
    for u in range(n_units):
        try:
            dt, p = decode_varint(data, pos)
            if u and dt == 0:
                raise CorruptStreamError("zero timestamp delta between units")
            if dt >= 1 << 63:
                raise CorruptStreamError("timestamp delta overflows int64")
            count, p = decode_varint(data, p)
            if count == 0:
                raise CorruptStreamError("unit with zero events")
            symbol_of = _ranking(weights, history)
            bit = 8 * p
            nib = []
            level_count = 1
            for _ in range(depth):
                if level_count > count:
                    raise CorruptStreamError("more tree nodes than events")
                pop = 0
                for _ in range(level_count):
                    z = bits.find("0", bit, bit + max_q + 1)
                    if z < 0:
                        raise CorruptStreamError(
                            "bitstream exhausted" if bit + max_q + 1 > len(bits)
                            else "Rice quotient out of range")
                    q = z - bit
                    bit = z + 1 + k
                    if bit > len(bits):
                        raise CorruptStreamError("bitstream exhausted")
                    rank = (q << k) | (int(bits[z + 1:bit], 2) if k else 0)
                    if rank > 15:
                        raise CorruptStreamError(f"rank {rank} out of range")
                    sym = int(symbol_of[rank])
                    if sym == 0:
                        raise CorruptStreamError("decoded the empty-node symbol 0 inside a stream")
                    nib.append(sym)
                    pop += int(_POPCOUNT[sym])
                level_count = pop
            if level_count != count:
                raise CorruptStreamError(
                    f"unit declares {count} events but its tree has {level_count} leaves")
            p = (bit + 7) >> 3
            pol_end = p + ((count + 7) >> 3)
            if pol_end > len(data):
                raise CorruptStreamError("polarity payload truncated")
        except (CorruptStreamError, ModelError) as exc:
            err = (u, str(exc))
            break
        nib_arr = np.array(nib, dtype=np.uint8)
        nib_parts.append(nib_arr)
        nib_starts.append(nib_starts[-1] + len(nib_arr))
        dts.append(dt)
        counts.append(count)
        pol_offsets.append(p)
        pos = pol_end
        rec_offsets.append(pos)
        _push(history, nib_arr)
    return ParsedBody(
        np.concatenate(nib_parts) if nib_parts else np.zeros(0, np.uint8),
        np.array(nib_starts, dtype=np.int64),
        np.array(dts, dtype=np.uint64),
        np.array(counts, dtype=np.int64),
        np.array(pol_offsets, dtype=np.int64),
        np.array(rec_offsets, dtype=np.int64),
        pos, err)
