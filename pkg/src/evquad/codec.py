"""Container format and the full encode/decode pipeline.

Layout (all integers little-endian), see FORMAT.md for worked examples::

    header   magic "LCL1" | version u8 | width u16 | height u16 | depth u8 | k u8
             | window u8 | model hash 32B | unit count u64 | base timestamp u64
    record   varint dt | varint E | Rice occupancy payload (byte aligned)
             | E polarity bits, MSB first (byte aligned)

The batch functions here run the compiled kernels; :class:`UnitEncoder` and
:class:`UnitDecoder` process one coding unit at a time through the public
modules and serve both streaming use and as the reference the kernels are
checked against.
"""
from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .bitio import BitReader, BitWriter, decode_varint, encode_varint
from .entropy import DEFAULT_K, MAX_K, build_table, decode_nibbles, encode_nibbles
from .errors import CorruptStreamError, FormatError, ModelError
from .events import (CodingUnit, EventArray, SensorGeometry, canonicalize, polarities_from_bits,
                     polarity_bits)
from .pmf import PmfBuffer, compute_pmf
from .predictor import ModelWeights, default_weights, predict_scores
from .quadtree import OccupancyStream, build_occupancy, reconstruct_arrays, required_depth

MAGIC = b"LCL1"
VERSION = 1
HEADER = struct.Struct("<4sBHHBBB32sQQ")
HEADER_SIZE = HEADER.size
_INT64_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class FileHeader:
    width: int
    height: int
    depth: int
    k: int
    window: int
    model_hash: bytes
    unit_count: int
    base_timestamp: int
    version: int = VERSION

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.width, self.height, self.depth, self.k,
                           self.window, self.model_hash, self.unit_count, self.base_timestamp)

    @classmethod
    def unpack(cls, data: bytes) -> "FileHeader":
        if len(data) < HEADER_SIZE:
            raise FormatError(f"stream shorter than the {HEADER_SIZE}-byte header")
        magic, version, w, h, depth, k, window, digest, units, base = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported version {version}")
        try:
            geometry = SensorGeometry(w, h)
        except ValueError as exc:
            raise FormatError(str(exc)) from None
        if depth != required_depth(geometry):
            raise FormatError(f"depth {depth} does not match geometry {geometry}")
        if k > MAX_K:
            raise FormatError(f"Rice parameter {k} out of range")
        if window < 1:
            raise FormatError("PMF window must be >= 1")
        if base > _INT64_MAX:
            raise FormatError("base timestamp overflows int64")
        return cls(w, h, depth, k, window, digest, units, base, version)


@dataclass
class Timings:
    """Wall-clock seconds split into quadtree work and everything else."""

    quadtree: float = 0.0
    coding: float = 0.0

    @property
    def total(self) -> float:
        return self.quadtree + self.coding


@dataclass
class EncodeInfo:
    header: FileHeader
    n_events: int
    duplicates_dropped: int
    record_offsets: np.ndarray  # absolute, n_units + 1 entries
    timings: Timings = field(default_factory=Timings)


def _check_k(k: int) -> None:
    if not 0 <= k <= MAX_K:
        raise ValueError(f"Rice parameter k must be in [0, {MAX_K}]")


def _check_window(weights: ModelWeights, window: int | None) -> None:
    if window is not None and window != weights.window:
        raise ModelError(f"window {window} does not match the model's {weights.window}")
    if weights.window > 255:
        raise ModelError("the container stores the window in one byte")


def encode_with_info(events, geometry: SensorGeometry, weights: ModelWeights,
                     k: int = DEFAULT_K, window: int | None = None) -> tuple[bytes, EncodeInfo]:
    _check_k(k)
    _check_window(weights, window)
    kernels = _backend.kernels
    ev, starts, dropped = canonicalize(events, geometry)
    depth = required_depth(geometry)
    n_units = len(starts) - 1
    timings = Timings()

    t0 = time.perf_counter()
    nibbles, nib_starts = kernels.occupancy_batch(ev.x, ev.y, starts, depth)
    t1 = time.perf_counter()
    unit_t = ev.t[starts[:-1]]
    base = int(unit_t[0]) if n_units else 0
    dts = np.diff(unit_t, prepend=base).astype(np.uint64)
    body, offsets = kernels.encode_body(nibbles, nib_starts, (ev.p > 0).astype(np.uint8),
                                        starts, dts, weights, k)
    header = FileHeader(geometry.width, geometry.height, depth, k, weights.window,
                        weights.content_hash, n_units, base)
    data = header.pack() + body
    t2 = time.perf_counter()
    timings.quadtree += t1 - t0
    timings.coding += t2 - t1
    info = EncodeInfo(header, len(ev), dropped, offsets + HEADER_SIZE, timings)
    return data, info


def encode_stream(events, geometry: SensorGeometry, weights: ModelWeights,
                  k: int = DEFAULT_K, window: int | None = None) -> bytes:
    """Losslessly compress an event sequence."""
    return encode_with_info(events, geometry, weights, k, window)[0]


def read_header(data: bytes) -> FileHeader:
    return FileHeader.unpack(data)


def resolve_weights(header: FileHeader, weights: ModelWeights | None) -> ModelWeights:
    """Pick the model a stream was written with; ``None`` tries the built-in ones."""
    candidates = [weights] if weights is not None else [ModelWeights.zeros(header.window)]
    if weights is None:
        try:
            candidates.append(default_weights())
        except (FileNotFoundError, ModelError):  # pragma: no cover - packaging issue
            pass
    for cand in candidates:
        if cand.content_hash == header.model_hash:
            if cand.window != header.window:
                raise ModelError("model window disagrees with the stream header")
            return cand
    raise ModelError("stream was encoded with a different model (content hash mismatch)")


def _assemble(data: bytes, header: FileHeader, parsed, n_units: int,
              timings: Timings | None) -> EventArray:
    kernels = _backend.kernels
    nib_starts = parsed.nib_starts[:n_units + 1]
    t0 = time.perf_counter()
    xs, ys, coord_starts, err = kernels.reconstruct_batch(
        parsed.nibbles[:nib_starts[-1]], nib_starts, header.depth)
    t1 = time.perf_counter()
    if err is not None:
        raise CorruptStreamError(err[1], unit_index=err[0])
    counts = parsed.counts[:n_units]
    if not np.array_equal(np.diff(coord_starts), counts):
        raise CorruptStreamError("event count disagrees with the tree's leaf count")
    if len(xs) and (xs.max() >= header.width or ys.max() >= header.height):
        raise CorruptStreamError("decoded coordinate outside the sensor geometry")
    cum = np.cumsum(parsed.dts[:n_units], dtype=np.uint64) + np.uint64(header.base_timestamp)
    # deltas are < 2**63, so a wrapped uint64 sum shows up as a decrease
    if n_units and (np.any(cum[1:] <= cum[:-1]) or int(cum[-1]) > _INT64_MAX):
        raise CorruptStreamError("timestamp overflow")
    t = np.repeat(cum.astype(np.int64), counts)
    unit_of = np.repeat(np.arange(n_units), counts)
    local = np.arange(len(xs)) - np.repeat(coord_starts[:-1], counts)
    raw = np.frombuffer(data, dtype=np.uint8)
    byte = raw[parsed.pol_offsets[:n_units][unit_of] + (local >> 3)] if len(xs) else raw[:0]
    bits = (byte >> (7 - (local & 7)).astype(np.uint8)) & 1
    events = EventArray(t, xs, ys, polarities_from_bits(bits))
    if timings is not None:
        timings.quadtree += t1 - t0
        timings.coding += time.perf_counter() - t1
    return events


def decode_stream(data: bytes, weights: ModelWeights | None = None,
                  timings: Timings | None = None) -> EventArray:
    """Exact inverse of :func:`encode_stream`.

    On a corrupt payload raises :class:`CorruptStreamError` whose ``events``
    attribute holds the units decoded before the failure.
    """
    data = bytes(data)
    t0 = time.perf_counter()
    header = read_header(data)
    weights = resolve_weights(header, weights)
    parsed = _backend.kernels.parse_body(data, HEADER_SIZE, header.unit_count, header.depth,
                                         header.k, weights)
    if timings is not None:
        timings.coding += time.perf_counter() - t0
    n_ok = len(parsed.counts)
    if parsed.err is not None:
        unit, msg = parsed.err
        partial = _assemble(data, header, parsed, n_ok, None)
        raise CorruptStreamError(f"unit {unit}: {msg}", unit_index=unit, events=partial)
    if parsed.end != len(data):
        raise FormatError(f"{len(data) - parsed.end} trailing byte(s) after the last unit")
    return _assemble(data, header, parsed, n_ok, timings)


@dataclass(frozen=True)
class UnitSpan:
    """Byte offsets of one record: start, occupancy payload, polarity payload, end."""

    start: int
    occupancy: int
    polarity: int
    end: int


def unit_spans(data: bytes, weights: ModelWeights | None = None) -> list[UnitSpan]:
    """Walk the records of a stream, skipping each polarity payload by its event count."""
    data = bytes(data)
    header = read_header(data)
    weights = resolve_weights(header, weights)
    parsed = _backend.kernels.parse_body(data, HEADER_SIZE, header.unit_count, header.depth,
                                         header.k, weights)
    if parsed.err is not None:
        raise CorruptStreamError(f"unit {parsed.err[0]}: {parsed.err[1]}", unit_index=parsed.err[0])
    spans = []
    for u in range(len(parsed.counts)):
        start = int(parsed.record_offsets[u])
        _, pos = decode_varint(data, start)
        _, occ = decode_varint(data, pos)
        spans.append(UnitSpan(start, occ, int(parsed.pol_offsets[u]),
                              int(parsed.record_offsets[u + 1])))
    return spans


def unit_boundary_alignment(data: bytes, weights: ModelWeights | None = None) -> np.ndarray:
    """Start offset of every record plus the end of the stream."""
    spans = unit_spans(data, weights)
    return np.array([s.start for s in spans] + [spans[-1].end if spans else HEADER_SIZE],
                    dtype=np.int64)


# ----------------------------------------------------------- streaming sessions

class UnitEncoder:
    """Encodes coding units one at a time; holds the PMF window."""

    def __init__(self, geometry: SensorGeometry, weights: ModelWeights, k: int = DEFAULT_K):
        _check_k(k)
        self.geometry = geometry
        self.weights = weights
        self.k = k
        self.depth = required_depth(geometry)
        self.buffer = PmfBuffer(weights.window)
        self.prev_t: int | None = None

    def encode(self, unit: CodingUnit) -> bytes:
        if self.prev_t is not None and unit.t <= self.prev_t:
            raise ValueError("coding units must have strictly increasing timestamps")
        dt = 0 if self.prev_t is None else unit.t - self.prev_t
        stream = build_occupancy((unit.xs, unit.ys), self.depth)
        table = build_table(predict_scores(self.weights, self.buffer.as_model_input()))
        occ = BitWriter()
        encode_nibbles(stream.nibbles, table, self.k, occ)
        record = (encode_varint(dt) + encode_varint(len(unit)) + occ.getvalue()
                  + np.packbits(polarity_bits(unit)).tobytes())
        self.buffer.push(compute_pmf(stream))
        self.prev_t = unit.t
        return record


class UnitDecoder:
    def __init__(self, header: FileHeader, weights: ModelWeights):
        self.header = header
        self.weights = weights
        self.buffer = PmfBuffer(weights.window)
        self.t = header.base_timestamp

    def decode(self, data: bytes, pos: int) -> tuple[CodingUnit, int]:
        """Decode the record at ``pos``; returns the unit and the next record offset."""
        dt, pos = decode_varint(data, pos)
        count, pos = decode_varint(data, pos)
        if count == 0:
            raise CorruptStreamError("unit with zero events")
        table = build_table(predict_scores(self.weights, self.buffer.as_model_input()))
        reader = BitReader(data, pos)
        nibbles, level_count = [], 1
        for _ in range(self.header.depth):
            if level_count > count:
                raise CorruptStreamError("more tree nodes than events")
            level = decode_nibbles(reader, level_count, table, self.header.k)
            nibbles.append(level)
            level_count = int(sum(bin(s).count("1") for s in level.tolist()))
        if level_count != count:
            raise CorruptStreamError("event count disagrees with the tree's leaf count")
        stream = OccupancyStream(np.concatenate(nibbles), self.header.depth)
        pos = reader.byte_position
        end = pos + (count + 7) // 8
        if end > len(data):
            raise CorruptStreamError("polarity payload truncated")
        bits = np.unpackbits(np.frombuffer(data, np.uint8, count=end - pos, offset=pos))[:count]
        xs, ys = reconstruct_arrays(stream)
        self.t += dt
        self.buffer.push(compute_pmf(stream))
        return CodingUnit(self.t, xs, ys, polarities_from_bits(bits)), end
