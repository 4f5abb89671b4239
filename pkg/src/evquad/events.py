"""Event ingestion, validation and segmentation into per-timestamp coding units.

Events are kept columnar (:class:`EventArray`) because sequences routinely hold
millions of them; :class:`Event` is the scalar view used at API edges.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import BoundsError, DuplicateEventError, OrderingError, ParseError

log = logging.getLogger(__name__)

EVT2_BITS_PER_EVENT = 32
MAX_DIMENSION = 65535
RAW32_COORD_BITS = 14
_RAW32_COORD_MASK = (1 << RAW32_COORD_BITS) - 1


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        for name in ("width", "height"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 1 <= v <= MAX_DIMENSION:
                raise ValueError(f"{name} must be an integer in [1, {MAX_DIMENSION}], got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "SensorGeometry":
        """Parse ``"640x480"``."""
        try:
            w, h = text.lower().split("x")
            return cls(int(w), int(h))
        except ValueError as exc:
            raise ValueError(f"bad geometry {text!r}, expected WIDTHxHEIGHT") from exc

    def __str__(self):
        return f"{self.width}x{self.height}"


class EventArray:
    """Columnar event storage: ``t`` (int64 µs), ``x``/``y`` (int64), ``p`` (int8, ±1)."""

    __slots__ = ("t", "x", "y", "p")

    def __init__(self, t, x, y, p):
        self.t = np.ascontiguousarray(t, dtype=np.int64)
        self.x = np.ascontiguousarray(x, dtype=np.int64)
        self.y = np.ascontiguousarray(y, dtype=np.int64)
        self.p = np.ascontiguousarray(p, dtype=np.int8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns must have equal length")

    @classmethod
    def empty(cls) -> "EventArray":
        return cls([], [], [], [])

    @classmethod
    def from_events(cls, events: Iterable[Event] | "EventArray") -> "EventArray":
        if isinstance(events, EventArray):
            return events
        rows = list(events)
        if not rows:
            return cls.empty()
        t, x, y, p = zip(*rows)
        return cls(t, x, y, p)

    def __len__(self):
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(*row)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Event(int(self.t[idx]), int(self.x[idx]), int(self.y[idx]), int(self.p[idx]))
        return EventArray(self.t[idx], self.x[idx], self.y[idx], self.p[idx])

    def __eq__(self, other):
        if not isinstance(other, EventArray):
            return NotImplemented
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in self.__slots__)

    def __repr__(self):
        return f"EventArray(n={len(self)})"

    def tolist(self) -> list[Event]:
        return list(self)


def _as_array(events) -> EventArray:
    return events if isinstance(events, EventArray) else EventArray.from_events(events)


def validate(events: EventArray, geometry: SensorGeometry | None = None) -> None:
    """Check polarity, sign, ordering and (optionally) bounds of every event."""
    if len(events) == 0:
        return
    bad = np.flatnonzero((events.p != 1) & (events.p != -1))
    if bad.size:
        raise ValueError(f"event {bad[0]}: polarity must be +1 or -1, got {events.p[bad[0]]}")
    for col in ("t", "x", "y"):
        neg = np.flatnonzero(getattr(events, col) < 0)
        if neg.size:
            raise BoundsError(f"event {neg[0]}: negative {col}")
    dec = np.flatnonzero(np.diff(events.t) < 0)
    if dec.size:
        i = int(dec[0]) + 1
        raise OrderingError(f"event {i}: timestamp {events.t[i]} < previous {events.t[i - 1]}")
    if geometry is not None:
        oob = np.flatnonzero((events.x >= geometry.width) | (events.y >= geometry.height))
        if oob.size:
            i = int(oob[0])
            raise BoundsError(
                f"event {i}: ({events.x[i]}, {events.y[i]}) outside {geometry}")


# --------------------------------------------------------------------------- io

def _parse_csv(data: bytes) -> EventArray:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if not text.strip():
        return EventArray.empty()
    try:
        arr = np.loadtxt(io.StringIO(text), delimiter=",", dtype=np.int64, ndmin=2)
        if arr.shape[1] != 4:
            raise ValueError
    except ValueError:
        _locate_csv_error(data if isinstance(data, bytes) else text.encode())
        raise  # pragma: no cover - _locate_csv_error always raises
    return EventArray(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def _locate_csv_error(data: bytes) -> None:
    offset = 0
    for line in data.split(b"\n"):
        stripped = line.strip()
        if stripped:
            fields = stripped.split(b",")
            try:
                if len(fields) != 4:
                    raise ValueError
                [int(f) for f in fields]
            except ValueError:
                raise ParseError(f"malformed CSV record {line[:40]!r}", offset) from None
        offset += len(line) + 1
    raise ParseError("malformed CSV input", 0)


def _parse_raw32(data: bytes, timestamps: bytes | None) -> EventArray:
    if len(data) % 4:
        raise ParseError("raw32 payload length is not a multiple of 4", len(data) - len(data) % 4)
    words = np.frombuffer(data, dtype="<u4")
    if timestamps is None:
        raise ParseError("raw32 input requires a timestamp sidecar", 0)
    if len(timestamps) != 8 * len(words):
        raise ParseError(
            f"timestamp sidecar holds {len(timestamps) / 8:g} entries for {len(words)} records",
            min(len(timestamps), 8 * len(words)))
    reserved = np.flatnonzero(words >> 29)
    if reserved.size:
        raise ParseError("reserved bits set in raw32 record", 4 * int(reserved[0]))
    t = np.frombuffer(timestamps, dtype="<u8")
    if t.size and t.max() > np.iinfo(np.int64).max:
        raise ParseError("timestamp overflows int64", 8 * int(np.argmax(t)))
    x = words & _RAW32_COORD_MASK
    y = (words >> RAW32_COORD_BITS) & _RAW32_COORD_MASK
    p = np.where((words >> 28) & 1, 1, -1)
    return EventArray(t.astype(np.int64), x, y, p)


def parse_events(data: bytes, format: str = "csv", *, timestamps: bytes | None = None,
                 geometry: SensorGeometry | None = None) -> EventArray:
    """Parse ``csv`` (``t,x,y,p`` lines) or ``raw32`` records (+ timestamp sidecar).

    Events come back in file order after ordering/bounds validation.
    """
    if format == "csv":
        events = _parse_csv(data)
    elif format == "raw32":
        events = _parse_raw32(data, timestamps)
    else:
        raise ValueError(f"unknown input format {format!r}")
    validate(events, geometry)
    return events


def to_csv(events) -> bytes:
    events = _as_array(events)
    if len(events) == 0:
        return b""
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack([events.t, events.x, events.y, events.p]),
               fmt="%d", delimiter=",", newline="\n")
    return buf.getvalue().encode("utf-8")


def to_raw32(events) -> tuple[bytes, bytes]:
    """Serialize to raw32 records and the little-endian u64 timestamp sidecar."""
    events = _as_array(events)
    if len(events) and (events.x.max() > _RAW32_COORD_MASK or events.y.max() > _RAW32_COORD_MASK):
        raise BoundsError("raw32 coordinates are limited to 14 bits")
    words = (events.x.astype(np.uint32)
             | (events.y.astype(np.uint32) << RAW32_COORD_BITS)
             | ((events.p > 0).astype(np.uint32) << 28))
    return words.astype("<u4").tobytes(), events.t.astype("<u8").tobytes()


# ------------------------------------------------------------------ segmentation

@dataclass(frozen=True, eq=False)
class CodingUnit:
    """All events of one timestamp, coordinates strictly increasing in (x, y)."""

    t: int
    xs: np.ndarray
    ys: np.ndarray
    polarities: np.ndarray

    def __post_init__(self):
        n = len(self.xs)
        if n == 0 or len(self.ys) != n or len(self.polarities) != n:
            raise ValueError("coding unit needs >= 1 event and equal-length columns")

    @property
    def coords(self) -> list[tuple[int, int]]:
        return list(zip(self.xs.tolist(), self.ys.tolist()))

    def __len__(self):
        return len(self.xs)


class CanonicalEvents(NamedTuple):
    events: EventArray  # sorted by (t, x, y), duplicates removed
    unit_starts: np.ndarray  # len == n_units + 1
    duplicates_dropped: int


def canonicalize(events, geometry: SensorGeometry | None = None) -> CanonicalEvents:
    """Sort events within each timestamp by (x, y) and drop exact duplicates.

    Same (t, x, y) with conflicting polarity raises :class:`DuplicateEventError`.
    """
    events = _as_array(events)
    validate(events, geometry)
    if len(events) == 0:
        return CanonicalEvents(events, np.zeros(1, dtype=np.int64), 0)
    order = np.lexsort((events.y, events.x, events.t))
    ev = events[order]
    same = (ev.t[1:] == ev.t[:-1]) & (ev.x[1:] == ev.x[:-1]) & (ev.y[1:] == ev.y[:-1])
    dropped = int(same.sum())
    if dropped:
        conflict = np.flatnonzero(same & (ev.p[1:] != ev.p[:-1]))
        if conflict.size:
            i = int(conflict[0])
            raise DuplicateEventError(
                f"conflicting polarities at t={ev.t[i]}, x={ev.x[i]}, y={ev.y[i]}")
        keep = np.concatenate([[True], ~same])
        ev = ev[keep]
        log.warning("dropped %d duplicate event(s)", dropped)
    boundaries = np.flatnonzero(ev.t[1:] != ev.t[:-1]) + 1
    starts = np.concatenate([[0], boundaries, [len(ev)]]).astype(np.int64)
    return CanonicalEvents(ev, starts, dropped)


class Segmentation(NamedTuple):
    units: list[CodingUnit]
    duplicates_dropped: int


def segment(events, geometry: SensorGeometry | None = None) -> Segmentation:
    ev, starts, dropped = canonicalize(events, geometry)
    units = [
        CodingUnit(int(ev.t[a]), ev.x[a:b], ev.y[a:b], ev.p[a:b])
        for a, b in zip(starts[:-1].tolist(), starts[1:].tolist())
    ]
    return Segmentation(units, dropped)


def segment_into_units(events, geometry: SensorGeometry | None = None) -> list[CodingUnit]:
    return segment(events, geometry).units


def polarity_bits(unit: CodingUnit | Sequence[int]) -> np.ndarray:
    """Bit ``i`` is 1 iff event ``i`` of the unit has positive polarity."""
    pol = unit.polarities if isinstance(unit, CodingUnit) else np.asarray(unit)
    if len(pol) == 0:
        raise ValueError("a coding unit always holds at least one polarity")
    return (np.asarray(pol) > 0).astype(np.uint8)


def polarities_from_bits(bits) -> np.ndarray:
    return np.where(np.asarray(bits, dtype=np.uint8) != 0, 1, -1).astype(np.int8)


def evt2_size_bits(n_events: int) -> int:
    if n_events < 0:
        raise ValueError("event count must be non-negative")
    return EVT2_BITS_PER_EVENT * n_events
