"""MSB-first bit I/O and LEB128 varints."""
from __future__ import annotations

from .errors import CorruptStreamError


class BitWriter:
    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0  # bits pending in _acc, always < 8 between calls

    def write_bit(self, bit: int) -> None:
        self.write_bits(bit & 1, 1)

    def write_bits(self, value: int, count: int) -> None:
        """Append the low ``count`` bits of ``value``, most significant first."""
        if count <= 0:
            return
        self._acc = (self._acc << count) | (value & ((1 << count) - 1))
        self._nbits += count
        while self._nbits >= 8:
            self._nbits -= 8
            self._buf.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def write_unary(self, q: int) -> None:
        """``q`` one-bits followed by a zero delimiter."""
        while q >= 32:
            self.write_bits(0xFFFFFFFF, 32)
            q -= 32
        self.write_bits(((1 << q) - 1) << 1, q + 1)

    def align(self) -> None:
        if self._nbits:
            self._buf.append((self._acc << (8 - self._nbits)) & 0xFF)
            self._acc = 0
            self._nbits = 0

    def getvalue(self) -> bytes:
        """Zero-pad the trailing partial byte and return everything written."""
        self.align()
        return bytes(self._buf)

    @property
    def bit_length(self) -> int:
        return 8 * len(self._buf) + self._nbits


class BitReader:
    """Reads at most ``nbytes`` bytes starting at byte offset ``start``."""

    def __init__(self, data: bytes, start: int = 0, nbytes: int | None = None):
        self._data = data
        self._pos = start * 8
        end = len(data) if nbytes is None else min(len(data), start + nbytes)
        self._end = end * 8

    def read_bit(self) -> int:
        if self._pos >= self._end:
            raise CorruptStreamError("bitstream exhausted")
        byte = self._data[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def read_bits(self, count: int) -> int:
        value = 0
        for _ in range(count):
            value = (value << 1) | self.read_bit()
        return value

    def read_unary(self, limit: int | None = None) -> int:
        q = 0
        while self.read_bit():
            q += 1
            if limit is not None and q > limit:
                raise CorruptStreamError(f"unary run longer than {limit}")
        return q

    def align(self) -> None:
        self._pos = (self._pos + 7) & ~7

    @property
    def bit_position(self) -> int:
        return self._pos

    @property
    def byte_position(self) -> int:
        return (self._pos + 7) >> 3

    @property
    def remaining(self) -> int:
        return self._end - self._pos


def encode_varint(value: int) -> bytes:
    """Unsigned LEB128: 7 bits per byte, least significant group first."""
    if value < 0:
        raise ValueError("varints are unsigned")
    out = bytearray()
    while value > 0x7F:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    out.append(value)
    return bytes(out)


def decode_varint(data: bytes, pos: int, max_bytes: int = 10) -> tuple[int, int]:
    """Return ``(value, new_pos)``."""
    value = shift = 0
    for i in range(max_bytes):
        if pos + i >= len(data):
            raise CorruptStreamError("truncated varint")
        b = data[pos + i]
        value |= (b & 0x7F) << shift
        if not b & 0x80:
            if value >> 64:
                raise CorruptStreamError("varint overflows 64 bits")
            return value, pos + i + 1
        shift += 7
    raise CorruptStreamError("varint longer than %d bytes" % max_bytes)
