import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evquad.bitio import BitReader, BitWriter, decode_varint, encode_varint
from evquad.entropy import (SubstitutionTable, build_table, code_length, decode_nibbles,
                            encode_nibbles, rank_order, rice_decode, rice_encode, rice_lengths,
                            rice_pack)
from evquad.errors import CorruptStreamError

from helpers import bits_of, random_pmf, rice_bits


def encoded(n, k):
    w = BitWriter()
    rice_encode(n, k, w)
    return w


def reader(bitstring):
    padded = bitstring + "0" * (-len(bitstring) % 8)
    data = int(padded, 2).to_bytes(len(padded) // 8, "big") if padded else b""
    return BitReader(data, nbytes=None)


class TestBitIO:
    @given(st.lists(st.tuples(st.integers(0, 2**40), st.integers(0, 40)), max_size=40))
    def test_write_then_read(self, fields):
        w = BitWriter()
        for v, n in fields:
            w.write_bits(v, n)
        total = sum(n for _, n in fields)
        assert w.bit_length == total
        r = BitReader(w.getvalue())
        for v, n in fields:
            assert r.read_bits(n) == v & ((1 << n) - 1)
        assert r.remaining == (-total) % 8

    def test_msb_first_and_zero_padding(self):
        w = BitWriter()
        w.write_bits(0b101, 3)
        assert w.getvalue() == bytes([0b10100000])

    def test_unary(self):
        w = BitWriter()
        w.write_unary(40)
        w.write_unary(0)
        assert bits_of(w.getvalue()).startswith("1" * 40 + "00")
        r = BitReader(w.getvalue())
        assert r.read_unary() == 40 and r.read_unary() == 0

    def test_align(self):
        w = BitWriter()
        w.write_bit(1)
        w.align()
        w.write_bit(1)
        assert w.getvalue() == b"\x80\x80"
        r = BitReader(b"\x80\x80")
        r.read_bit()
        r.align()
        assert r.bit_position == 8 and r.read_bit() == 1

    def test_reader_respects_declared_length(self):
        r = BitReader(b"\xff\xff", start=0, nbytes=1)
        r.read_bits(8)
        with pytest.raises(CorruptStreamError):
            r.read_bit()

    def test_unary_limit(self):
        with pytest.raises(CorruptStreamError):
            BitReader(b"\xff").read_unary(limit=3)


class TestVarint:
    @pytest.mark.parametrize("value,data", [(0, b"\x00"), (127, b"\x7f"), (128, b"\x80\x01"),
                                            (300, b"\xac\x02"), (2**64 - 1, b"\xff" * 9 + b"\x01")])
    def test_known_encodings(self, value, data):
        assert encode_varint(value) == data
        assert decode_varint(data, 0) == (value, len(data))

    @given(st.integers(0, 2**64 - 1), st.binary(max_size=4))
    def test_round_trip(self, value, prefix):
        data = prefix + encode_varint(value)
        assert decode_varint(data, len(prefix)) == (value, len(data))

    def test_errors(self):
        with pytest.raises(ValueError):
            encode_varint(-1)
        with pytest.raises(CorruptStreamError):
            decode_varint(b"\x80", 0)
        with pytest.raises(CorruptStreamError):
            decode_varint(b"\x80" * 11, 0)


class TestRice:
    @pytest.mark.parametrize("n,k,bits", [(5, 1, "1101"), (0, 1, "00"), (3, 0, "1110"),
                                          (8, 1, "111100")])
    def test_examples(self, n, k, bits):
        w = encoded(n, k)
        assert w.bit_length == len(bits)
        assert bits_of(w.getvalue())[:len(bits)] == bits
        assert rice_decode(reader(bits), k) == n

    @pytest.mark.parametrize("n,k,length", [(0, 1, 2), (5, 1, 4), (15, 1, 9)])
    def test_code_length(self, n, k, length):
        assert code_length(n, k) == length

    @pytest.mark.parametrize("k", range(9))
    def test_matches_definition(self, k):
        for n in range(64):
            w = encoded(n, k)
            want = rice_bits(n, k)
            nbits = w.bit_length
            assert bits_of(w.getvalue())[:nbits] == want
            assert code_length(n, k) == len(want)

    def test_negative(self):
        with pytest.raises(ValueError):
            encoded(-1, 1)

    def test_exhausted_mid_codeword(self):
        with pytest.raises(CorruptStreamError):
            rice_decode(BitReader(b"\xff"), 1)
        with pytest.raises(CorruptStreamError):
            rice_decode(BitReader(b"\xfe", nbytes=1), 2)  # delimiter at bit 7, remainder missing

    @given(st.lists(st.integers(0, 40), max_size=200), st.integers(0, 8))
    def test_vectorized_pack_matches_scalar(self, values, k):
        w = BitWriter()
        for v in values:
            rice_encode(v, k, w)
        assert rice_lengths(values, k).sum() == w.bit_length
        assert rice_pack(values, k) == w.getvalue()


class TestTable:
    def test_example_with_ties(self):
        p = np.zeros(16)
        p[8], p[12], p[10] = 0.5, 0.3, 0.2
        t = build_table(p)
        assert t.rank_of[8] == 0 and t.rank_of[12] == 1 and t.rank_of[10] == 2
        rest = [s for s in range(16) if s not in (8, 12, 10)]
        assert [int(t.rank_of[s]) for s in rest] == list(range(3, 16))

    def test_uniform_is_identity(self):
        assert build_table(np.full(16, 1 / 16)) == SubstitutionTable.identity()

    def test_one_hot(self):
        p = np.zeros(16)
        p[15] = 1
        assert build_table(p).rank_of[15] == 0

    def test_rank_order_validation(self):
        with pytest.raises(ValueError):
            rank_order(np.zeros(15))
        with pytest.raises(ValueError):
            rank_order(np.full(16, np.nan))

    @given(st.lists(st.floats(0, 1), min_size=16, max_size=16))
    def test_bijection(self, scores):
        t = build_table(np.array(scores))
        assert sorted(t.rank_of.tolist()) == list(range(16))
        assert t.rank_of[t.symbol_of].tolist() == list(range(16))
        assert t.symbol_of[t.rank_of].tolist() == list(range(16))

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_optimal_under_pairwise_swaps(self, k):
        rng = np.random.default_rng(k)
        for _ in range(200):
            p = random_pmf(rng)
            t = build_table(p)
            lengths = np.array([code_length(int(r), k) for r in range(16)])
            base = float(p @ lengths[t.rank_of])
            for a, b in itertools.combinations(range(16), 2):
                ranks = t.rank_of.copy()
                ranks[a], ranks[b] = ranks[b], ranks[a]
                assert base <= float(p @ lengths[ranks]) + 1e-12


class TestNibbles:
    def test_one_hot_table(self):
        p = np.zeros(16)
        p[8] = 1
        w = BitWriter()
        encode_nibbles([8], build_table(p), 1, w)
        assert w.bit_length == 2 and w.getvalue() == b"\x00"

    def test_identity_table(self):
        w = BitWriter()
        encode_nibbles([8], SubstitutionTable.identity(), 1, w)
        assert w.bit_length == 6
        assert w.getvalue() == bytes([0b11110000])

    @given(st.lists(st.integers(1, 15), max_size=100), st.integers(0, 8), st.integers(0, 2**32 - 1))
    def test_round_trip(self, nibbles, k, seed):
        table = build_table(random_pmf(np.random.default_rng(seed)))
        w = BitWriter()
        encode_nibbles(nibbles, table, k, w)
        out = decode_nibbles(BitReader(w.getvalue()), len(nibbles), table, k)
        assert out.tolist() == nibbles

    def test_rejects_zero_symbol(self):
        with pytest.raises(ValueError):
            encode_nibbles([0], SubstitutionTable.identity(), 1, BitWriter())
        w = BitWriter()
        rice_encode(0, 1, w)  # rank 0 is symbol 0 under the identity table
        with pytest.raises(CorruptStreamError):
            decode_nibbles(BitReader(w.getvalue()), 1, SubstitutionTable.identity(), 1)

    def test_k_range(self):
        with pytest.raises(ValueError):
            encode_nibbles([1], SubstitutionTable.identity(), 9, BitWriter())


def test_varint_rejects_values_beyond_64_bits():
    with pytest.raises(CorruptStreamError):
        decode_varint(b"\xff" * 9 + b"\x02", 0)
