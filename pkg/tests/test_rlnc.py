from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import gf_mul_ref
from hopcast.rlnc import (GENERATION, SYMBOLS, CodedPacket, Decoder, RankError, combine, decode,
                          encode, field_inv, field_mul, rank, recode)


def ref_combine(coeffs, rows):
    out = [0] * len(rows[0])
    for c, row in zip(coeffs, rows):
        for i, x in enumerate(row):
            out[i] ^= gf_mul_ref(int(c), int(x))
    return out


def sources(G, S, seed):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, S, dtype=np.uint8) for _ in range(G)]


def test_multiplication_table_matches_reference(gf_table):
    table = np.array([[field_mul(a, b) for b in range(256)] for a in range(256)], dtype=np.uint8)
    assert np.array_equal(table, gf_table)


def test_known_products():
    assert field_mul(0x53, 0xCA) == 0x01
    assert field_mul(0x57, 0x83) == 0xC1
    assert all(field_mul(a, 1) == a for a in range(256))
    assert all(field_mul(a, 0) == 0 for a in range(256))


def test_inverses():
    assert all(field_mul(a, field_inv(a)) == 1 for a in range(1, 256))
    with pytest.raises(ZeroDivisionError):
        field_inv(0)


def test_distributive_over_xor():
    rng = np.random.default_rng(0)
    for a, b, c in rng.integers(0, 256, size=(5000, 3)):
        assert field_mul(a, b ^ c) == field_mul(a, b) ^ field_mul(a, c)


def test_single_packet_with_unit_coefficient_is_identity():
    src = sources(1, SYMBOLS, 1)
    pkt = encode(src, coeffs=[1])
    assert np.array_equal(pkt.payload, src[0])


def test_two_packet_combination_by_hand():
    src = [np.array([0x57, 0x01, 0xFF], dtype=np.uint8), np.array([0x83, 0x02, 0x10], dtype=np.uint8)]
    pkt = encode(src, seed=3)
    assert pkt.payload.tolist() == ref_combine(pkt.coeffs, src)
    fixed = encode(src, coeffs=[2, 3])
    # 2*0x57 = 0xAE, 3*0x83 = 0x83 ^ 0x1D = 0x9E
    assert fixed.payload[0] == 0xAE ^ 0x9E


def test_coefficients_are_redrawn():
    rng = np.random.default_rng(5)
    src = sources(GENERATION, 8, 5)
    coeffs = {encode(src, rng).coeffs.tobytes() for _ in range(GENERATION)}
    assert len(coeffs) == GENERATION


def test_encode_checks():
    with pytest.raises(ValueError):
        encode([])
    with pytest.raises(ValueError):
        encode([np.zeros(3, np.uint8), np.zeros(4, np.uint8)])
    with pytest.raises(ValueError):
        encode(sources(2, 4, 0), coeffs=[1])


def test_full_rank_round_trip():
    src = sources(GENERATION, SYMBOLS, 2)
    rng = np.random.default_rng(2)
    pkts = [encode(src, rng) for _ in range(GENERATION)]
    assert rank(pkts) == GENERATION
    out = decode(pkts)
    assert all(np.array_equal(a, b) for a, b in zip(out, src))


def test_duplicate_packet_is_rank_one():
    src = sources(2, 8, 4)
    pkt = encode(src, coeffs=[7, 9])
    with pytest.raises(RankError) as exc:
        decode([pkt, pkt])
    assert exc.value.rank == 1 and exc.value.needed == 2


def test_decode_dimension_checks():
    a = encode(sources(2, 8, 0), seed=0)
    b = encode(sources(3, 8, 0), seed=0)
    with pytest.raises(ValueError):
        decode([a, b])
    with pytest.raises(ValueError):
        decode([])


@pytest.mark.parametrize("G", range(1, 9))
def test_round_trip_permuted_unit_vectors(G):
    src = sources(G, 5, G)
    eye = np.eye(G, dtype=np.uint8)
    for perm in itertools.islice(itertools.permutations(range(G)), 50):
        pkts = [encode(src, coeffs=eye[i]) for i in perm]
        assert all(np.array_equal(a, b) for a, b in zip(decode(pkts), src))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 16), st.integers(0, 10**6))
def test_round_trip_random(G, S, seed):
    rng = np.random.default_rng(seed)
    src = sources(G, S, seed)
    pkts = [encode(src, rng) for _ in range(G + 2)]
    if rank(pkts) < G:
        with pytest.raises(RankError):
            decode(pkts)
        return
    assert all(np.array_equal(a, b) for a, b in zip(decode(pkts), src))


def test_recode_closure():
    src = sources(4, 16, 9)
    rng = np.random.default_rng(9)
    pkts = [encode(src, rng) for _ in range(3)]
    w = np.array([5, 0, 200], dtype=np.uint8)
    mixed = recode(pkts, weights=w)
    assert mixed.coeffs.tolist() == ref_combine(w, [p.coeffs for p in pkts])
    # the header still describes the payload in terms of the sources
    assert mixed.payload.tolist() == ref_combine(mixed.coeffs, src)
    assert recode(pkts, seed=1).payload.tolist() == ref_combine(recode(pkts, seed=1).coeffs, src)


def test_full_rank_probability():
    rng = np.random.default_rng(2024)
    src = sources(GENERATION, 1, 0)
    full = sum(rank([encode(src, rng) for _ in range(GENERATION)]) == GENERATION for _ in range(1000))
    assert full >= 990


def test_incremental_decoder():
    src = sources(GENERATION, SYMBOLS, 8)
    rng = np.random.default_rng(8)
    dec = Decoder()
    pkts = [encode(src, rng) for _ in range(GENERATION)]
    assert dec.add(pkts[0]) and not dec.add(pkts[0])
    with pytest.raises(RankError):
        dec.payloads()
    for p in pkts[1:]:
        dec.add(p)
    while not dec.complete:
        dec.add(encode(src, rng))
    assert all(np.array_equal(a, b) for a, b in zip(dec.payloads(), src))


def test_wire_format_golden():
    pkt = CodedPacket([1, 2], [3, 4, 5])
    assert pkt.to_bytes() == bytes.fromhex("0002 0003 0102 030405")
    assert CodedPacket.from_bytes(pkt.to_bytes()) == pkt
    with pytest.raises(ValueError):
        CodedPacket.from_bytes(b"\x00\x02")
    with pytest.raises(ValueError):
        CodedPacket.from_bytes(pkt.to_bytes() + b"\x00")


def test_combine_empty():
    assert combine(np.zeros(0, np.uint8), np.zeros((0, 4), np.uint8)).tolist() == [0, 0, 0, 0]
