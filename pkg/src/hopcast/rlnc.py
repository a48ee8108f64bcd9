"""Random linear network coding over GF(2^8) (polynomial 0x11B).

Payloads and coefficient vectors are ``uint8`` numpy arrays.  Addition is
XOR; multiplication goes through log/antilog tables built on generator 3.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

POLY = 0x11B
GENERATION = 16
SYMBOLS = 64


class RankError(ValueError):
    """Not enough independent packets to decode."""

    def __init__(self, rank: int, needed: int):
        super().__init__(f"insufficient rank {rank} of {needed}")
        self.rank = rank
        self.needed = needed


def _slow_mul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= POLY
        b >>= 1
    return r


def _tables():
    exp = np.zeros(512, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int64)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x = _slow_mul(x, 3)
    exp[255:510] = exp[:255]
    return exp, log


EXP, LOG = _tables()
# full 256x256 product table: 64 KiB, makes vector ops a single gather
MUL = np.zeros((256, 256), dtype=np.uint8)
MUL[1:, 1:] = EXP[LOG[1:, None] + LOG[None, 1:]]
INV = np.zeros(256, dtype=np.uint8)
INV[1:] = EXP[255 - LOG[1:]]


def field_mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def field_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(INV[a])


def combine(coeffs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """``sum_i coeffs[i] * rows[i]`` over the field."""
    prod = MUL[np.asarray(coeffs, dtype=np.uint8)[:, None], np.asarray(rows, dtype=np.uint8)]
    return np.bitwise_xor.reduce(prod, axis=0) if len(prod) else np.zeros(rows.shape[1:], np.uint8)


@dataclass(frozen=True)
class CodedPacket:
    coeffs: np.ndarray
    payload: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.uint8))
        object.__setattr__(self, "payload", np.asarray(self.payload, dtype=np.uint8))

    @property
    def G(self) -> int:
        return len(self.coeffs)

    @property
    def S(self) -> int:
        return len(self.payload)

    def to_bytes(self) -> bytes:
        return struct.pack(">HH", self.G, self.S) + self.coeffs.tobytes() + self.payload.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodedPacket":
        if len(data) < 4:
            raise ValueError("truncated packet header")
        G, S = struct.unpack(">HH", data[:4])
        if len(data) != 4 + G + S:
            raise ValueError(f"expected {4 + G + S} bytes, got {len(data)}")
        body = np.frombuffer(data, dtype=np.uint8, offset=4)
        return cls(body[:G].copy(), body[G:].copy())

    def __eq__(self, other):
        if not isinstance(other, CodedPacket):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs) and np.array_equal(self.payload, other.payload)


def _stack(payloads) -> np.ndarray:
    rows = [np.asarray(p, dtype=np.uint8) for p in payloads]
    if not rows:
        raise ValueError("empty generation")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("payload length mismatch")
    return np.stack(rows)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def encode(sources, seed=None, coeffs=None) -> CodedPacket:
    """Random combination of the generation's source payloads."""
    rows = _stack(sources)
    if coeffs is None:
        coeffs = _rng(seed).integers(0, 256, size=len(rows), dtype=np.uint8)
    coeffs = np.asarray(coeffs, dtype=np.uint8)
    if len(coeffs) != len(rows):
        raise ValueError("one coefficient per source packet")
    return CodedPacket(coeffs, combine(coeffs, rows))


def recode(packets, seed=None, weights=None) -> CodedPacket:
    """Random combination of coded packets; header follows the same combination."""
    packets = list(packets)
    _check_dims(packets)
    if weights is None:
        weights = _rng(seed).integers(0, 256, size=len(packets), dtype=np.uint8)
    weights = np.asarray(weights, dtype=np.uint8)
    if len(weights) != len(packets):
        raise ValueError("one weight per packet")
    C = np.stack([p.coeffs for p in packets])
    P = np.stack([p.payload for p in packets])
    return CodedPacket(combine(weights, C), combine(weights, P))


def _check_dims(packets):
    if not packets:
        raise ValueError("no packets")
    G, S = packets[0].G, packets[0].S
    if any(p.G != G or p.S != S for p in packets):
        raise ValueError("inconsistent packet dimensions")


def _eliminate(M: np.ndarray, ncols: int) -> int:
    """In-place Gauss-Jordan on the first ``ncols`` columns; returns the rank."""
    r = 0
    for c in range(ncols):
        nz = np.flatnonzero(M[r:, c])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            M[[r, p]] = M[[p, r]]
        M[r] = MUL[INV[M[r, c]], M[r]]
        others = np.flatnonzero(M[:, c])
        others = others[others != r]
        if others.size:
            M[others] ^= MUL[M[others, c][:, None], M[r][None, :]]
        r += 1
        if r == len(M):
            break
    return r


def rank(packets) -> int:
    packets = list(packets)
    if not packets:
        return 0
    _check_dims(packets)
    M = np.stack([p.coeffs for p in packets]).copy()
    return _eliminate(M, M.shape[1])


def decode(packets) -> list[np.ndarray]:
    """Recover the G source payloads, or raise :class:`RankError` with the current rank."""
    packets = list(packets)
    _check_dims(packets)
    G = packets[0].G
    M = np.stack([np.concatenate([p.coeffs, p.payload]) for p in packets])
    r = _eliminate(M, G)
    if r < G:
        raise RankError(r, G)
    return [M[i, G:].copy() for i in range(G)]


class Decoder:
    """Incremental receiver that keeps only innovative packets."""

    def __init__(self, G: int = GENERATION, S: int = SYMBOLS):
        self.G, self.S = G, S
        self._rows = np.zeros((0, G + S), dtype=np.uint8)

    @property
    def rank(self) -> int:
        return len(self._rows)

    @property
    def complete(self) -> bool:
        return self.rank == self.G

    def add(self, pkt: CodedPacket) -> bool:
        """Returns True if the packet raised the rank."""
        if pkt.G != self.G or pkt.S != self.S:
            raise ValueError("inconsistent packet dimensions")
        M = np.vstack([self._rows, np.concatenate([pkt.coeffs, pkt.payload])[None]])
        r = _eliminate(M, self.G)
        if r == self.rank:
            return False
        self._rows = M[:r]
        return True

    def payloads(self) -> list[np.ndarray]:
        if not self.complete:
            raise RankError(self.rank, self.G)
        return [self._rows[i, self.G:].copy() for i in range(self.G)]
