"""Bit-exact context-adaptive binary arithmetic coder.

The engine is a 32-bit range coder with byte renormalization and explicit
carry propagation (cache byte + pending-0xFF counter).  Probabilities enter
as 16-bit integers ``q`` with ``P(bit=1) = q / 65536`` and ``q in [1, 65535]``,
so every state transition is integer arithmetic and the encoder/decoder pair
is deterministic across platforms.

Layout of the state vectors shared with the numba kernels:

    encoder: [low, range, cache, cache_size, out_len]
    decoder: [code, range, pos]

All values fit comfortably in int64 (``range * q < 2**48``), which avoids
numba's unsigned/signed promotion pitfalls.  Decoding past the end of the
buffer reads zero bytes instead of raising, so a decoder driven with a
mismatched probability sequence returns garbage but never crashes; framing
errors are the container's job.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import VxpcError

PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS  # q is P(1) * PROB_ONE
Q_MIN = 1
Q_MAX = PROB_ONE - 1
Q_HALF = PROB_ONE // 2

_TOP = 1 << 24
_MASK32 = (1 << 32) - 1

# encoder state indices
_LOW, _RANGE, _CACHE, _NCACHE, _OUTLEN = 0, 1, 2, 3, 4
# decoder state indices
_CODE, _DRANGE, _POS = 0, 1, 2


@njit(cache=True)
def _shift_low(st, out):
    low = st[_LOW]
    if low < 0xFF000000 or low > _MASK32:
        carry = low >> 32
        out[st[_OUTLEN]] = (st[_CACHE] + carry) & 0xFF
        st[_OUTLEN] += 1
        for _ in range(st[_NCACHE] - 1):
            out[st[_OUTLEN]] = (0xFF + carry) & 0xFF
            st[_OUTLEN] += 1
        st[_NCACHE] = 0
        st[_CACHE] = (low >> 24) & 0xFF
    st[_NCACHE] += 1
    st[_LOW] = (low << 8) & _MASK32


@njit(cache=True)
def _encode_bit(st, out, bit, q):
    r1 = (st[_RANGE] * q) >> PROB_BITS
    if bit:
        st[_RANGE] = r1
    else:
        st[_LOW] += r1
        st[_RANGE] -= r1
    while st[_RANGE] < _TOP:
        st[_RANGE] <<= 8
        _shift_low(st, out)


@njit(cache=True)
def _decode_bit(st, data, q):
    r1 = (st[_DRANGE] * q) >> PROB_BITS
    if st[_CODE] < r1:
        bit = 1
        st[_DRANGE] = r1
    else:
        bit = 0
        st[_CODE] -= r1
        st[_DRANGE] -= r1
    while st[_DRANGE] < _TOP:
        st[_DRANGE] <<= 8
        b = data[st[_POS]] if st[_POS] < len(data) else 0
        st[_POS] += 1
        st[_CODE] = ((st[_CODE] << 8) | b) & _MASK32
    return bit


@njit(cache=True)
def _adaptive_q(n0, n1):
    q = ((n1 + 1) << PROB_BITS) // (n0 + n1 + 2)
    if q < Q_MIN:
        q = Q_MIN
    elif q > Q_MAX:
        q = Q_MAX
    return q


@njit(cache=True)
def _encode_bits(st, out, bits, qs):
    for i in range(len(bits)):
        _encode_bit(st, out, bits[i], qs[i])


@njit(cache=True)
def _encode_bits_uniform(st, out, bits):
    for i in range(len(bits)):
        _encode_bit(st, out, bits[i], Q_HALF)


@njit(cache=True)
def _encode_bits_adaptive(st, out, bits, counts):
    for i in range(len(bits)):
        b = bits[i]
        _encode_bit(st, out, b, _adaptive_q(counts[0], counts[1]))
        counts[b] += 1


@njit(cache=True)
def _decode_bits(st, data, qs, bits):
    for i in range(len(qs)):
        bits[i] = _decode_bit(st, data, qs[i])


@njit(cache=True)
def _decode_bits_uniform(st, data, bits):
    for i in range(len(bits)):
        bits[i] = _decode_bit(st, data, Q_HALF)


@njit(cache=True)
def _decode_bits_adaptive(st, data, bits, counts):
    for i in range(len(bits)):
        b = _decode_bit(st, data, _adaptive_q(counts[0], counts[1]))
        bits[i] = b
        counts[b] += 1


def _check_q(q):
    if not Q_MIN <= q <= Q_MAX:
        raise VxpcError(f"probability {q} outside [{Q_MIN}, {Q_MAX}]")


class RangeEncoder:
    """Streaming binary arithmetic encoder."""

    def __init__(self, capacity: int = 1 << 12):
        self._st = np.zeros(5, dtype=np.int64)
        self._st[_RANGE] = _MASK32
        self._st[_NCACHE] = 1
        self._buf = np.empty(max(capacity, 64), dtype=np.uint8)
        self._flushed = None

    def _reserve(self, nsym: int) -> None:
        # worst case < 3 bytes per symbol plus flush slack
        need = int(self._st[_OUTLEN]) + 3 * nsym + 16
        if need > len(self._buf):
            grown = np.empty(max(need, 2 * len(self._buf)), dtype=np.uint8)
            grown[: self._st[_OUTLEN]] = self._buf[: self._st[_OUTLEN]]
            self._buf = grown

    def _check_open(self):
        if self._flushed is not None:
            raise VxpcError("encoder already flushed")

    def encode_bit(self, bit: int, q: int) -> None:
        """Encode one symbol with P(bit=1) = q/65536."""
        self._check_open()
        _check_q(q)
        if bit not in (0, 1):
            raise VxpcError(f"symbol must be 0 or 1, got {bit}")
        self._reserve(1)
        _encode_bit(self._st, self._buf, bit, q)

    def encode_bits(self, bits: np.ndarray, qs: np.ndarray) -> None:
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        qs = np.ascontiguousarray(qs, dtype=np.int64)
        if len(bits) != len(qs):
            raise VxpcError("bits and probabilities differ in length")
        if len(qs) and (qs.min() < Q_MIN or qs.max() > Q_MAX):
            raise VxpcError("quantized probability outside [1, 65535]")
        self._check_open()
        self._reserve(len(bits))
        _encode_bits(self._st, self._buf, bits, qs)

    def encode_bits_uniform(self, bits: np.ndarray) -> None:
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        self._check_open()
        self._reserve(len(bits))
        _encode_bits_uniform(self._st, self._buf, bits)

    def encode_bits_adaptive(self, bits: np.ndarray, counts: np.ndarray) -> None:
        """Encode with the running (n1+1)/(n0+n1+2) estimate, updating counts."""
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        self._check_open()
        self._reserve(len(bits))
        _encode_bits_adaptive(self._st, self._buf, bits, counts)

    @property
    def bits_emitted(self) -> int:
        """Bits committed so far, pending carries included, flush excluded."""
        whole = 8 * (int(self._st[_OUTLEN]) + int(self._st[_NCACHE]) - 1)
        return whole + 32 - int(self._st[_RANGE]).bit_length()

    def flush(self) -> bytes:
        """Terminate the codeword and return the complete byte run."""
        if self._flushed is None:
            self._reserve(0)
            for _ in range(5):
                _shift_low(self._st, self._buf)
            self._flushed = self._buf[: self._st[_OUTLEN]].tobytes()
        return self._flushed


class RangeDecoder:
    """Mirror of :class:`RangeEncoder`; must see the same probability sequence."""

    def __init__(self, data: bytes):
        self._data = np.frombuffer(bytes(data), dtype=np.uint8).copy()
        self._st = np.zeros(3, dtype=np.int64)
        self._st[_DRANGE] = _MASK32
        self._st[_POS] = 1  # first byte of a codeword is always 0
        code = 0
        for _ in range(4):
            pos = int(self._st[_POS])
            code = (code << 8) | (int(self._data[pos]) if pos < len(self._data) else 0)
            self._st[_POS] += 1
        self._st[_CODE] = code

    def decode_bit(self, q: int) -> int:
        _check_q(q)
        return int(_decode_bit(self._st, self._data, q))

    def decode_bits(self, qs: np.ndarray) -> np.ndarray:
        qs = np.ascontiguousarray(qs, dtype=np.int64)
        if len(qs) and (qs.min() < Q_MIN or qs.max() > Q_MAX):
            raise VxpcError("quantized probability outside [1, 65535]")
        bits = np.empty(len(qs), dtype=np.uint8)
        _decode_bits(self._st, self._data, qs, bits)
        return bits

    def decode_bits_uniform(self, n: int) -> np.ndarray:
        bits = np.empty(n, dtype=np.uint8)
        _decode_bits_uniform(self._st, self._data, bits)
        return bits

    def decode_bits_adaptive(self, n: int, counts: np.ndarray) -> np.ndarray:
        bits = np.empty(n, dtype=np.uint8)
        _decode_bits_adaptive(self._st, self._data, bits, counts)
        return bits


def quantize_p1(p1: np.ndarray) -> np.ndarray:
    """Map float probabilities of a 1-bit to coder integers, clamped to [1, 65535].

    Truncation (not rounding) in float32 keeps the encoder and the in-loop
    decoder quantization identical.
    """
    p = np.asarray(p1, dtype=np.float32)
    q = (p * np.float32(PROB_ONE)).astype(np.int64)
    return np.clip(q, Q_MIN, Q_MAX)
