"""Bitstream primitives, keyed deterministic random stream, message framing.

The keyed stream is a counter-mode construction over BLAKE2b: block i of the
stream is blake2b(key=seed, data=domain || 0x00 || i). Identical
(seed, domain, counter) yields identical output on every platform. Domain
labels keep the image channel, text channel and framing streams independent.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import MalformedInput, PayloadTooLong, TruncatedFrame

_HEADER_BITS = 32
_BLOCK_SIZE = 32  # bytes per keyed-hash block


class BitString:
    """Ordered sequence of {0,1} with a read cursor."""

    __slots__ = ("_bits", "_pos")

    def __init__(self, bits: Iterable[int] = ()):
        buf = bytearray(bits)
        for b in buf:
            if b not in (0, 1):
                raise ValueError("bits must be 0 or 1")
        self._bits = buf
        self._pos = 0

    @classmethod
    def from_int(cls, value: int, width: int) -> "BitString":
        """MSB-first binary representation of `value` in `width` bits."""
        if value < 0 or width < 0 or value >> width:
            raise ValueError(f"{value} does not fit in {width} bits")
        return cls((value >> (width - 1 - i)) & 1 for i in range(width))

    @classmethod
    def from01(cls, text: str) -> "BitString":
        try:
            return cls(int(c) for c in text)
        except ValueError as exc:
            raise MalformedInput(f"not a 0/1 string: {text[:32]!r}...") from exc

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitString":
        return cls((byte >> (7 - i)) & 1 for byte in data for i in range(8))

    def to01(self) -> str:
        return "".join(str(b) for b in self._bits)

    def to_int(self) -> int:
        value = 0
        for b in self._bits:
            value = (value << 1) | b
        return value

    def copy(self) -> "BitString":
        return BitString(self._bits)

    def append(self, bit: int) -> None:
        if bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        self._bits.append(bit)

    def extend(self, bits: Iterable[int]) -> None:
        for b in bits:
            self.append(b)

    def append_int(self, value: int, width: int) -> None:
        self.extend(BitString.from_int(value, width))

    @property
    def remaining(self) -> int:
        return len(self._bits) - self._pos

    def reset_cursor(self) -> None:
        self._pos = 0

    def read_bit(self) -> int:
        if self._pos >= len(self._bits):
            raise TruncatedFrame("read past end of bitstring")
        b = self._bits[self._pos]
        self._pos += 1
        return b

    def read_int(self, width: int) -> int:
        if self.remaining < width:
            raise TruncatedFrame(
                f"need {width} bits, {self.remaining} available"
            )
        value = 0
        for _ in range(width):
            value = (value << 1) | self.read_bit()
        return value

    def __len__(self) -> int:
        return len(self._bits)

    def __getitem__(self, i):
        return self._bits[i]

    def __iter__(self) -> Iterator[int]:
        return iter(self._bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._bits == other._bits

    def __hash__(self):
        return hash(bytes(self._bits))

    def __repr__(self) -> str:
        head = self.to01()
        if len(head) > 64:
            head = head[:64] + "..."
        return f"BitString({head!r}, len={len(self)})"


@dataclass(frozen=True)
class StegoKey:
    """Shared 256-bit key plus a domain label separating stream uses."""

    seed: bytes
    stream_domain: str = ""

    def __post_init__(self):
        if len(self.seed) != 32:
            raise MalformedInput("key seed must be exactly 32 bytes")

    @classmethod
    def from_hex(cls, text: str, domain: str = "") -> "StegoKey":
        text = text.strip()
        if len(text) != 64:
            raise MalformedInput("key must be a 64-character hex string")
        try:
            seed = bytes.fromhex(text)
        except ValueError as exc:
            raise MalformedInput("key is not valid hex") from exc
        return cls(seed, domain)

    def with_domain(self, domain: str) -> "StegoKey":
        return StegoKey(self.seed, domain)


class KeyedStream:
    """Deterministic uniform stream keyed by (seed, domain); counter mode.

    Not thread safe: the counter is per-instance mutable state. Use one
    instance per sequence.
    """

    def __init__(self, key: StegoKey):
        self.key = key
        self.counter = 0
        self._buf = bytearray()

    def _refill(self) -> None:
        h = hashlib.blake2b(digest_size=_BLOCK_SIZE, key=self.key.seed)
        h.update(self.key.stream_domain.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.counter.to_bytes(8, "big"))
        self.counter += 1
        self._buf.extend(h.digest())

    def next_bytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._refill()
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def next_uniform(self) -> float:
        """Uniform value in [0,1) with 53 bits of resolution."""
        u = int.from_bytes(self.next_bytes(8), "big") >> 11
        return u * 2.0**-53

    def next_bits(self, n: int) -> BitString:
        nbytes = (n + 7) // 8
        data = self.next_bytes(nbytes)
        bits = BitString.from_bytes(data)
        return BitString(bits[i] for i in range(n))

    def next_int(self, bound: int) -> int:
        """Uniform integer in [0, bound) by 64-bit rejection-free reduction."""
        u = int.from_bytes(self.next_bytes(8), "big")
        return (u * bound) >> 64


def xor_bits(bits: BitString, keystream: BitString) -> BitString:
    if len(bits) != len(keystream):
        raise ValueError("keystream length mismatch")
    return BitString(a ^ b for a, b in zip(bits, keystream))


def frame_message(payload: BitString, stream: KeyedStream) -> BitString:
    """Length-prefix the payload and mask the whole frame with the keystream."""
    if len(payload) >= 1 << _HEADER_BITS:
        raise PayloadTooLong(f"payload of {len(payload)} bits exceeds 2^32 - 1")
    plain = BitString.from_int(len(payload), _HEADER_BITS)
    plain.extend(payload)
    return xor_bits(plain, stream.next_bits(len(plain)))


def unframe_message(framed: BitString, stream: KeyedStream) -> BitString:
    """Inverse of frame_message; raises TruncatedFrame on desynchronization."""
    if len(framed) < _HEADER_BITS:
        raise TruncatedFrame("frame shorter than the 32-bit header")
    plain = xor_bits(framed, stream.next_bits(len(framed)))
    plain.reset_cursor()
    length = plain.read_int(_HEADER_BITS)
    if length > plain.remaining:
        raise TruncatedFrame(
            f"declared length {length} exceeds {plain.remaining} available bits"
        )
    return BitString(plain.read_bit() for _ in range(length))


def unframe_lenient(framed: BitString, stream: KeyedStream,
                    true_length: int) -> BitString:
    """Best-effort unframe for metrics: decrypt, drop the header, truncate.

    Never raises; used to score partially garbled extractions against the
    known true message.
    """
    if len(framed) <= _HEADER_BITS:
        return BitString()
    plain = xor_bits(framed, stream.next_bits(len(framed)))
    n = min(true_length, len(plain) - _HEADER_BITS)
    return BitString(plain[_HEADER_BITS + i] for i in range(n))
