"""6LoWPAN fragmentation headers (RFC 4944 FRAG1/FRAGN) and packet splitting.

Wire layout, big-endian bit order::

    FRAG1:  11000 | datagram_size:11 | datagram_tag:16                    (4 bytes)
    FRAGN:  11100 | datagram_size:11 | datagram_tag:16 | datagram_offset:8 (5 bytes)

``datagram_offset`` counts 8-octet units.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

FRAG1_DISPATCH = 0b11000
FRAGN_DISPATCH = 0b11100
FRAG1_HEADER_LEN = 4
FRAGN_HEADER_LEN = 5

MAX_DATAGRAM_SIZE = 2047
MAX_TAG = 0xFFFF
MAX_OFFSET = 0xFF


class RangeError(ValueError):
    """A header field or payload size is outside what the format can carry."""


class NotAFragment(ValueError):
    """The dispatch bits do not name a fragmentation header."""


class Truncated(ValueError):
    """Fewer bytes than the header needs."""


class FragKind(enum.Enum):
    FRAG1 = "frag1"
    FRAGN = "fragn"


@dataclass(frozen=True)
class FragmentHeader:
    kind: FragKind
    datagram_size: int
    datagram_tag: int
    datagram_offset: int = 0

    def __post_init__(self):
        if not 0 <= self.datagram_size <= MAX_DATAGRAM_SIZE:
            raise RangeError(f"datagram_size {self.datagram_size} not in 0..{MAX_DATAGRAM_SIZE}")
        if not 0 <= self.datagram_tag <= MAX_TAG:
            raise RangeError(f"datagram_tag {self.datagram_tag} not in 0..{MAX_TAG}")
        if self.kind is FragKind.FRAG1:
            if self.datagram_offset != 0:
                raise RangeError("FRAG1 carries no offset")
        else:
            if not 0 <= self.datagram_offset <= MAX_OFFSET:
                raise RangeError(f"datagram_offset {self.datagram_offset} not in 0..{MAX_OFFSET}")
            if self.datagram_offset * 8 >= self.datagram_size:
                raise RangeError("FRAGN offset lies beyond the datagram")

    @property
    def byte_offset(self) -> int:
        return self.datagram_offset * 8

    @property
    def encoded_len(self) -> int:
        return FRAG1_HEADER_LEN if self.kind is FragKind.FRAG1 else FRAGN_HEADER_LEN


@dataclass(frozen=True)
class Fragment:
    header: FragmentHeader
    payload: bytes

    def __post_init__(self):
        if self.header.byte_offset + len(self.payload) > self.header.datagram_size:
            raise RangeError("fragment payload runs past datagram_size")

    @property
    def is_final(self) -> bool:
        return self.header.byte_offset + len(self.payload) == self.header.datagram_size

    def to_bytes(self) -> bytes:
        return encode_header(self.header) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Fragment":
        header, used = decode_header(data)
        return cls(header, bytes(data[used:]))


def encode_header(h: FragmentHeader) -> bytes:
    dispatch = FRAG1_DISPATCH if h.kind is FragKind.FRAG1 else FRAGN_DISPATCH
    first = (dispatch << 11) | h.datagram_size
    out = first.to_bytes(2, "big") + h.datagram_tag.to_bytes(2, "big")
    if h.kind is FragKind.FRAGN:
        out += bytes([h.datagram_offset])
    return out


def decode_header(data: bytes) -> tuple[FragmentHeader, int]:
    """Parse a fragmentation header; returns the header and the bytes consumed."""
    if len(data) < 1:
        raise Truncated("empty input")
    dispatch = data[0] >> 3
    if dispatch == FRAG1_DISPATCH:
        kind, need = FragKind.FRAG1, FRAG1_HEADER_LEN
    elif dispatch == FRAGN_DISPATCH:
        kind, need = FragKind.FRAGN, FRAGN_HEADER_LEN
    else:
        raise NotAFragment(f"dispatch byte 0x{data[0]:02x}")
    if len(data) < need:
        raise Truncated(f"need {need} bytes, got {len(data)}")
    size = int.from_bytes(data[0:2], "big") & 0x07FF
    tag = int.from_bytes(data[2:4], "big")
    offset = data[4] if kind is FragKind.FRAGN else 0
    return FragmentHeader(kind, size, tag, offset), need


def needs_fragmentation(size: int, max_frag_payload: int) -> bool:
    return size > max_frag_payload


def fragment_packet(payload: bytes, tag: int, max_frag_payload: int) -> list[Fragment]:
    """Split ``payload`` into FRAG1/FRAGN fragments.

    Non-final fragments carry ``max_frag_payload`` rounded down to a multiple
    of 8 so every offset is representable. A payload that fits in a single
    frame returns an empty list: no fragmentation is needed.
    """
    if len(payload) > MAX_DATAGRAM_SIZE:
        raise RangeError(f"payload of {len(payload)} bytes exceeds {MAX_DATAGRAM_SIZE}")
    if max_frag_payload < 8:
        raise ValueError("max_frag_payload must be at least 8")
    if not needs_fragmentation(len(payload), max_frag_payload):
        return []

    size = len(payload)
    chunk = (max_frag_payload // 8) * 8
    frags = []
    for start in range(0, size, chunk):
        kind = FragKind.FRAG1 if start == 0 else FragKind.FRAGN
        header = FragmentHeader(kind, size, tag, start // 8)
        frags.append(Fragment(header, payload[start:start + chunk]))
    return frags
