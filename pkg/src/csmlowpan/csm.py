"""Chained Secure Mode: control messages coded with rotating Secret Chaining values.

Each transmission to a neighbor is coded under the current SC value for that
direction and carries the next SC value inside the coded body, so the receiver
can only decode the following message if it decoded this one. A keyed PRF
(HMAC-SHA256) stands in for the real coding coefficients; it is a simulation
device and not a vetted cipher.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import struct
from dataclasses import dataclass, field
from typing import Hashable

SC_BITS = 32
SC_BYTES = SC_BITS // 8
TAG_LEN = 8
RESYNC_AFTER = 3


class DecodeFailure(Exception):
    """Wrong key, stale SC value, or corruption. The causes are indistinguishable."""


@dataclass(frozen=True)
class EncodedControlMessage:
    ciphertext: bytes
    auth_tag: bytes
    sender: Hashable
    receiver: Hashable
    bootstrap: bool = False  # clear-text bit: coded under the bootstrap SC value

    def __len__(self) -> int:
        return len(self.ciphertext) + len(self.auth_tag)


def _prf(key: bytes, label: bytes, *parts: bytes) -> bytes:
    return hmac.new(key, label + b"".join(parts), hashlib.sha256).digest()


def _sc_bytes(sc: int) -> bytes:
    return struct.pack(">I", sc & 0xFFFFFFFF)


def _keystream(key: bytes, sc: int, n: int) -> bytes:
    out = bytearray()
    block = 0
    while len(out) < n:
        out += _prf(key, b"ks", _sc_bytes(sc), struct.pack(">I", block))
        block += 1
    return bytes(out[:n])


def _tag(key: bytes, sc: int, ciphertext: bytes) -> bytes:
    return _prf(key, b"tag", _sc_bytes(sc), ciphertext)[:TAG_LEN]


def encode_control(plaintext: bytes, key: bytes, sc: int, next_sc: int,
                   sender: Hashable = None, receiver: Hashable = None,
                   bootstrap: bool = False) -> EncodedControlMessage:
    body = plaintext + _sc_bytes(next_sc)
    stream = _keystream(key, sc, len(body))
    ciphertext = bytes(a ^ b for a, b in zip(body, stream))
    return EncodedControlMessage(ciphertext, _tag(key, sc, ciphertext), sender, receiver, bootstrap)


def decode_control(msg: EncodedControlMessage, key: bytes, expected_sc: int) -> tuple[bytes, int]:
    """Return ``(plaintext, next_sc)`` or raise :class:`DecodeFailure`.

    On success the caller must move its expected SC for this sender to ``next_sc``.
    """
    if len(msg.ciphertext) < SC_BYTES:
        raise DecodeFailure("short body")
    if not hmac.compare_digest(msg.auth_tag, _tag(key, expected_sc, msg.ciphertext)):
        raise DecodeFailure("auth tag mismatch")
    stream = _keystream(key, expected_sc, len(msg.ciphertext))
    body = bytes(a ^ b for a, b in zip(msg.ciphertext, stream))
    (next_sc,) = struct.unpack(">I", body[-SC_BYTES:])
    return body[:-SC_BYTES], next_sc


def initial_sc(key: bytes, sender: int, receiver: int) -> int:
    """Bootstrap SC value for the sender->receiver direction."""
    digest = _prf(key, b"init", struct.pack(">II", sender, receiver))
    return int.from_bytes(digest[:SC_BYTES], "big")


def fresh_sc(rng: random.Random) -> int:
    return rng.getrandbits(SC_BITS)


@dataclass
class SCState:
    """SC chain bookkeeping for one node, per neighbor and direction.

    The first message in a direction, and the first after a restart, is coded
    under the bootstrap value and flagged as such; the receiver decodes it with
    ``initial_sc`` whatever its chain state. Replays of bootstrap messages are
    caught by remembering the successor values they carried.
    """

    key: bytes
    me: int
    rng: random.Random
    next_sc_out: dict[int, int] = field(default_factory=dict)
    expected_sc_in: dict[int, int] = field(default_factory=dict)
    failures_in: dict[int, int] = field(default_factory=dict)
    resync_wanted: set[int] = field(default_factory=set)
    seen_bootstrap: dict[int, set[int]] = field(default_factory=dict)

    def encode_for(self, neighbor: int, plaintext: bytes) -> EncodedControlMessage:
        sc = self.next_sc_out.get(neighbor)
        bootstrap = sc is None
        if bootstrap:
            sc = initial_sc(self.key, self.me, neighbor)
        nxt = fresh_sc(self.rng)
        self.next_sc_out[neighbor] = nxt
        return encode_control(plaintext, self.key, sc, nxt, sender=self.me, receiver=neighbor,
                              bootstrap=bootstrap)

    def decode_from(self, neighbor: int, msg: EncodedControlMessage) -> bytes:
        try:
            if msg.bootstrap:
                plaintext, nxt = decode_control(msg, self.key, initial_sc(self.key, neighbor, self.me))
                seen = self.seen_bootstrap.setdefault(neighbor, set())
                if nxt in seen:
                    raise DecodeFailure("replayed bootstrap message")
                seen.add(nxt)
            else:
                expected = self.expected_sc_in.get(neighbor)
                if expected is None:
                    raise DecodeFailure("no chain with this neighbor yet")
                plaintext, nxt = decode_control(msg, self.key, expected)
        except DecodeFailure:
            n = self.failures_in.get(neighbor, 0) + 1
            self.failures_in[neighbor] = n
            if n >= RESYNC_AFTER:
                self.resync_wanted.add(neighbor)
            raise
        self.expected_sc_in[neighbor] = nxt
        self.failures_in[neighbor] = 0
        self.resync_wanted.discard(neighbor)
        return plaintext

    def restart_out(self, neighbor: int) -> None:
        """The next message to ``neighbor`` goes out under the bootstrap value."""
        self.next_sc_out.pop(neighbor, None)
