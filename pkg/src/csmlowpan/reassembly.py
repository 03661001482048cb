"""Per-node 6LoWPAN assembly buffer.

Contiki reserves room for a single fragmented datagram by default, which is
exactly what a buffer-reservation attacker occupies. Slots are keyed by the
immediate sender's link-layer address and the datagram tag.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional

from .frag import FragKind, Fragment

DEFAULT_TIMEOUT = 20.0

Gate = Callable[[Hashable], bool]


class Status(enum.Enum):
    ACCEPTED = "accepted"
    COMPLETED = "completed"
    REJECTED = "rejected"


class Reject(enum.Enum):
    UNTRUSTED = "untrusted"
    BUFFER_BUSY = "buffer_busy"
    NO_SLOT = "no_slot"
    DUPLICATE = "duplicate"
    SIZE_MISMATCH = "size_mismatch"


@dataclass(frozen=True)
class Verdict:
    status: Status
    reason: Optional[Reject] = None
    payload: Optional[bytes] = None

    @classmethod
    def rejected(cls, reason: Reject) -> "Verdict":
        return cls(Status.REJECTED, reason=reason)


ACCEPTED = Verdict(Status.ACCEPTED)


@dataclass
class ReassemblySlot:
    sender_link_addr: Hashable
    tag: int
    datagram_size: int
    deadline: float
    received: list[tuple[int, int]] = field(default_factory=list)  # sorted half-open byte ranges
    data: bytearray = field(default_factory=bytearray)

    def overlaps(self, start: int, end: int) -> bool:
        return any(s < end and start < e for s, e in self.received)

    def add(self, start: int, payload: bytes) -> None:
        end = start + len(payload)
        self.received.append((start, end))
        self.received.sort()
        self.data[start:end] = payload

    @property
    def complete(self) -> bool:
        covered = 0
        for s, e in self.received:
            if s != covered:
                return False
            covered = e
        return covered == self.datagram_size


class AssemblyBuffer:
    def __init__(self, capacity: int = 1, reassembly_timeout: float = DEFAULT_TIMEOUT):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.reassembly_timeout = reassembly_timeout
        self.slots: dict[tuple[Hashable, int], ReassemblySlot] = {}

    @property
    def occupancy(self) -> int:
        return len(self.slots)

    def next_deadline(self) -> Optional[float]:
        return min((s.deadline for s in self.slots.values()), default=None)

    def expire(self, now: float) -> list[tuple[Hashable, int]]:
        """Free every slot whose deadline has passed; return the evicted keys."""
        evicted = [key for key, slot in self.slots.items() if slot.deadline <= now]
        for key in evicted:
            del self.slots[key]
        return evicted

    def on_fragment(self, frag: Fragment, sender: Hashable, now: float,
                    gate: Optional[Gate] = None) -> Verdict:
        # The gate decision must not touch buffer state.
        if gate is not None and not gate(sender):
            return Verdict.rejected(Reject.UNTRUSTED)

        h = frag.header
        key = (sender, h.datagram_tag)
        slot = self.slots.get(key)
        if slot is None:
            if h.kind is not FragKind.FRAG1:
                return Verdict.rejected(Reject.NO_SLOT)
            if len(self.slots) >= self.capacity:
                return Verdict.rejected(Reject.BUFFER_BUSY)
            slot = ReassemblySlot(sender, h.datagram_tag, h.datagram_size,
                                  deadline=now + self.reassembly_timeout,
                                  data=bytearray(h.datagram_size))
            self.slots[key] = slot
        else:
            if h.datagram_size != slot.datagram_size:
                return Verdict.rejected(Reject.SIZE_MISMATCH)
            if slot.overlaps(h.byte_offset, h.byte_offset + len(frag.payload)):
                return Verdict.rejected(Reject.DUPLICATE)

        slot.add(h.byte_offset, frag.payload)
        if slot.complete:
            del self.slots[key]
            return Verdict(Status.COMPLETED, payload=bytes(slot.data))
        return ACCEPTED
