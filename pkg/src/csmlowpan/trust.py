"""CSM-Trust interface: per-neighbor TrustVal and the two gates that read it.

The control gate decides whether RPL uses a neighbor's routing content; the
fragment gate decides whether 6LoWPAN admits a fragment whose immediate sender
is that neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional


@dataclass(frozen=True)
class TrustConfig:
    trust_val_min: int = 0
    trust_val_max: int = 100
    trust_trig: int = 50
    frag_threshold: int = 60
    step: int = 10

    def __post_init__(self):
        if not self.trust_val_min <= self.trust_trig <= self.trust_val_max:
            raise ValueError("trust_trig must lie within [trust_val_min, trust_val_max]")
        if not self.trust_val_min <= self.frag_threshold <= self.trust_val_max:
            raise ValueError("frag_threshold must lie within [trust_val_min, trust_val_max]")
        if self.step < 0:
            raise ValueError("step must be non-negative")

    def clamp(self, value: int) -> int:
        return max(self.trust_val_min, min(self.trust_val_max, value))


@dataclass(frozen=True)
class NodeIdentity:
    node_id: int
    ipv6: bytes
    link_addr: bytes

    @classmethod
    def for_node(cls, node_id: int) -> "NodeIdentity":
        # EUI-64 style link address and the matching fe80::/64 address.
        link = bytes([0x02, 0, 0, 0xFF, 0xFE, 0]) + node_id.to_bytes(2, "big")
        return cls(node_id, bytes([0xFE, 0x80]) + bytes(6) + link, link)


@dataclass
class TrustRecord:
    neighbor: NodeIdentity
    trust_val: int


def next_trust(current: Optional[int], success: bool, cfg: TrustConfig) -> int:
    if current is None:
        return cfg.trust_val_max if success else cfg.trust_val_min
    delta = cfg.step if success else -cfg.step
    return cfg.clamp(current + delta)


TrustListener = Callable[[NodeIdentity, Optional[int], int, str], None]


@dataclass
class TrustStore:
    config: TrustConfig = field(default_factory=TrustConfig)
    records: dict[bytes, TrustRecord] = field(default_factory=dict)  # keyed by IPv6 address
    link_table: dict[bytes, bytes] = field(default_factory=dict)     # link-layer -> IPv6
    listener: Optional[TrustListener] = None

    def get(self, ipv6: bytes) -> Optional[int]:
        rec = self.records.get(ipv6)
        return None if rec is None else rec.trust_val

    def set(self, neighbor: NodeIdentity, value: int, cause: str = "external") -> None:
        """Write access for external mechanisms; the value is clamped."""
        rec = self._record(neighbor)
        old = None if rec is None else rec.trust_val
        new = self.config.clamp(value)
        if rec is None:
            self._bind(neighbor, new)
        else:
            rec.trust_val = new
        self._notify(neighbor, old, new, cause)

    def forget(self, neighbor: NodeIdentity) -> None:
        rec = self.records.pop(neighbor.ipv6, None)
        if rec is not None and self.link_table.get(rec.neighbor.link_addr) == neighbor.ipv6:
            del self.link_table[rec.neighbor.link_addr]

    def on_decode_result(self, neighbor: NodeIdentity, success: bool) -> int:
        rec = self._record(neighbor)
        old = None if rec is None else rec.trust_val
        new = next_trust(old, success, self.config)
        if rec is None:
            self._bind(neighbor, new)
        else:
            # A later link-layer mismatch for a known IPv6 address is not noticed.
            rec.trust_val = new
        self._notify(neighbor, old, new, "decode_ok" if success else "decode_fail")
        return new

    def control_gate(self, neighbor: NodeIdentity) -> bool:
        value = self.get(neighbor.ipv6)
        return value is not None and value >= self.config.trust_trig

    def fragment_gate(self, sender_link_addr: bytes) -> bool:
        ipv6 = self.link_table.get(sender_link_addr)
        if ipv6 is None:
            return False
        value = self.get(ipv6)
        return value is not None and value >= self.config.frag_threshold

    def _record(self, neighbor: NodeIdentity) -> Optional[TrustRecord]:
        return self.records.get(neighbor.ipv6)

    def _bind(self, neighbor: NodeIdentity, value: int) -> None:
        self.records[neighbor.ipv6] = TrustRecord(neighbor, value)
        self.link_table.setdefault(neighbor.link_addr, neighbor.ipv6)

    def _notify(self, neighbor, old, new, cause) -> None:
        if self.listener is not None:
            self.listener(neighbor, old, new, cause)
