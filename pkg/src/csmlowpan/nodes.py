"""Simulated sensor node: 6LoWPAN Route-Over forwarding on top of rpl-lite and CSM."""

from __future__ import annotations

import struct
from typing import TYPE_CHECKING, Optional

from .csm import SCState
from .frag import FragKind, Fragment, NotAFragment, Truncated, fragment_packet
from .netsim import EventKind, Frame
from .reassembly import AssemblyBuffer, Status
from .rpl import Mode, NoRoute, RplAgent
from .trust import NodeIdentity, TrustConfig, TrustStore

if TYPE_CHECKING:
    from .world import World

# Stand-in for the compressed IPv6 header: originating node id and sequence number.
_DATAGRAM_HEAD = struct.Struct(">HH")


def make_payload(origin: int, seq: int, size: int, filler: bytes) -> bytes:
    head = _DATAGRAM_HEAD.pack(origin, seq & 0xFFFF)
    if size < len(head):
        raise ValueError(f"datagram must be at least {len(head)} bytes")
    return head + filler[: size - len(head)]


def parse_payload(payload: bytes) -> tuple[int, int]:
    return _DATAGRAM_HEAD.unpack_from(payload)


class SensorNode:
    def __init__(self, world: "World", name: str, node_id: int, *, mode: Mode,
                 key: bytes = b"", is_root: bool = False,
                 trust_config: Optional[TrustConfig] = None,
                 buffer_capacity: int = 1, reassembly_timeout: float = 20.0,
                 max_frag_payload: int = 102, frame_interval: float = 0.01,
                 dio_period: float = 10.0):
        self.world = world
        self.sim = world.sim
        self.name = name
        self.node_id = node_id
        self.identity = NodeIdentity.for_node(node_id)
        self.mode = mode
        self.is_root = is_root
        self.max_frag_payload = max_frag_payload
        self.frame_interval = frame_interval
        self.buffer = AssemblyBuffer(buffer_capacity, reassembly_timeout)
        self.trust = TrustStore(trust_config or TrustConfig(), listener=self._trust_changed)
        self.sc = SCState(key, node_id, self.sim.rng(f"sc/{name}")) if mode is Mode.CSM else None
        self.rpl = RplAgent(self, is_root=is_root, mode=mode, dio_period=dio_period)
        self._tag = self.sim.rng(f"tag/{name}").getrandbits(16)
        self._tx_free_at = 0.0
        self._slot_meta: dict[tuple, tuple] = {}
        self.sent_payloads: dict[int, bytes] = {}
        self.seq = 0

    # -- plumbing -------------------------------------------------------------

    def log(self, event_kind: str, detail: str = "", result: str = "") -> None:
        self.sim.log(self.name, event_kind, detail, result)

    def neighbors(self) -> list[str]:
        return self.world.network.neighbors(self.name)

    def start(self) -> None:
        self.rpl.start(0.0)

    def next_tag(self) -> int:
        self._tag = (self._tag + 1) & 0xFFFF
        return self._tag

    def send_frame(self, frame: Frame) -> None:
        """Queue a frame on this node's radio; frames leave one per ``frame_interval``."""
        now = self.sim.now
        at = max(now, self._tx_free_at)
        self._tx_free_at = at + self.frame_interval
        if at == now:
            self.world.network.transmit(frame, self.name, frame.dst)
        else:
            self.sim.schedule(at, self.name, EventKind.TIMER_EXPIRY,
                              lambda: self.world.network.transmit(frame, self.name, frame.dst))

    def _trust_changed(self, neighbor: NodeIdentity, old, new, cause: str) -> None:
        peer = self.world.name_of(neighbor.node_id)
        self.log("trust", f"neighbor={peer} old={'-' if old is None else old} new={new}", cause)

    # -- data plane -----------------------------------------------------------

    def originate(self, size: int) -> tuple:
        """Create a new datagram at this node and route it upward."""
        self.seq += 1
        filler = self.sim.rng(f"payload/{self.name}").randbytes(size)
        payload = make_payload(self.node_id, self.seq, size, filler)
        meta = (self.name, self.seq)
        self.sent_payloads[self.seq] = payload
        self.world.ledger.on_send(meta, self.sim.now)
        self.log("app_send", f"seq={self.seq} size={size}", "")
        self.route_datagram(payload, meta)
        return meta

    def route_datagram(self, payload: bytes, meta: tuple) -> None:
        try:
            parent = self.rpl.next_hop_up()
        except NoRoute:
            self.log("drop", f"seq={meta[1]} origin={meta[0]}", "no_route")
            self.world.ledger.on_drop(meta, "no_route", self.name)
            return
        self.send_datagram(payload, parent, meta)

    def send_datagram(self, payload: bytes, dst: str, meta: Optional[tuple],
                      link_src: Optional[bytes] = None, only: Optional[list[int]] = None,
                      tag: Optional[int] = None) -> list[Fragment]:
        link_src = link_src or self.identity.link_addr
        frags = fragment_packet(payload, self.next_tag() if tag is None else tag,
                                self.max_frag_payload)
        if not frags:
            self.send_frame(Frame(self.name, dst, "ipv6", payload, len(payload),
                                  link_src=link_src, sender=self.identity, meta=meta))
            return []
        chosen = frags if only is None else [frags[i] for i in only]
        for frag in chosen:
            wire = frag.to_bytes()
            self.send_frame(Frame(self.name, dst, "frag", wire, len(wire),
                                  link_src=link_src, sender=self.identity, meta=meta))
        return frags

    def receive(self, frame: Frame) -> None:
        now = self.sim.now
        if frame.kind == "dio":
            self.rpl.on_dio(frame, now)
        elif frame.kind == "frag":
            self.on_fragment_frame(frame)
        elif frame.kind == "ipv6":
            self.on_datagram(frame.body, frame.meta)

    def on_sniff(self, frame: Frame) -> None:
        pass

    def expire(self) -> None:
        now = self.sim.now
        for key in self.buffer.expire(now):
            meta = self._slot_meta.pop(key, None)
            self.log("reassembly_timeout", f"tag={key[1]}", "evicted")
            if meta is not None:
                self.world.ledger.on_drop(meta, "timeout", self.name)

    def on_fragment_frame(self, frame: Frame) -> None:
        now = self.sim.now
        self.expire()
        try:
            frag = Fragment.from_bytes(frame.body)
        except (NotAFragment, Truncated, ValueError):
            self.log("frag_rx", f"from={frame.src}", "malformed")
            return
        gate = self.trust.fragment_gate if self.mode is Mode.CSM else None
        key = (frame.link_src, frag.header.datagram_tag)
        had_slot = key in self.buffer.slots
        verdict = self.buffer.on_fragment(frag, frame.link_src, now, gate)
        detail = (f"from={frame.src} tag={frag.header.datagram_tag} "
                  f"off={frag.header.datagram_offset} {frag.header.kind.value}")

        if verdict.status is Status.REJECTED:
            self.log("frag_rx", detail, verdict.reason.value)
            if frame.meta is not None and verdict.reason.value != "duplicate":
                self.world.ledger.on_drop(frame.meta, verdict.reason.value, self.name)
            return

        self.log("frag_rx", detail, verdict.status.value)
        if verdict.status is Status.ACCEPTED:
            if not had_slot and frag.header.kind is FragKind.FRAG1:
                self._slot_meta[key] = frame.meta
                deadline = self.buffer.slots[key].deadline
                self.sim.schedule(deadline, self.name, EventKind.TIMER_EXPIRY, self.expire)
            return

        self._slot_meta.pop(key, None)
        self.on_datagram(verdict.payload, frame.meta)

    def on_datagram(self, payload: bytes, meta: Optional[tuple]) -> None:
        """A datagram was fully reassembled here (Route-Over: every hop does this)."""
        origin, seq = parse_payload(payload)
        self.world.ledger.on_reassembled(self.name, meta)
        if self.is_root:
            self.log("deliver", f"origin={self.world.name_of(origin)} seq={seq}", "ok")
            self.world.ledger.on_deliver(meta, self.sim.now, payload)
            return
        self.route_datagram(payload, meta)


class AppSender:
    """Legitimate traffic source: one datagram per designated time, jittered."""

    def __init__(self, node: SensorNode, times: list[float], size: int, jitter: float):
        self.node = node
        rng = node.sim.rng(f"jitter/{node.name}")
        self.actual = [max(0.0, t + (rng.uniform(-jitter, jitter) if jitter > 0 else 0.0))
                       for t in times]
        self.size = size

    def start(self) -> None:
        for t in self.actual:
            self.node.sim.schedule(t, self.node.name, EventKind.APP_SEND,
                                   lambda: self.node.originate(self.size))
