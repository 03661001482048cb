"""Minimal RPL control plane: fixed-period DIOs, rank, parent choice, upward next hop.

In UM a DIO is a plaintext broadcast. In CSM each neighbor gets its own
coded unicast, because SC values are kept per neighbor and direction.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .csm import RESYNC_AFTER, DecodeFailure, EncodedControlMessage
from .netsim import BROADCAST, EventKind, Frame

if TYPE_CHECKING:
    from .nodes import SensorNode

ROOT_RANK = 0
INFINITE_RANK = 0xFFFF
DEFAULT_DIO_PERIOD = 10.0

_DIO = struct.Struct(">BBH16sB")
_RESYNC = 0x01


class Mode(str, enum.Enum):
    UM = "vanilla"
    CSM = "csm"


class NoRoute(Exception):
    pass


@dataclass(frozen=True)
class DioMessage:
    rank: int
    dodag_id: bytes
    sender: int
    resync: bool = False
    instance: int = 1
    version: int = 1

    def to_bytes(self) -> bytes:
        return _DIO.pack(self.instance, self.version, self.rank, self.dodag_id,
                         _RESYNC if self.resync else 0)

    @classmethod
    def from_bytes(cls, data: bytes, sender: int) -> "DioMessage":
        instance, version, rank, dodag_id, flags = _DIO.unpack(data)
        return cls(rank, dodag_id, sender, bool(flags & _RESYNC), instance, version)


@dataclass
class RankState:
    rank: Optional[int] = None
    parent: Optional[str] = None
    mode: Mode = Mode.UM

    @property
    def joined(self) -> bool:
        return self.rank is not None


@dataclass
class RplAgent:
    node: "SensorNode"
    is_root: bool = False
    mode: Mode = Mode.UM
    dio_period: float = DEFAULT_DIO_PERIOD
    emit_unjoined: bool = False  # the adversary advertises before it has a rank
    state: RankState = field(default_factory=RankState)
    candidates: dict[str, tuple[int, int]] = field(default_factory=dict)  # name -> (rank, id)
    dodag_id: bytes = bytes(16)
    _timer_running: bool = False

    def __post_init__(self):
        self.state.mode = self.mode
        if self.is_root:
            self.state.rank = ROOT_RANK
            self.dodag_id = self.node.identity.ipv6

    # -- emission -----------------------------------------------------------

    def start(self, at: float = 0.0) -> None:
        if self.is_root or self.emit_unjoined:
            self._start_timer(at)

    def _start_timer(self, at: float) -> None:
        if self._timer_running:
            return
        self._timer_running = True
        self.node.sim.schedule(at, self.node.name, EventKind.TIMER_EXPIRY, self._on_timer)

    def _on_timer(self) -> None:
        now = self.node.sim.now
        self.emit_dio(now)
        self.node.sim.schedule(now + self.dio_period, self.node.name,
                               EventKind.TIMER_EXPIRY, self._on_timer)

    def advertised_rank(self) -> int:
        return INFINITE_RANK if self.state.rank is None else self.state.rank

    def emit_dio(self, now: float) -> int:
        """Send this period's DIO(s); returns the number of frames queued."""
        node = self.node
        if self.mode is Mode.UM:
            dio = DioMessage(self.advertised_rank(), self.dodag_id, node.node_id)
            body = dio.to_bytes()
            node.send_frame(Frame(node.name, BROADCAST, "dio", body, len(body),
                                  link_src=node.identity.link_addr, sender=node.identity))
            node.log("dio_tx", f"rank={dio.rank} bcast", "")
            return 1

        sent = 0
        for name in node.neighbors():
            self._unicast(name, node.world.identity_of(name))
            sent += 1
        node.log("dio_tx", f"rank={self.advertised_rank()} unicasts={sent}", "")
        return sent

    def _unicast(self, name: str, peer) -> None:
        node = self.node
        dio = DioMessage(self.advertised_rank(), self.dodag_id, node.node_id,
                         resync=peer.node_id in node.sc.resync_wanted)
        msg = node.sc.encode_for(peer.node_id, dio.to_bytes())
        node.send_frame(Frame(node.name, name, "dio", msg, len(msg),
                              link_src=node.identity.link_addr, sender=node.identity))

    # -- reception ----------------------------------------------------------

    def on_dio(self, frame: Frame, now: float) -> None:
        node = self.node
        peer = frame.sender
        if self.mode is Mode.UM:
            dio = DioMessage.from_bytes(frame.body, peer.node_id)
        else:
            msg: EncodedControlMessage = frame.body
            if msg.receiver != node.node_id:
                return
            try:
                plaintext = node.sc.decode_from(peer.node_id, msg)
            except DecodeFailure:
                node.trust.on_decode_result(peer, False)
                node.log("dio_rx", f"from={frame.src}", "decode_fail")
                # Ask for a chain restart right away, since an unjoined node has no
                # periodic DIO to carry the request. The request itself is bootstrap
                # coded so it gets through even if our own chain is broken too. Only
                # every third failure, so two keyless peers cannot ping-pong requests.
                if node.sc.failures_in[peer.node_id] % RESYNC_AFTER == 0:
                    node.sc.restart_out(peer.node_id)
                    self._unicast(frame.src, peer)
                    node.log("dio_tx", f"to={frame.src}", "resync_request")
                return
            node.trust.on_decode_result(peer, True)
            dio = DioMessage.from_bytes(plaintext, peer.node_id)
            if dio.resync:
                node.sc.restart_out(peer.node_id)
            if not node.trust.control_gate(peer):
                node.log("dio_rx", f"from={frame.src}", "gated")
                return
        node.log("dio_rx", f"from={frame.src} rank={dio.rank}", "ok")
        if self.is_root:
            return
        if dio.rank == INFINITE_RANK:
            self.candidates.pop(frame.src, None)
        else:
            self.candidates[frame.src] = (dio.rank, peer.node_id)
            if dio.dodag_id != bytes(16):
                self.dodag_id = dio.dodag_id
        self._select_parent(now)

    def _select_parent(self, now: float) -> None:
        if not self.candidates:
            return
        best = min(self.candidates, key=lambda n: self.candidates[n])
        rank = self.candidates[best][0] + 1
        was_joined = self.state.joined
        if (best, rank) != (self.state.parent, self.state.rank):
            self.state.parent, self.state.rank = best, rank
            self.node.log("route", f"parent={best} rank={rank}", "joined" if not was_joined else "changed")
        if not was_joined:
            self._start_timer(now)

    def next_hop_up(self) -> str:
        if self.is_root or self.state.parent is None:
            raise NoRoute(self.node.name)
        return self.state.parent
