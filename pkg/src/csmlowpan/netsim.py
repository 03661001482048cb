"""Deterministic discrete-event engine, radio links and byte-proportional energy."""

from __future__ import annotations

import enum
import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Optional

BROADCAST = "*"
DEFAULT_LATENCY = 0.005
DEFAULT_E_TX = 0.001  # mJ per byte
DEFAULT_E_RX = 0.001


class ConfigurationError(Exception):
    pass


class NoLink(ConfigurationError):
    pass


class EventKind(str, enum.Enum):
    FRAME_DELIVERY = "FrameDelivery"
    TIMER_EXPIRY = "TimerExpiry"
    APP_SEND = "AppSend"
    ATTACK_ACTION = "AttackAction"


@dataclass(order=True)
class Event:
    time: float
    sequence: int
    target: str = field(compare=False)
    kind: EventKind = field(compare=False)
    action: Callable[[], Any] = field(compare=False, repr=False)


TraceRow = tuple[float, str, str, str, str]


class Simulator:
    """Clock plus event queue; events run in (time, sequence) order."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now = 0.0
        self.trace: list[TraceRow] = []
        self.after_event: list[Callable[[Event], None]] = []
        self._queue: list[Event] = []
        self._seq = 0
        self._rngs: dict[str, random.Random] = {}

    def rng(self, stream: str) -> random.Random:
        """Independent seeded stream, so adding draws in one place never shifts another."""
        r = self._rngs.get(stream)
        if r is None:
            r = self._rngs[stream] = random.Random(f"{self.seed}/{stream}")
        return r

    def schedule(self, time: float, target: str, kind: EventKind,
                 action: Callable[[], Any]) -> Event:
        if time < self.now or math.isnan(time):
            raise ConfigurationError(f"event for {target} at {time} is before now={self.now}")
        ev = Event(time, self._seq, target, EventKind(kind), action)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def log(self, node: str, event_kind: str, detail: str = "", result: str = "") -> None:
        self.trace.append((self.now, node, event_kind, detail, result))

    def pending(self) -> int:
        return len(self._queue)

    def run(self, until: float) -> list[TraceRow]:
        while self._queue and self._queue[0].time <= until:
            ev = heapq.heappop(self._queue)
            self.now = ev.time
            ev.action()
            for hook in self.after_event:
                hook(ev)
        self.now = max(self.now, until)
        return self.trace


@dataclass
class Link:
    a: str
    b: str
    latency: float = DEFAULT_LATENCY
    loss_probability: float = 0.0

    def __post_init__(self):
        if self.latency < 0:
            raise ConfigurationError("negative link latency")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ConfigurationError("loss_probability must be in [0, 1]")

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass
class EnergyMeter:
    e_tx: float = DEFAULT_E_TX
    e_rx: float = DEFAULT_E_RX
    tx_bytes: dict[str, int] = field(default_factory=dict)
    rx_bytes: dict[str, int] = field(default_factory=dict)

    def charge_tx(self, node: str, n: int) -> None:
        self.tx_bytes[node] = self.tx_bytes.get(node, 0) + n

    def charge_rx(self, node: str, n: int) -> None:
        self.rx_bytes[node] = self.rx_bytes.get(node, 0) + n

    def energy(self, node: str) -> float:
        return self.tx_bytes.get(node, 0) * self.e_tx + self.rx_bytes.get(node, 0) * self.e_rx


def energy_per_delivered(meter: EnergyMeter, node: str, delivered_count: int) -> float:
    """Millijoules spent by ``node`` per delivered packet; ``inf`` when nothing arrived."""
    if delivered_count < 0:
        raise ValueError("delivered_count must be non-negative")
    if delivered_count == 0:
        return math.inf
    return meter.energy(node) / delivered_count


@dataclass
class Frame:
    src: str
    dst: str
    kind: str                     # "frag", "ipv6" or "dio"
    body: Any
    size: int
    link_src: bytes = b""         # claimed link-layer source; spoofable
    sender: Optional[Hashable] = None  # claimed network-layer identity
    meta: Optional[tuple] = None  # packet bookkeeping, never read by protocol logic


class Network:
    def __init__(self, sim: Simulator, meter: Optional[EnergyMeter] = None):
        self.sim = sim
        self.meter = meter or EnergyMeter()
        self.links: dict[frozenset, Link] = {}
        self.sniffers: dict[frozenset, list[str]] = {}
        self.receivers: dict[str, Callable[[Frame], None]] = {}
        self.sniff_handlers: dict[str, Callable[[Frame], None]] = {}
        self.on_loss: Optional[Callable[[Frame, str], None]] = None
        self.offered_bytes = 0

    def attach(self, name: str, receive: Callable[[Frame], None],
               sniff: Optional[Callable[[Frame], None]] = None) -> None:
        self.receivers[name] = receive
        if sniff is not None:
            self.sniff_handlers[name] = sniff

    def add_link(self, link: Link) -> None:
        self.links[link.key] = link

    def add_sniffer(self, sniffer: str, a: str, b: str) -> None:
        key = frozenset((a, b))
        if key not in self.links:
            raise NoLink(f"no link {a}-{b} to sniff")
        self.sniffers.setdefault(key, []).append(sniffer)

    def neighbors(self, name: str) -> list[str]:
        out = []
        for key in self.links:
            if name in key:
                (other,) = key - {name} or {name}
                out.append(other)
        return sorted(out)

    def link(self, a: str, b: str) -> Link:
        try:
            return self.links[frozenset((a, b))]
        except KeyError:
            raise NoLink(f"no link {a}-{b}") from None

    def transmit(self, frame: Frame, src: str, dst: str) -> list[Event]:
        """Send now; schedule deliveries to ``dst`` (or every neighbor) and to sniffers."""
        targets: list[str] = self.neighbors(src) if dst == BROADCAST else [dst]
        links = [self.link(src, t) for t in targets]
        now = self.sim.now
        self.meter.charge_tx(src, frame.size)
        self.offered_bytes += frame.size
        loss_rng = self.sim.rng("loss")
        events = []
        for target, link in zip(targets, links):
            if link.loss_probability > 0 and loss_rng.random() < link.loss_probability:
                self.sim.log(src, "frame_lost", f"{frame.kind}->{target}", "lost")
                if self.on_loss is not None:
                    self.on_loss(frame, target)
            else:
                events.append(self._deliver(frame, target, now + link.latency))
            for sniffer in self.sniffers.get(link.key, ()):
                if sniffer != src and sniffer not in targets:
                    events.append(self._deliver(frame, sniffer, now + link.latency, sniffed=True))
        return events

    def _deliver(self, frame: Frame, node: str, at: float, sniffed: bool = False) -> Event:
        def deliver():
            self.meter.charge_rx(node, frame.size)
            handler = self.sniff_handlers.get(node) if sniffed else self.receivers.get(node)
            if handler is not None:
                handler(frame)
        return self.sim.schedule(at, node, EventKind.FRAME_DELIVERY, deliver)
