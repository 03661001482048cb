"""A configured network: engine, radio, nodes and packet bookkeeping."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .netsim import ConfigurationError, EnergyMeter, Link, Network, Simulator
from .trust import NodeIdentity

DROP_REASONS = (
    "untrusted", "buffer_busy", "no_slot", "size_mismatch",
    "timeout", "link_loss", "no_route", "pending",
)


@dataclass
class Topology:
    nodes: list[str] = field(default_factory=lambda: ["R", "F", "S", "A"])
    links: list[tuple[str, str]] = field(default_factory=lambda: [("R", "F"), ("F", "S"), ("F", "A")])
    root: str = "R"
    sender: str = "S"
    adversary: Optional[str] = "A"
    target: Optional[str] = "F"
    sniff: list[tuple[str, str, str]] = field(default_factory=lambda: [("A", "S", "F")])
    latency: float = 0.005
    loss: float = 0.0

    def validate(self) -> None:
        names = set(self.nodes)
        if len(names) != len(self.nodes):
            raise ConfigurationError("duplicate node names")
        for role in (self.root, self.sender):
            if role not in names:
                raise ConfigurationError(f"role node {role!r} not in topology")
        if self.adversary is not None:
            if self.adversary not in names:
                raise ConfigurationError(f"adversary {self.adversary!r} not in topology")
            if self.target is None or self.target not in names:
                raise ConfigurationError("adversary needs a target node in the topology")
            if frozenset((self.adversary, self.target)) not in {frozenset(l) for l in self.links}:
                raise ConfigurationError("adversary must be one hop from its target")
        for a, b in self.links:
            if a not in names or b not in names or a == b:
                raise ConfigurationError(f"bad link {a}-{b}")
        for sniffer, a, b in self.sniff:
            if sniffer not in names:
                raise ConfigurationError(f"sniffer {sniffer!r} not in topology")
            if frozenset((a, b)) not in {frozenset(l) for l in self.links}:
                raise ConfigurationError(f"sniffed link {a}-{b} does not exist")
        # every legitimate node must reach the root without passing the adversary
        legit = names - {self.adversary}
        adj = {n: set() for n in legit}
        for a, b in self.links:
            if a in legit and b in legit:
                adj[a].add(b)
                adj[b].add(a)
        seen, todo = {self.root}, [self.root]
        while todo:
            for nxt in adj[todo.pop()] - seen:
                seen.add(nxt)
                todo.append(nxt)
        if seen != legit:
            raise ConfigurationError(f"nodes {sorted(legit - seen)} cannot reach the root")


class PacketLedger:
    """Fate of every originated datagram: delivered, dropped (first reason) or pending."""

    def __init__(self):
        self.sent: dict[tuple, float] = {}
        self.delivered: dict[tuple, float] = {}
        self.payloads: dict[tuple, bytes] = {}
        self.first_drop: dict[tuple, tuple[str, str]] = {}
        self.reassembled: Counter = Counter()

    def on_send(self, meta: tuple, now: float) -> None:
        self.sent[meta] = now

    def on_drop(self, meta: Optional[tuple], reason: str, node: str) -> None:
        if meta is not None and meta not in self.first_drop:
            self.first_drop[meta] = (reason, node)

    def on_reassembled(self, node: str, meta: Optional[tuple]) -> None:
        if meta is not None:
            self.reassembled[(node, meta)] += 1

    def on_deliver(self, meta: Optional[tuple], now: float, payload: bytes) -> None:
        if meta is not None:
            self.delivered.setdefault(meta, now)
            self.payloads.setdefault(meta, payload)

    def fate(self, meta: tuple) -> str:
        if meta in self.delivered:
            return "delivered"
        if meta in self.first_drop:
            return self.first_drop[meta][0]
        return "pending"

    def tally(self, origin: str, since: float = 0.0) -> tuple[int, int, dict[str, int]]:
        """``(sends, deliveries, drops by reason)`` for datagrams from ``origin`` sent at >= ``since``."""
        drops = {r: 0 for r in DROP_REASONS}
        sends = delivered = 0
        for meta, t in self.sent.items():
            if meta[0] != origin or t < since:
                continue
            sends += 1
            fate = self.fate(meta)
            if fate == "delivered":
                delivered += 1
            else:
                drops[fate] += 1
        return sends, delivered, drops


class World:
    def __init__(self, topology: Topology, seed: int = 0, meter: Optional[EnergyMeter] = None):
        topology.validate()
        self.topology = topology
        self.sim = Simulator(seed)
        self.network = Network(self.sim, meter)
        self.ledger = PacketLedger()
        self.nodes: dict = {}
        self._ids = {name: i + 1 for i, name in enumerate(topology.nodes)}
        self._names = {i: name for name, i in self._ids.items()}
        for a, b in topology.links:
            self.network.add_link(Link(a, b, topology.latency, topology.loss))
        self.network.on_loss = self._on_loss

    def node_id(self, name: str) -> int:
        return self._ids[name]

    def name_of(self, node_id: int) -> str:
        return self._names.get(node_id, f"#{node_id}")

    def identity_of(self, name: str) -> NodeIdentity:
        return NodeIdentity.for_node(self._ids[name])

    def add(self, node) -> None:
        self.nodes[node.name] = node
        self.network.attach(node.name, node.receive, node.on_sniff)

    def finish_wiring(self) -> None:
        for sniffer, a, b in self.topology.sniff:
            if sniffer in self.nodes:
                self.network.add_sniffer(sniffer, a, b)

    def check_occupancy(self, _event=None) -> None:
        for node in self.nodes.values():
            if node.buffer.occupancy > node.buffer.capacity:
                raise AssertionError(f"{node.name} buffer over capacity at t={self.sim.now}")

    def _on_loss(self, frame, target: str) -> None:
        if frame.kind in ("frag", "ipv6"):
            self.ledger.on_drop(frame.meta, "link_loss", target)

    def run(self, until: float):
        return self.sim.run(until)


def run(world: World, until: float):
    """Process every event up to ``until``; returns the trace."""
    return world.run(until)
