"""Buffer-reservation adversary: attack schedule planning and the attacking node.

Attack kinds follow the scenario matrix: full packets (plain DoS), first
fragment only (basic reservation) and every fragment but the last (the
sophisticated variant). Timing is relative to the victim's sends, which the
adversary learns by sniffing.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .netsim import EventKind, Frame
from .nodes import SensorNode, make_payload


# Re-reservations go out this long after the previous one expires at the victim.
EVICTION_GUARD = 0.001


class AttackKind(str, enum.Enum):
    NONE = "none"
    FULL_PACKET = "full_packet"
    FRAG1_ONLY = "frag1_only"
    ALL_BUT_LAST = "all_but_last"

    @property
    def reserves_buffer(self) -> bool:
        return self in (AttackKind.FRAG1_ONLY, AttackKind.ALL_BUT_LAST)


class Timing(str, enum.Enum):
    BEFORE = "before"
    SIMULTANEOUS = "simultaneous"
    AFTER = "after"


class Knowledge(str, enum.Enum):
    EXTERNAL = "external"
    INTERNAL = "internal"
    SPOOF_LINK_ADDR = "spoof_link_addr"


class Cycle(str, enum.Enum):
    TIMEOUT = "timeout"          # re-reserve as soon as the previous reservation expires
    SEND_PERIOD = "send_period"  # one reservation per victim send


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind = AttackKind.NONE
    timing: Timing = Timing.BEFORE
    start: float = 50.0
    lead_lag: float = 5.0
    jitter: float = 2.0
    knowledge: Knowledge = Knowledge.EXTERNAL
    cycle: Cycle = Cycle.TIMEOUT

    def __post_init__(self):
        for name, enum_cls in (("kind", AttackKind), ("timing", Timing),
                               ("knowledge", Knowledge), ("cycle", Cycle)):
            object.__setattr__(self, name, enum_cls(getattr(self, name)))
        if self.start <= 0:
            raise ValueError("attack start must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        if self.lead_lag <= self.jitter:
            raise ValueError("lead_lag must exceed jitter so timing classes stay apart")

    @property
    def phase(self) -> float:
        return {Timing.BEFORE: -self.lead_lag, Timing.SIMULTANEOUS: 0.0,
                Timing.AFTER: self.lead_lag}[self.timing]


@dataclass(frozen=True)
class AttackAction:
    time: float
    cycle: int                        # which fake datagram this belongs to
    fragments: Optional[tuple] = None  # fragment indices; None sends the whole datagram


def plan_attack(cfg: AttackConfig, victim_schedule: Sequence[float], timeout: float,
                rng: Optional[random.Random] = None, until: float = math.inf,
                n_fragments: int = 6) -> list[AttackAction]:
    """Timed adversary actions against a victim sending at ``victim_schedule``.

    Each designated send is jittered uniformly by +/- ``cfg.jitter``. With the
    default timeout cycle the basic attack launches once, phased against the
    first victim send after ``cfg.start``, and then re-reserves every time its
    reservation expires, which is what lets it hold the buffer indefinitely.
    """
    if cfg.kind is AttackKind.NONE:
        return []
    rng = rng or random.Random(0)

    def jitter() -> float:
        return rng.uniform(-cfg.jitter, cfg.jitter) if cfg.jitter > 0 else 0.0

    anchors = [v + cfg.phase for v in sorted(victim_schedule) if v + cfg.phase >= cfg.start]
    if not anchors:
        return []

    if cfg.kind is AttackKind.FULL_PACKET:
        starts = [max(cfg.start, a + jitter()) for a in anchors]
    elif cfg.cycle is Cycle.TIMEOUT:
        t0 = max(cfg.start, anchors[0] + jitter())
        period = timeout + EVICTION_GUARD
        starts = [t0 + k * period for k in range(int((until - t0) // period) + 1)]
    else:
        starts = [max(cfg.start, a + jitter()) for a in anchors]
    starts = [t for t in starts if t < until]

    actions = []
    for i, t in enumerate(starts):
        if cfg.kind is AttackKind.FULL_PACKET:
            actions.append(AttackAction(t, i, None))
        elif cfg.kind is AttackKind.FRAG1_ONLY:
            actions.append(AttackAction(t, i, (0,)))
        else:
            # All fragments but the last, spread evenly across the timeout window.
            sent = n_fragments - 1
            for j in range(sent):
                at = t + j * timeout / sent
                if at < until:
                    actions.append(AttackAction(at, i, (j,)))
    return actions


class AdversaryNode(SensorNode):
    """Starts out like any node, tries to join, then runs its attack plan."""

    def __init__(self, world, name, node_id, *, attack: AttackConfig, target: str,
                 victim: Optional[SensorNode], data_size: int = 512, **kwargs):
        super().__init__(world, name, node_id, **kwargs)
        self.attack = attack
        self.target = target
        self.victim = victim
        self.data_size = data_size
        self.sniffed_frag1: list[float] = []
        self._fake: dict[int, tuple[bytes, int]] = {}
        self.rpl.emit_unjoined = True

    def start(self) -> None:
        self.rpl.start(self.rpl.dio_period / 2)

    def schedule_attack(self, actions: list[AttackAction]) -> None:
        for action in actions:
            self.sim.schedule(action.time, self.name, EventKind.ATTACK_ACTION,
                              lambda a=action: self.act(a))

    def link_src(self) -> bytes:
        if self.attack.knowledge is Knowledge.SPOOF_LINK_ADDR and self.victim is not None:
            return self.victim.identity.link_addr
        return self.identity.link_addr

    def _fake_datagram(self, cycle: int) -> tuple[bytes, int]:
        if cycle not in self._fake:
            rng = self.sim.rng(f"attack/{self.name}")
            self.seq += 1
            payload = make_payload(self.node_id, self.seq, self.data_size, rng.randbytes(self.data_size))
            self._fake[cycle] = (payload, rng.getrandbits(16))
        return self._fake[cycle]

    def act(self, action: AttackAction) -> None:
        payload, tag = self._fake_datagram(action.cycle)
        meta = (self.name, action.cycle)
        only = None if action.fragments is None else list(action.fragments)
        self.log("attack", f"{self.attack.kind.value} cycle={action.cycle} frags={only or 'all'}", "")
        self.send_datagram(payload, self.target, meta, link_src=self.link_src(), only=only, tag=tag)

    def on_sniff(self, frame: Frame) -> None:
        if frame.kind == "frag" and frame.body[0] >> 3 == 0b11000 and frame.src != self.name:
            self.sniffed_frag1.append(self.sim.now)
            self.log("sniff", f"frag1 from={frame.src}", "")


