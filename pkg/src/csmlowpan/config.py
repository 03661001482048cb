"""Scenario files: INI-style ``key = value`` documents with sections.

Example::

    [scenario]
    mode = csm
    rounds = 10
    duration = 1200
    base_seed = 1

    [attack]
    kind = frag1_only
    timing = before
    jitter = 2

    [topology]
    nodes = R, F, S, A
    links = R-F, F-S, F-A
    root = R
    sender = S
    adversary = A
    target = F
    sniff = A:S-F

Every key is optional; missing keys keep their defaults.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import fields, replace
from pathlib import Path
from typing import Union

from .adversary import AttackConfig
from .experiments import ScenarioConfig
from .netsim import ConfigurationError
from .trust import TrustConfig
from .world import Topology

_SCENARIO_KEYS = {
    "mode": str, "rounds": int, "duration": float, "data_size": int, "send_period": float,
    "first_send": float, "max_frag_payload": int, "reassembly_timeout": float,
    "buffer_capacity": int, "frame_interval": float, "dio_period": float, "base_seed": int,
}
_ATTACK_KEYS = {"kind": str, "timing": str, "start": float, "lead_lag": float,
                "jitter": float, "knowledge": str, "cycle": str}
_ENERGY_KEYS = {"e_tx": float, "e_rx": float}


def _section(parser, name, schema) -> dict:
    if not parser.has_section(name):
        return {}
    out = {}
    for key, raw in parser.items(name):
        if key not in schema:
            raise ConfigurationError(f"unknown key [{name}] {key}")
        try:
            out[key] = schema[key](raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{name}] {key}: {exc}") from None
    return out


def _names(raw: str) -> list[str]:
    return [x.strip() for x in raw.split(",") if x.strip()]


def _topology(parser) -> Topology:
    topo = Topology()
    if not parser.has_section("topology"):
        return topo
    sec = parser["topology"]
    changes = {}
    if "nodes" in sec:
        changes["nodes"] = _names(sec["nodes"])
    if "links" in sec:
        changes["links"] = [tuple(p.strip() for p in item.split("-")) for item in _names(sec["links"])]
    for role in ("root", "sender", "adversary", "target"):
        if role in sec:
            value = sec[role].strip()
            changes[role] = None if value.lower() in ("", "none") else value
    if "sniff" in sec:
        sniff = []
        for item in _names(sec["sniff"]):
            who, _, link = item.partition(":")
            a, _, b = link.partition("-")
            sniff.append((who.strip(), a.strip(), b.strip()))
        changes["sniff"] = sniff
    if "latency" in sec:
        changes["latency"] = float(sec["latency"])
    if "loss" in sec:
        changes["loss"] = float(sec["loss"])
    unknown = set(sec) - {"nodes", "links", "root", "sender", "adversary", "target",
                          "sniff", "latency", "loss"}
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [topology]: {sorted(unknown)}")
    for link in changes.get("links", []):
        if len(link) != 2:
            raise ConfigurationError(f"links are written A-B, got {'-'.join(link)}")
    return replace(topo, **changes)


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(str(exc)) from None
    unknown = set(parser.sections()) - {"scenario", "attack", "topology", "trust", "energy"}
    if unknown:
        raise ConfigurationError(f"unknown section(s): {sorted(unknown)}")
    trust_keys = {f.name: int for f in fields(TrustConfig)}
    try:
        return ScenarioConfig(
            attack=AttackConfig(**_section(parser, "attack", _ATTACK_KEYS)),
            topology=_topology(parser),
            trust=TrustConfig(**_section(parser, "trust", trust_keys)),
            **_section(parser, "scenario", _SCENARIO_KEYS),
            **_section(parser, "energy", _ENERGY_KEYS),
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser()
    parser["scenario"] = {k: str(getattr(cfg, k).value if k == "mode" else getattr(cfg, k))
                          for k in _SCENARIO_KEYS}
    parser["attack"] = {k: str(getattr(getattr(cfg.attack, k), "value", getattr(cfg.attack, k)))
                        for k in _ATTACK_KEYS}
    t = cfg.topology
    parser["topology"] = {
        "nodes": ", ".join(t.nodes),
        "links": ", ".join(f"{a}-{b}" for a, b in t.links),
        "root": t.root,
        "sender": t.sender,
        "adversary": t.adversary or "none",
        "target": t.target or "none",
        "sniff": ", ".join(f"{w}:{a}-{b}" for w, a, b in t.sniff),
        "latency": str(t.latency),
        "loss": str(t.loss),
    }
    parser["trust"] = {f.name: str(getattr(cfg.trust, f.name)) for f in fields(TrustConfig)}
    parser["energy"] = {k: str(getattr(cfg, k)) for k in _ENERGY_KEYS}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
