import pytest
from hypothesis import given, strategies as st

from csmlowpan.trust import NodeIdentity, TrustConfig, TrustStore, next_trust

PEER = NodeIdentity.for_node(4)
UNKNOWN = None
MAX_LEN = 12


def reference(start, outcomes):
    """Update rules restated from scratch: unknown jumps to the bound, known moves by 10."""
    v = start
    for ok in outcomes:
        if v is None:
            v = 100 if ok else 0
        elif ok:
            v = v + 10 if v + 10 < 100 else 100
        else:
            v = v - 10 if v - 10 > 0 else 0
    return v


def test_examples():
    cfg = TrustConfig()
    assert next_trust(None, True, cfg) == 100
    assert next_trust(None, False, cfg) == 0
    assert next_trust(100, False, cfg) == 90
    assert next_trust(0, False, cfg) == 0


def test_gates_at_boundaries():
    store = TrustStore()
    for value, control, frag in [(50, True, False), (49, False, False), (60, True, True),
                                 (59, True, False), (100, True, True), (0, False, False)]:
        store.set(PEER, value)
        assert store.control_gate(PEER) is control, value
        assert store.fragment_gate(PEER.link_addr) is frag, value


def test_unknown_sender_fails_fragment_gate():
    store = TrustStore()
    assert not store.fragment_gate(PEER.link_addr)
    assert not store.control_gate(PEER)
    store.on_decode_result(PEER, True)
    assert not store.fragment_gate(NodeIdentity.for_node(99).link_addr)


def test_matches_reference_on_every_short_sequence():
    """All outcome sequences up to length 12 from every start value, walked depth first."""
    cfg = TrustConfig()
    store = TrustStore(cfg)
    starts = [UNKNOWN] + list(range(cfg.trust_val_min, cfg.trust_val_max + 1))
    checked = 0
    for start in starts:
        stack = [(start, ())]
        while stack:
            value, path = stack.pop()
            assert value == reference(start, path)
            checked += 1
            if len(path) == MAX_LEN:
                continue
            for ok in (True, False):
                if value is None:
                    store.forget(PEER)
                else:
                    store.set(PEER, value)
                new = store.on_decode_result(PEER, ok)
                assert cfg.trust_val_min <= new <= cfg.trust_val_max
                assert store.get(PEER.ipv6) == new
                assert store.fragment_gate(PEER.link_addr) == (new >= 60)
                assert store.control_gate(PEER) == (new >= 50)
                stack.append((new, path + (ok,)))
    assert checked == len(starts) * (2 ** (MAX_LEN + 1) - 1)


def failures_until(gate):
    store = TrustStore()
    store.on_decode_result(PEER, True)
    n = 0
    while gate(store):
        store.on_decode_result(PEER, False)
        n += 1
    return n


def test_five_failures_close_fragment_gate():
    assert failures_until(lambda s: s.fragment_gate(PEER.link_addr)) == 5


def test_six_failures_close_control_gate():
    assert failures_until(lambda s: s.control_gate(PEER)) == 6


@given(st.integers(0, 100), st.integers(0, 100))
def test_fragment_gate_monotone(a, b):
    lo, hi = sorted((a, b))
    s1, s2 = TrustStore(), TrustStore()
    s1.set(PEER, lo)
    s2.set(PEER, hi)
    assert s1.fragment_gate(PEER.link_addr) <= s2.fragment_gate(PEER.link_addr)


@given(st.integers(-500, 500))
def test_external_writes_are_clamped(value):
    store = TrustStore()
    store.set(PEER, value)
    assert 0 <= store.get(PEER.ipv6) <= 100


def test_link_binding_is_not_rebound():
    store = TrustStore()
    store.on_decode_result(PEER, True)
    spoofed = NodeIdentity(PEER.node_id, PEER.ipv6, b"\x99" * 8)
    store.on_decode_result(spoofed, True)
    assert store.fragment_gate(PEER.link_addr)
    assert not store.fragment_gate(spoofed.link_addr)


def test_listener_sees_transitions():
    seen = []
    store = TrustStore(listener=lambda n, old, new, cause: seen.append((old, new, cause)))
    store.on_decode_result(PEER, False)
    store.on_decode_result(PEER, True)
    assert seen == [(None, 0, "decode_fail"), (0, 10, "decode_ok")]


def test_config_validation():
    with pytest.raises(ValueError):
        TrustConfig(trust_trig=150)
    with pytest.raises(ValueError):
        TrustConfig(frag_threshold=-1)
