import random

from hypothesis import given, settings, strategies as st

from csmlowpan.frag import FragKind, Fragment, FragmentHeader, fragment_packet
from csmlowpan.reassembly import AssemblyBuffer, Reject, Status

ADV, LEGIT = b"adv", b"legit"


def packet(size=512, tag=1, seed=0):
    data = random.Random(seed).randbytes(size)
    return data, fragment_packet(data, tag, 102)


def test_first_fragment_reserves_single_slot():
    buf = AssemblyBuffer()
    _, adv = packet(tag=9)
    _, legit = packet(tag=1)
    assert buf.on_fragment(adv[0], ADV, 58.0).status is Status.ACCEPTED
    v = buf.on_fragment(legit[0], LEGIT, 60.0)
    assert v.status is Status.REJECTED and v.reason is Reject.BUFFER_BUSY
    assert buf.occupancy == 1


def test_in_order_delivery_completes():
    data, frags = packet()
    buf = AssemblyBuffer()
    verdicts = [buf.on_fragment(f, LEGIT, 1.0) for f in frags]
    assert [v.status for v in verdicts] == [Status.ACCEPTED] * 5 + [Status.COMPLETED]
    assert verdicts[-1].payload == data
    assert buf.occupancy == 0


def test_untrusted_sender_leaves_buffer_untouched():
    _, frags = packet()
    buf = AssemblyBuffer()
    v = buf.on_fragment(frags[0], ADV, 1.0, gate=lambda sender: False)
    assert v.reason is Reject.UNTRUSTED
    assert buf.occupancy == 0


def test_expiry_at_deadline():
    _, frags = packet()
    buf = AssemblyBuffer(reassembly_timeout=20.0)
    buf.on_fragment(frags[0], ADV, 50.0)
    assert buf.slots[(ADV, 1)].deadline == 70.0
    assert buf.expire(69.9) == []
    assert buf.occupancy == 1
    assert buf.expire(70.0) == [(ADV, 1)]
    assert buf.occupancy == 0


def test_expire_empty():
    assert AssemblyBuffer().expire(1e6) == []


def test_fragn_without_slot():
    _, frags = packet()
    assert AssemblyBuffer().on_fragment(frags[1], LEGIT, 0.0).reason is Reject.NO_SLOT


def test_duplicate_and_size_mismatch_keep_slot():
    _, frags = packet()
    buf = AssemblyBuffer()
    buf.on_fragment(frags[0], LEGIT, 0.0)
    buf.on_fragment(frags[1], LEGIT, 0.0)
    before = list(buf.slots[(LEGIT, 1)].received)
    assert buf.on_fragment(frags[1], LEGIT, 5.0).reason is Reject.DUPLICATE
    odd = Fragment(FragmentHeader(FragKind.FRAGN, 600, 1, 24), bytes(96))
    assert buf.on_fragment(odd, LEGIT, 5.0).reason is Reject.SIZE_MISMATCH
    assert buf.slots[(LEGIT, 1)].received == before
    assert buf.slots[(LEGIT, 1)].deadline == 20.0


def test_slots_are_per_sender_and_tag():
    _, frags = packet(tag=3)
    buf = AssemblyBuffer(capacity=2)
    buf.on_fragment(frags[0], ADV, 0.0)
    buf.on_fragment(frags[0], LEGIT, 0.0)
    assert set(buf.slots) == {(ADV, 3), (LEGIT, 3)}


@settings(max_examples=300)
@given(st.integers(0, 2**32), st.integers(104, 1280))
def test_any_arrival_order_completes_with_original_payload(seed, size):
    data, frags = packet(size, seed=seed)
    rng = random.Random(seed)
    rest = frags[1:]
    rng.shuffle(rest)
    buf = AssemblyBuffer()
    verdicts = [buf.on_fragment(f, LEGIT, 0.0) for f in [frags[0]] + rest]
    assert verdicts[-1].status is Status.COMPLETED
    assert verdicts[-1].payload == data


frag_events = st.lists(
    st.tuples(st.sampled_from([ADV, LEGIT]), st.integers(0, 3), st.integers(0, 5),
              st.floats(0, 5)),
    max_size=60,
)


@settings(max_examples=300)
@given(frag_events, st.integers(1, 3))
def test_occupancy_never_exceeds_capacity(events, capacity):
    buf = AssemblyBuffer(capacity=capacity, reassembly_timeout=20.0)
    pkts = {t: packet(tag=t)[1] for t in range(4)}
    now = 0.0
    for sender, tag, idx, dt in events:
        now += dt
        buf.expire(now)
        buf.on_fragment(pkts[tag][idx], sender, now)
        assert buf.occupancy <= capacity
        for slot in buf.slots.values():
            assert slot.deadline - now <= 20.0 + 1e-9
            spans = slot.received
            assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))
            assert all(0 <= s < e <= slot.datagram_size for s, e in spans)


@settings(max_examples=200)
@given(frag_events)
def test_gated_sender_never_changes_occupancy(events):
    buf = AssemblyBuffer()
    pkts = {t: packet(tag=t)[1] for t in range(4)}
    gate = lambda sender: sender != ADV
    for sender, tag, idx, _ in events:
        if sender != ADV:
            continue
        before = dict(buf.slots)
        v = buf.on_fragment(pkts[tag][idx], sender, 0.0, gate=gate)
        assert v.reason is Reject.UNTRUSTED
        assert buf.slots == before
