import pytest
from hypothesis import given, settings, strategies as st

from cykas import protocol as cp
from cykas.protocol import Kind, Payload, ProtocolError, WireMessage, control_message, data_message

from reference import RefProcess

ALICE, BOB, CAROL = 0, 1, 2


def pay(src, dst, seq=0):
    return Payload(src, dst, seq)


def kinds(out):
    return [(m.kind.label, m.dst) for m in out.emissions]


def test_init_examples():
    s = cp.init(0, 3)
    assert s.ob == () and s.unack_bits() == [0, 0, 0] and s.mode == 0
    assert s.eager_sent_map() == {}
    assert cp.init(0, 1).unack_bits() == [0]
    assert cp.init(5, 10).unack_bits() == [0] * 10


@pytest.mark.parametrize("id,n", [(3, 3), (-1, 3), (0, 0)])
def test_init_rejects_bad_ids(id, n):
    with pytest.raises(ValueError):
        cp.init(id, n)


def test_application_send_rejects_self_and_foreign_payloads():
    s = cp.init(0, 3)
    with pytest.raises(ValueError):
        cp.application_send(s, pay(0, 0))
    with pytest.raises(ValueError):
        cp.application_send(s, pay(1, 2))
    with pytest.raises(ValueError):
        cp.application_send(s, pay(0, 7))


def test_alice_sends_normal_then_eager():
    out = cp.application_send(cp.init(ALICE, 3), pay(ALICE, CAROL, 0))
    assert kinds(out) == [("NormalSend", CAROL)]
    assert out.state.unack_bits() == [0, 0, 1] and out.state.ob == ()

    out = cp.application_send(out.state, pay(ALICE, BOB, 1))
    assert kinds(out) == [("EagerSend", BOB)]
    assert out.state.eager_sent_map() == {BOB: [[0, 0, 1]]}
    assert out.state.unack_bits() == [0, 1, 1]


def test_app_send_in_secret_mode_only_queues():
    s = cp.init(BOB, 3)._replace(mode=1)
    out = cp.application_send(s, pay(BOB, CAROL))
    assert out.emissions == ()
    assert out.state.ob == (pay(BOB, CAROL),)


def test_try_send_message_blocked_cases():
    s = cp.init(0, 3)._replace(mode=2, ob=(pay(0, 1),))
    assert cp.try_send_message(s) == cp.TransitionOutput(s)
    s = cp.init(0, 3)._replace(ob=(pay(0, 1),), unack=0b010)
    assert cp.try_send_message(s) == cp.TransitionOutput(s)


def test_try_send_message_drains_normal_then_eager():
    m, m2 = pay(0, 1, 0), pay(0, 2, 1)
    s = cp.init(0, 3)._replace(ob=(m, m2))
    out = cp.try_send_message(s)
    assert kinds(out) == [("NormalSend", 1), ("EagerSend", 2)]
    assert [e.payload for e in out.emissions] == [m, m2]
    assert out.state.eager_sent_map() == {2: [[0, 1, 0]]}
    assert out.state.unack_bits() == [0, 1, 1]
    assert out.state.ob == ()

    # the same step on the list-based transcription
    ref = RefProcess(0, 3)
    ref.ob = [m, m2]
    ref.try_send_message()
    assert [(k, d) for k, d, _ in ref.outbox] == kinds(out)
    assert ref.eager_sent_map() == out.state.eager_sent_map()
    assert ref.unack == out.state.unack_bits()


def test_try_send_stops_at_first_blocked_head():
    s = cp.init(0, 3)._replace(ob=(pay(0, 1, 0), pay(0, 1, 1), pay(0, 2, 2)))
    out = cp.try_send_message(s)
    assert kinds(out) == [("NormalSend", 1)]
    assert [p.seq for p in out.state.ob] == [1, 2]


def test_receive_deliver_examples():
    carol = cp.init(CAROL, 3)
    m1 = data_message(Kind.NORMAL, pay(ALICE, CAROL))
    out = cp.receive_deliver(carol, m1)
    assert out.deliveries == (m1.payload,)
    assert kinds(out) == [("Ack", ALICE)]
    assert out.state.mode == 0

    bob = cp.init(BOB, 3)
    m2 = data_message(Kind.EAGER, pay(ALICE, BOB, 1))
    out = cp.receive_deliver(bob, m2)
    assert out.state.mode == 1 and out.deliveries == (m2.payload,)
    assert kinds(out) == [("Ack", ALICE)]
    assert cp.receive_deliver(out.state, m2).state.mode == 2


def test_receive_deliver_rejects_control_and_misrouted():
    with pytest.raises(ProtocolError):
        cp.receive_deliver(cp.init(1, 3), control_message(Kind.ACK, 0, 1))
    with pytest.raises(ProtocolError):
        cp.handle(cp.init(1, 3), data_message(Kind.NORMAL, pay(0, 2)))


def alice_after_two_sends():
    s = cp.application_send(cp.init(ALICE, 3), pay(ALICE, CAROL, 0)).state
    return cp.application_send(s, pay(ALICE, BOB, 1)).state


def test_receive_ack_from_carol_then_bob():
    out = cp.receive_ack(alice_after_two_sends(), CAROL)
    assert out.state.unack_bits() == [0, 1, 0]
    assert out.state.eager_sent_map() == {BOB: [[0, 0, 0]]}
    assert out.emissions == ()

    out = cp.receive_ack(out.state, BOB)
    assert kinds(out) == [("Yct", BOB)]
    assert out.state.eager_sent_map() == {}
    assert cp.is_quiescent(out.state)


def test_receive_ack_unblocks_head_without_eager_entries():
    s = cp.init(0, 3)._replace(ob=(pay(0, 1, 1),), unack=0b010)
    out = cp.receive_ack(s, 1)
    assert kinds(out) == [("NormalSend", 1)]
    assert out.state.ob == ()


def test_receive_ack_with_nothing_outstanding_is_an_error():
    with pytest.raises(ProtocolError):
        cp.receive_ack(cp.init(0, 3), 1)


def test_try_send_yct_examples():
    s = cp.init(0, 3)._replace(eager_sent=((), (0b100,), ()))
    assert cp.try_send_yct(s, 1).emissions == ()
    s = cp.init(0, 3)._replace(eager_sent=((), (0,), ()), unack=0b010)
    assert cp.try_send_yct(s, 1).emissions == ()
    s = cp.init(0, 3)._replace(eager_sent=((), (0, 0), ()))
    out = cp.try_send_yct(s, 1)
    assert kinds(out) == [("Yct", 1), ("Yct", 1)]
    assert out.state.eager_sent == ((), (), ())


def test_try_send_yct_stops_at_nonzero_entry():
    s = cp.init(0, 3)._replace(eager_sent=((), (0, 0b100, 0), ()))
    out = cp.try_send_yct(s, 1)
    assert kinds(out) == [("Yct", 1)]
    assert out.state.eager_sent[1] == (0b100, 0)


def test_receive_yct_examples():
    bob = cp.init(BOB, 3)._replace(mode=1, ob=(pay(BOB, CAROL, 0),))
    out = cp.receive_yct(bob)
    assert out.state.mode == 0 and kinds(out) == [("NormalSend", CAROL)]

    out = cp.receive_yct(cp.init(BOB, 3)._replace(mode=2, ob=(pay(BOB, CAROL),)))
    assert out.state.mode == 1 and out.emissions == ()

    out = cp.receive_yct(cp.init(BOB, 3)._replace(mode=1))
    assert out.state.mode == 0 and out.emissions == ()

    with pytest.raises(ProtocolError):
        cp.receive_yct(cp.init(BOB, 3))


def test_alice_bob_carol_full_replay():
    alice, bob, carol = (cp.init(i, 3) for i in range(3))
    out = cp.application_send(alice, pay(ALICE, CAROL, 0))
    alice, (m1,) = out.state, out.emissions
    out = cp.application_send(alice, pay(ALICE, BOB, 1))
    alice, (m2,) = out.state, out.emissions
    assert alice.eager_sent_map() == {BOB: [[0, 0, 1]]}
    assert alice.unack_bits() == [0, 1, 1]

    out = cp.handle(carol, m1)
    carol, (ack_c,) = out.state, out.emissions
    out = cp.handle(bob, m2)
    bob, (ack_b,) = out.state, out.emissions
    assert bob.mode == 1

    out = cp.application_send(bob, pay(BOB, CAROL, 0))
    bob = out.state
    assert out.emissions == () and len(bob.ob) == 1

    out = cp.handle(alice, ack_c)
    alice = out.state
    assert out.emissions == ()
    out = cp.handle(alice, ack_b)
    alice, (yct,) = out.state, out.emissions
    assert yct.kind is Kind.YCT and yct.dst == BOB

    out = cp.handle(bob, yct)
    bob, (m3,) = out.state, out.emissions
    assert (m3.kind, m3.dst, bob.mode) == (Kind.NORMAL, CAROL, 0)

    out = cp.handle(carol, m3)
    carol = out.state
    bob = cp.handle(bob, out.emissions[0]).state
    assert all(cp.is_quiescent(s) for s in (alice, bob, carol))


def test_describe_and_wire_rendering():
    assert cp.describe(alice_after_two_sends()) == ("unack=011", "mode=0")
    assert data_message(Kind.EAGER, pay(0, 2, 4)).describe() == "EagerSend 0→2 #4"
    assert control_message(Kind.YCT, 1, 0).describe() == "Yct 1→0"
    with pytest.raises(ValueError):
        control_message(Kind.ACK, 1, 1)


def test_transitions_do_not_mutate_inputs():
    s = alice_after_two_sends()
    snapshot = tuple(s)
    cp.receive_ack(s, CAROL)
    cp.application_send(s, pay(ALICE, CAROL, 2))
    assert tuple(s) == snapshot


# -- randomized comparison against the list-based transcription ----------------


def _random_run(n, sends, picks):
    """Drive both implementations with the same schedule.

    ``sends`` lists (sender, receiver) app-sends in script order, ``picks``
    chooses which enabled action fires next.
    """
    states = [cp.init(i, n) for i in range(n)]
    refs = [RefProcess(i, n) for i in range(n)]
    queue = list(sends)
    seqs = [0] * n
    network = []  # (WireMessage, ref tuple)
    picks = iter(picks)
    steps = 0
    while queue or network:
        choice = next(picks, 0) % (len(network) + (1 if queue else 0))
        if queue and choice == len(network):
            src, dst = queue.pop(0)
            p = Payload(src, dst, seqs[src])
            seqs[src] += 1
            out = cp.application_send(states[src], p)
            refs[src].application_send(p)
            pid = src
        else:
            msg, ref_msg = network.pop(choice)
            pid = msg.dst
            out = cp.handle(states[pid], msg)
            kind, _, m = ref_msg
            if kind in ("NormalSend", "EagerSend"):
                refs[pid].receive_deliver(kind, msg.src, m)
            elif kind == "Ack":
                refs[pid].receive_ack(msg.src)
            else:
                refs[pid].receive_yct()
        states[pid] = out.state
        ref_out, refs[pid].outbox = refs[pid].outbox, []
        assert [(k, d) for k, d, _ in ref_out] == kinds(out)
        network.extend(zip(out.emissions, ref_out))

        r, s = refs[pid], states[pid]
        assert r.unack == s.unack_bits()
        assert r.mode == s.mode >= 0
        assert r.eager_sent_map() == s.eager_sent_map()
        assert list(s.ob) == r.ob
        steps += 1
    assert all(cp.is_quiescent(s) for s in states)
    return steps


schedules = st.integers(min_value=2, max_value=4).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(
            st.tuples(st.integers(0, n - 1), st.integers(1, n - 1)).map(
                lambda t: (t[0], (t[0] + t[1]) % n)
            ),
            max_size=12,
        ),
        st.lists(st.integers(0, 50), max_size=200),
    )
)


@settings(max_examples=300, deadline=None)
@given(schedules)
def test_matches_reference_transcription(case):
    n, sends, picks = case
    _random_run(n, sends, picks)


@settings(max_examples=200, deadline=None)
@given(schedules)
def test_eager_sent_lengths_track_outstanding_ycts(case):
    n, sends, picks = case
    states = [cp.init(i, n) for i in range(n)]
    eager_to = [[0] * n for _ in range(n)]
    yct_to = [[0] * n for _ in range(n)]
    eager_in = [0] * n
    yct_in = [0] * n
    queue, network, seqs = list(sends), [], [0] * n
    picks = iter(picks)
    while queue or network:
        choice = next(picks, 0) % (len(network) + (1 if queue else 0))
        if queue and choice == len(network):
            src, dst = queue.pop(0)
            out = cp.application_send(states[src], Payload(src, dst, seqs[src]))
            seqs[src] += 1
            pid = src
        else:
            msg = network.pop(choice)
            pid = msg.dst
            eager_in[pid] += msg.kind is Kind.EAGER
            yct_in[pid] += msg.kind is Kind.YCT
            out = cp.handle(states[pid], msg)
        states[pid] = out.state
        for m in out.emissions:
            eager_to[pid][m.dst] += m.kind is Kind.EAGER
            yct_to[pid][m.dst] += m.kind is Kind.YCT
            # at most one unacknowledged data message per ordered pair: no
            # earlier copy in flight and no ACK for one on its way back
            if m.kind.is_data:
                assert not any(
                    (w.kind.is_data and (w.src, w.dst) == (m.src, m.dst))
                    or (w.kind is Kind.ACK and (w.src, w.dst) == (m.dst, m.src))
                    for w in network
                )
        network.extend(out.emissions)
        s = states[pid]
        assert s.unack >> pid & 1 == 0
        assert s.mode == eager_in[pid] - yct_in[pid] >= 0
        for j in range(n):
            assert len(s.eager_sent[j]) == eager_to[pid][j] - yct_to[pid][j]
        # no data leaves a process that is in secret mode
        if any(m.kind.is_data for m in out.emissions):
            assert s.mode == 0
