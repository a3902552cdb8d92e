import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from icsim import channel as ch
from icsim.estimation import PositionBelief
from icsim.geometry import ALL_ROUTES, IntersectionGeometry, Lane, Route, col_entrance, collision_area
from icsim.kinematics import ControlMode, Pose
from icsim.protocol import (
    DecodeError,
    EnterPayload,
    ExitPayload,
    HbPayload,
    LocalView,
    Message,
    MsgType,
    Phase,
    Priority,
    ProtocolMachine,
    TruncatedMessageError,
    UnknownMessageTypeError,
    decide_priority,
    decode,
    encode,
)
from icsim.sim import BurstSpec, LossSpec, burst_delay_scenario, run

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
uids = st.integers(0, 2**32 - 1)
routes = st.sampled_from(ALL_ROUTES)
taus = st.one_of(st.floats(0, 1e6, allow_nan=False), st.just(math.inf))


def enter(uid, route, tau):
    return Message(uid, MsgType.ENTER, EnterPayload(route.clane, route.nlane, tau))


messages = st.one_of(
    st.builds(lambda u, x, y, v, a: Message(u, MsgType.HB, HbPayload(x, y, v, a)), uids, finite, finite, finite, finite),
    st.builds(enter, uids, routes, taus),
    st.builds(lambda u, r: Message(u, MsgType.EXIT, ExitPayload(r.nlane)), uids, routes),
)


@given(messages)
def test_codec_round_trip(msg):
    data = encode(msg)
    assert decode(data) == msg
    assert data[0] == int(msg.msg_type)
    assert int.from_bytes(data[1:5], "little") == msg.uid


def test_enter_round_trips_bit_exactly():
    m = enter(3, Route.from_turn(2, "left"), 6.1803)
    assert decode(encode(m)).payload.tau_mti.hex() == (6.1803).hex()


def test_decode_errors():
    with pytest.raises(TruncatedMessageError):
        decode(b"")
    with pytest.raises(TruncatedMessageError):
        decode(encode(enter(1, ALL_ROUTES[0], 1.0))[:-1])
    with pytest.raises(UnknownMessageTypeError):
        decode(bytes([9, 0, 0, 0, 0]))
    bad_lane = bytes([3, 1, 0, 0, 0, 7])
    with pytest.raises(DecodeError):
        decode(bad_lane)
    assert issubclass(TruncatedMessageError, DecodeError) and issubclass(UnknownMessageTypeError, DecodeError)


def test_payload_must_match_type():
    with pytest.raises(TypeError):
        Message(1, MsgType.HB, ExitPayload(Lane.H1L))


S1 = Route.from_turn(1, "straight")
S2 = Route.from_turn(2, "straight")
COL = collision_area(S1, S2)


def test_priority_examples():
    r1, r2 = Route.from_turn(1, "right"), Route.from_turn(2, "right")
    empty = collision_area(r1, r2)
    assert decide_priority(enter(1, r1, 5), enter(2, r2, 5), empty, 0.5) is Priority.PROCEED
    assert decide_priority(enter(2, r2, 5), enter(1, r1, 5), empty, 0.5) is Priority.PROCEED
    a, b = enter(1, S1, 5.0), enter(2, S2, 6.0)
    assert decide_priority(a, b, COL, 0.5) is Priority.PROCEED
    assert decide_priority(b, a, COL, 0.5) is Priority.PROCEED
    c7, c4 = enter(7, S1, 5.0), enter(4, S2, 5.0)
    assert decide_priority(c7, c4, COL, 0.5) is Priority.PROCEED
    assert decide_priority(c4, c7, COL, 0.5) is Priority.YIELD
    i7, i4 = enter(7, S1, math.inf), enter(4, S2, math.inf)
    assert decide_priority(i7, i4, COL, 0.5) is Priority.PROCEED
    assert decide_priority(i4, i7, COL, 0.5) is Priority.YIELD


@given(taus, taus, st.floats(0, 5), st.integers(0, 100), st.integers(101, 200))
def test_priority_complementary_inside_threshold(t1, t2, th, u1, u2):
    m1, m2 = enter(u1, S1, t1), enter(u2, S2, t2)
    d1, d2 = decide_priority(m1, m2, COL, th), decide_priority(m2, m1, COL, th)
    inside = t1 == t2 or abs(t1 - t2) <= th
    if inside:
        assert {d1, d2} == {Priority.PROCEED, Priority.YIELD}
    else:
        assert d1 is d2 is Priority.PROCEED


GEOM = IntersectionGeometry()


def view(x, v=10.0, a=0.0):
    return LocalView(Pose(x, v, a), PositionBelief(x, 1.0))


def test_machine_sends_hb_before_trigger_and_enter_after():
    m = ProtocolMachine(1, S1, GEOM)
    out, ctl = m.slot_step(1, view(0.0))
    assert out.msg_type is MsgType.HB and ctl.mode is ControlMode.CRUISE
    hb_peer = Message(2, MsgType.HB, HbPayload(0, 0, 10, 0))
    out, _ = m.slot_step(2, view(500.0), [hb_peer])
    assert out.msg_type is MsgType.ENTER and m.phase is Phase.ENTER and m.first_enter_slot == 2


def test_cond1_without_heard_peer_holds_back():
    m = ProtocolMachine(1, S1, GEOM)
    out, ctl = m.slot_step(1, view(500.0))
    assert out.msg_type is MsgType.HB and ctl.mode is ControlMode.SAFE and ctl.accel <= 0
    assert m.phase is Phase.BEFORE_ENTER


def test_done_ignores_stale_enter():
    m = ProtocolMachine(1, S1, GEOM)
    m.phase = Phase.DONE
    out, _ = m.slot_step(10, view(700.0), [enter(2, S2, 1.0)])
    assert m.peer_enter is None and out.msg_type is MsgType.HB


def _rows(trace, uid):
    return trace.rows_for(uid)


@pytest.mark.parametrize("f1, f2", [(0, 0), (0, 1), (0, 3), (2, 5), (4, 4)])
def test_machine_invariants_along_runs(f1, f2):
    trace, verdict = run(burst_delay_scenario(f1, f2))
    order = [p.name for p in Phase]
    for uid in (1, 2):
        rows = _rows(trace, uid)
        slots = [r.slot for r in rows]
        assert slots == list(range(1, len(rows) + 1))  # one record and one message per slot
        assert all(r.msg_sent in ("HB", "ENTER", "EXIT") for r in rows)
        ranks = [order.index(r.phase) for r in rows]
        assert ranks == sorted(ranks)
        # SAFE only before MAINCTRL in burst-only runs
        main = verdict.mainctrl_slot[uid]
        assert all(r.control != "SAFE" for r in rows if r.slot > main)
    assert verdict.safe and verdict.both_crossed


def test_priority_set_only_with_both_enters():
    trace, verdict = run(burst_delay_scenario(0, 3))
    assert set(verdict.priority.values()) == {True, False}
    assert verdict.mainctrl_slot[1] >= verdict.first_enter_slot[2]
    assert verdict.mainctrl_slot[2] >= verdict.first_enter_slot[1]


def test_peer_silent_forever_keeps_both_cars_short_of_col():
    scn = burst_delay_scenario(0, 0)
    scn.loss = LossSpec(ch.LossKind.BURST, bursts={1: BurstSpec(10**6, start=1)})
    trace, verdict = run(scn)
    assert not verdict.both_crossed and verdict.safe
    x_col = col_entrance(COL, S1, GEOM)
    for uid in (1, 2):
        last = _rows(trace, uid)[-1]
        assert last.v == 0.0 and last.x_true <= x_col
    assert verdict.safe_slots[1] > 4000
