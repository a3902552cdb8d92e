"""Messages, their binary codec and the per-car crossing state machine.

Wire format (little endian)::

    offset  size  field
    0       1     msg_type   1 = HB, 2 = ENTER, 3 = EXIT
    1       4     uid        uint32
    5       ...   payload
                  HB:    x, y, v, a        4 x float64
                  ENTER: clane, nlane      2 x uint8 (arm number 1..4)
                         tau_mti           float64 (+inf allowed)
                  EXIT:  nlane             uint8

Every message fits in one packet and is delivered or lost as a whole.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Optional, Union

from . import kinematics as kin
from .estimation import EPSILON, PositionBelief, cond1, cond2
from .geometry import IntersectionGeometry, Lane, Route, col_entrance, collision_area, subsections_of
from .kinematics import ControlCommand, ControlMode, Pose


class MsgType(IntEnum):
    HB = 1
    ENTER = 2
    EXIT = 3


@dataclass(frozen=True)
class HbPayload:
    x: float
    y: float
    v: float
    a: float


@dataclass(frozen=True)
class EnterPayload:
    clane: Lane
    nlane: Lane
    tau_mti: float


@dataclass(frozen=True)
class ExitPayload:
    nlane: Lane


Payload = Union[HbPayload, EnterPayload, ExitPayload]
_PAYLOAD_TYPE = {MsgType.HB: HbPayload, MsgType.ENTER: EnterPayload, MsgType.EXIT: ExitPayload}


@dataclass(frozen=True)
class Message:
    uid: int
    msg_type: MsgType
    payload: Payload

    def __post_init__(self):
        object.__setattr__(self, "msg_type", MsgType(self.msg_type))
        if not isinstance(self.payload, _PAYLOAD_TYPE[self.msg_type]):
            raise TypeError(f"{self.msg_type.name} message needs a {_PAYLOAD_TYPE[self.msg_type].__name__}")
        if not 0 <= self.uid < 2**32:
            raise ValueError("uid must fit in 32 bits")

    @property
    def route(self) -> Route:
        return Route(self.payload.clane, self.payload.nlane)


class DecodeError(ValueError):
    """Raised for byte strings that are not a valid message."""


class TruncatedMessageError(DecodeError):
    pass


class UnknownMessageTypeError(DecodeError):
    pass


_HEADER = struct.Struct("<BI")
_HB = struct.Struct("<dddd")
_ENTER = struct.Struct("<BBd")
_EXIT = struct.Struct("<B")
_BODY = {MsgType.HB: _HB, MsgType.ENTER: _ENTER, MsgType.EXIT: _EXIT}


def encode(msg: Message) -> bytes:
    head = _HEADER.pack(int(msg.msg_type), msg.uid)
    p = msg.payload
    if msg.msg_type is MsgType.HB:
        return head + _HB.pack(p.x, p.y, p.v, p.a)
    if msg.msg_type is MsgType.ENTER:
        return head + _ENTER.pack(p.clane.arm, p.nlane.arm, p.tau_mti)
    return head + _EXIT.pack(p.nlane.arm)


def decode(data: bytes) -> Message:
    if len(data) < _HEADER.size:
        raise TruncatedMessageError(f"need at least {_HEADER.size} header bytes, got {len(data)}")
    code, uid = _HEADER.unpack_from(data)
    try:
        kind = MsgType(code)
    except ValueError:
        raise UnknownMessageTypeError(f"unknown message type {code}") from None
    body = _BODY[kind]
    if len(data) != _HEADER.size + body.size:
        raise TruncatedMessageError(
            f"{kind.name} message must be {_HEADER.size + body.size} bytes, got {len(data)}"
        )
    fields = body.unpack_from(data, _HEADER.size)
    try:
        if kind is MsgType.HB:
            payload = HbPayload(*fields)
        elif kind is MsgType.ENTER:
            payload = EnterPayload(Lane(f"H{fields[0]}R"), Lane(f"H{fields[1]}L"), fields[2])
        else:
            payload = ExitPayload(Lane(f"H{fields[0]}L"))
    except ValueError as exc:
        raise DecodeError(str(exc)) from None
    return Message(uid, kind, payload)


class Priority(str, Enum):
    PROCEED = "PROCEED"
    YIELD = "YIELD"


def decide_priority(mine: Message, peer: Message, col, tau_th: float) -> Priority:
    """Crossing order from the two ENTER messages.

    Both cars evaluate this on the same pair of messages, so their decisions
    are complementary whenever a conflict is possible.
    """
    t1, t2 = mine.payload.tau_mti, peer.payload.tau_mti
    if not col:
        return Priority.PROCEED
    same = t1 == t2  # also covers (inf, inf): both cars stopped
    if not same and abs(t1 - t2) > tau_th:
        return Priority.PROCEED
    if t1 < t2 or (same and mine.uid > peer.uid):
        return Priority.PROCEED
    return Priority.YIELD


class Phase(IntEnum):
    BEFORE_ENTER = 0
    ENTER = 1
    WAIT_FOR_EXIT = 2
    EXIT = 3
    DONE = 4


@dataclass
class ProtocolParams:
    T: float = 0.1
    R: float = 500.0
    epsilon: float = EPSILON
    l: float = 3.0
    tau_th: float = 1.0
    D: Optional[float] = None
    a_resume: float = 2.0
    v_max: float = 40.0

    def __post_init__(self):
        if not (self.T > 0 and self.R > 0):
            raise ValueError("T and R must be positive")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.l < 0 or self.tau_th < 0:
            raise ValueError("l and tau_th must be non-negative")
        if self.D is not None and not self.D > 0:
            raise ValueError("D must be positive")
        if not self.a_resume > 0:
            raise ValueError("a_resume must be positive")


@dataclass(frozen=True)
class LocalView:
    """What a car knows about itself at the start of a slot."""

    pose: Pose
    belief: PositionBelief
    xy: tuple[float, float] = (0.0, 0.0)


@dataclass
class ProtocolMachine:
    """Crossing state machine for one car.

    ``slot_step`` is called once per slot with the messages delivered in the
    previous slot; it returns the single message to broadcast this slot and
    the control command to apply.
    """

    uid: int
    route: Route
    geometry: IntersectionGeometry
    params: ProtocolParams = field(default_factory=ProtocolParams)
    a_desired: float = 0.0
    v_desired: float = 10.0

    phase: Phase = Phase.BEFORE_ENTER
    mode: ControlMode = ControlMode.CRUISE
    heard_peer: bool = False
    cond1_latched: bool = False
    my_enter: Optional[Message] = None
    peer_enter: Optional[Message] = None
    last_sent: Optional[MsgType] = None
    has_priority: Optional[bool] = None
    col: Optional[frozenset] = None
    x_col: Optional[float] = None
    a_nopr: Optional[float] = None
    awaiting_peer_exit: bool = False
    guard_braking: bool = False
    exit_started: bool = False
    first_enter_slot: Optional[int] = None
    mainctrl_slot: Optional[int] = None
    exit_slot: Optional[int] = None
    done_slot: Optional[int] = None
    safe_slots: int = 0

    # ---------------------------------------------------------------- control
    def _desired_accel(self, pose: Pose) -> float:
        if pose.v < self.v_desired - 1e-9:
            return max(self.a_desired, self.params.a_resume)
        if pose.v >= self.params.v_max:
            return min(self.a_desired, 0.0)
        return self.a_desired

    def _x_hat_max(self, belief: PositionBelief) -> float:
        return belief.mean + self.params.l * belief.sigma

    def _safe_target(self) -> float:
        if self.col:
            return self.x_col
        return self.geometry.box_entry

    def _safe_accel(self, pose: Pose, belief: PositionBelief) -> float:
        if pose.v <= 0:
            return 0.0
        est = Pose(belief.mean, pose.v, pose.a)
        tau = kin.time_to_col(est, self._safe_target(), self._x_hat_max(belief))
        if tau == 0:
            return -self.geometry.max_brake
        if math.isinf(tau):
            # current deceleration already stops short of the target
            return min(pose.a, 0.0)
        return kin.accel_safe(est, tau)

    def _guarded(self, pose: Pose, belief: PositionBelief, candidate: float) -> float:
        """Apply ``candidate`` while the car can still stop short of COL at max braking."""
        gap = self.x_col - self._x_hat_max(belief)
        if not self.guard_braking and gap > 0:
            nxt = kin.step(pose.with_accel(candidate), self.params.T)
            gap_next = gap - (nxt.x - pose.x)
            if gap_next > 0 and kin.stopping_distance(nxt.v, self.geometry.max_brake) <= gap_next:
                return candidate
            self.guard_braking = True
        if pose.v <= 0:
            return 0.0
        if gap <= 0:
            return -self.geometry.max_brake
        # constant deceleration that stops exactly at the limit
        return -pose.v * pose.v / (2.0 * gap)

    def control(self, local: LocalView) -> ControlCommand:
        pose, belief = local.pose, local.belief
        if self.mode is ControlMode.SAFE:
            a = self._safe_accel(pose, belief)
        elif self.mode is ControlMode.MAIN_YIELD:
            a = self._guarded(pose, belief, self.a_nopr)
        elif self.awaiting_peer_exit:
            a = self._guarded(pose, belief, self._desired_accel(pose))
        else:
            a = self._desired_accel(pose)
        return ControlCommand(self.mode, a)

    # -------------------------------------------------------------- messages
    def _hb(self, local: LocalView) -> Message:
        return Message(self.uid, MsgType.HB, HbPayload(local.xy[0], local.xy[1], local.pose.v, local.pose.a))

    def _exit(self) -> Message:
        return Message(self.uid, MsgType.EXIT, ExitPayload(self.route.nlane))

    def _make_enter(self, local: LocalView) -> Message:
        est = Pose(local.belief.mean, local.pose.v, local.pose.a)
        tau = kin.mti(est, self.geometry.x_s) if est.x <= self.geometry.x_s else 0.0
        return Message(self.uid, MsgType.ENTER, EnterPayload(self.route.clane, self.route.nlane, tau))

    # ---------------------------------------------------------- transitions
    def _start_mainctrl(self, slot: int, local: LocalView) -> None:
        self.mainctrl_slot = slot
        self.col = collision_area(self.route, self.peer_enter.route)
        if self.col:
            self.x_col = col_entrance(self.col, self.route, self.geometry)
        decision = decide_priority(self.my_enter, self.peer_enter, self.col, self.params.tau_th)
        self.has_priority = decision is Priority.PROCEED
        # the car that is second in line keeps clear of COL until the peer's EXIT,
        # even when the MTI gap lets it proceed: its own timing may have gone stale
        first = decide_priority(self.my_enter, self.peer_enter, self.col, math.inf)
        self.awaiting_peer_exit = first is Priority.YIELD
        if self.has_priority:
            self.phase = Phase.EXIT
            self.mode = ControlMode.MAIN_PRIORITY
            return
        self.phase = Phase.WAIT_FOR_EXIT
        self.mode = ControlMode.MAIN_YIELD
        self.a_nopr = self._nopr_accel(local)

    def _nopr_accel(self, local: LocalView) -> float:
        pose = local.pose.with_accel(self._desired_accel(local.pose))
        nxt = kin.step(pose, self.params.T)
        nxt_hat_max = self._x_hat_max(local.belief) + (nxt.x - pose.x)
        tau = kin.time_to_col(nxt, self.x_col, nxt_hat_max)
        D = self.params.D or self.geometry.subsection_width * len(
            [c for c in subsections_of(self.route) if c in self.col]
        )
        if tau == 0:
            return -self.geometry.max_brake
        if math.isinf(tau):
            return min(pose.a, 0.0)
        return kin.accel_nopr(nxt, tau, D)

    def _cond1(self, local: LocalView) -> bool:
        if not self.cond1_latched and local.pose.v > 0:
            self.cond1_latched = cond1(
                local.belief,
                local.pose,
                ca_start=self.geometry.capture_start(local.pose.v),
                x_s=self.geometry.x_s,
                R=self.params.R,
                T=self.params.T,
                epsilon=self.params.epsilon,
            )
        return self.cond1_latched

    def slot_step(self, slot: int, local: LocalView, inbox: Iterable[Message] = ()):
        """Run one slot. Returns ``(message, control)``."""
        peer_msgs = [m for m in inbox if m.uid != self.uid]
        kinds = {m.msg_type for m in peer_msgs}
        if peer_msgs:
            self.heard_peer = True
        # an HB/EXIT heard after the peer's ENTER acknowledges our own ENTER
        acked = self.peer_enter is not None and bool(kinds & {MsgType.HB, MsgType.EXIT})
        for m in peer_msgs:
            if m.msg_type is MsgType.ENTER and self.peer_enter is None and self.phase < Phase.DONE:
                self.peer_enter = m
        peer_exit = MsgType.EXIT in kinds

        out: Optional[Message] = None
        if self.phase is Phase.BEFORE_ENTER:
            if self._cond1(local) and self.heard_peer:
                self.phase = Phase.ENTER
                self.first_enter_slot = slot
                self.my_enter = self._make_enter(local)
                out = self.my_enter
            elif self.cond1_latched:
                # peer never heard: hold short of the box until it is
                self.mode = ControlMode.SAFE
        elif self.phase is Phase.ENTER:
            if acked:
                self._start_mainctrl(slot, local)
            elif self.peer_enter is None or self.last_sent is MsgType.HB:
                out = self.my_enter
                self.mode = ControlMode.SAFE
            else:
                out = self._hb(local)

        if peer_exit and self.awaiting_peer_exit:
            self.awaiting_peer_exit = False
            self.guard_braking = False
            if self.phase is Phase.WAIT_FOR_EXIT:
                self.phase = Phase.EXIT
                self.mode = ControlMode.EXIT_RESUME

        if self.phase is Phase.EXIT:
            if self.exit_started and peer_exit:
                self.phase = Phase.DONE
                self.done_slot = slot
            elif not self.exit_started and cond2(local.belief, self.geometry.exit_boundary(self.route), self.params.epsilon):
                self.exit_started = True
                self.exit_slot = slot
            if self.phase is Phase.EXIT and self.exit_started:
                out = self._exit()
        elif self.phase is Phase.DONE and out is None and peer_exit:
            out = self._exit()

        if out is None:
            out = self._hb(local)
        self.last_sent = out.msg_type
        if self.mode is ControlMode.SAFE:
            self.safe_slots += 1
        return out, self.control(local)

    # ------------------------------------------------------------- helpers
    @property
    def mainctrl(self) -> bool:
        return self.mainctrl_slot is not None
