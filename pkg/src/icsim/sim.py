"""Slot-loop engine coupling two cars through the lossy channel."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import channel as ch
from .estimation import PositionBelief, cond1
from .geometry import ALL_ROUTES, IntersectionGeometry, Route, collision_area, subsections_of
from .kinematics import Pose, step, time_to_travel
from .protocol import LocalView, MsgType, Phase, ProtocolMachine, ProtocolParams


class ScenarioError(ValueError):
    """Scenario rejected before running; the message names the offending field."""


@dataclass
class CarSpec:
    uid: int
    route: Route
    x0: Optional[float] = None
    v0: float = 10.0
    a0: float = 0.0
    sigma_x: float = 1.0
    trigger_slot: Optional[int] = None


@dataclass
class BurstSpec:
    length: int
    start: Optional[int] = None
    offset: int = 0


@dataclass
class LossSpec:
    kind: ch.LossKind = ch.LossKind.NONE
    p_pdr: Optional[float] = None
    env: Optional[ch.Environment] = None
    lam: Optional[float] = None
    xi: float = 0.0
    bursts: dict = field(default_factory=dict)  # receiver uid -> BurstSpec

    def pdr_model(self) -> Optional[ch.PdrModel]:
        if self.lam is not None:
            return ch.PdrModel(self.lam)
        if self.env is not None:
            return ch.PdrModel.preset(self.env)
        return None


@dataclass
class Scenario:
    cars: list
    geometry: IntersectionGeometry = field(default_factory=IntersectionGeometry)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    loss: LossSpec = field(default_factory=LossSpec)
    tau_th: Optional[float] = None
    safety_gap: float = 2.0
    n_t: int = 5000
    seed: int = 0


def default_tau_th(geom: IntersectionGeometry, v1: float, v2: float, safety_gap: float = 2.0) -> float:
    return (geom.car_length + safety_gap) / max(v1, v2)


def trigger_position(geom: IntersectionGeometry, params: ProtocolParams, v: float, sigma: float) -> float:
    """Smallest position at which COND1 holds for a car cruising at ``v``."""
    ca = geom.capture_start(v)

    def holds(x):
        return cond1(PositionBelief(x, sigma), Pose(x, v, 0.0), ca_start=ca, x_s=geom.x_s,
                     R=params.R, T=params.T, epsilon=params.epsilon)

    lo, hi = ca - params.R - 1e4, ca
    if holds(lo) or not holds(hi):
        raise ScenarioError("COND1 threshold not bracketed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9:
            break
    return hi


def place_for_trigger(geom, params, car: CarSpec) -> float:
    """Start position such that COND1 first holds at ``car.trigger_slot``.

    The threshold is put half a slot of travel inside the trigger slot.
    """
    if car.a0 != 0:
        raise ScenarioError(f"cars[{car.uid}].trigger_slot needs a0 == 0")
    if car.trigger_slot < 1:
        raise ScenarioError(f"cars[{car.uid}].trigger_slot must be >= 1")
    x_thr = trigger_position(geom, params, car.v0, car.sigma_x)
    hop = car.v0 * params.T
    return x_thr - (car.trigger_slot - 1) * hop + 0.5 * hop


def resolve_x0(scn: Scenario, car: CarSpec) -> float:
    if car.x0 is not None:
        return car.x0
    if car.trigger_slot is None:
        raise ScenarioError(f"cars[{car.uid}]: give x0 or trigger_slot")
    return place_for_trigger(scn.geometry, scn.protocol, car)


def resolve_tau_th(scn: Scenario) -> float:
    if scn.tau_th is not None:
        return scn.tau_th
    return default_tau_th(scn.geometry, *(c.v0 for c in scn.cars), safety_gap=scn.safety_gap)


def validate(scn: Scenario) -> None:
    if len(scn.cars) != 2:
        raise ScenarioError("cars: exactly two cars are required")
    if scn.cars[0].uid == scn.cars[1].uid:
        raise ScenarioError("cars[1].uid: uids must be distinct")
    if scn.n_t < 1:
        raise ScenarioError("n_t must be >= 1")
    for i, car in enumerate(scn.cars):
        if not car.v0 > 0:
            raise ScenarioError(f"cars[{i}].v0 must be positive")
        if not car.sigma_x > 0:
            raise ScenarioError(f"cars[{i}].sigma_x must be positive")
        x0 = resolve_x0(scn, car)
        ca = scn.geometry.capture_start(car.v0)
        if x0 >= ca:
            raise ScenarioError(f"cars[{i}].x0 = {x0:.3f} lies inside the capture area (starts at {ca:.3f})")
    for uid in scn.loss.bursts:
        if uid not in {c.uid for c in scn.cars}:
            raise ScenarioError(f"loss.bursts: unknown receiver uid {uid}")


def build_processes(scn: Scenario) -> dict:
    loss = scn.loss
    uids = [c.uid for c in scn.cars]
    seeds = np.random.SeedSequence(scn.seed).spawn(len(uids))
    procs = {}
    for uid, ss in zip(uids, seeds):
        if loss.kind is ch.LossKind.NONE:
            procs[uid] = ch.NoLoss()
        elif loss.kind is ch.LossKind.BURST:
            b = loss.bursts.get(uid)
            procs[uid] = ch.BurstLoss(b.length, b.start, b.offset) if b else ch.NoLoss()
        elif loss.kind is ch.LossKind.GEOMETRIC:
            procs[uid] = ch.GeometricLoss(loss.p_pdr, ss, loss.pdr_model() if loss.p_pdr is None else None)
        else:
            procs[uid] = ch.CorrelatedLoss(loss.p_pdr, loss.xi, ss, loss.pdr_model() if loss.p_pdr is None else None)
    return procs


# --------------------------------------------------------------------- trace
@dataclass
class SlotRecord:
    slot: int
    uid: int
    x_true: float
    x_hat: float
    v: float
    a: float
    phase: str
    control: str
    msg_sent: str
    msgs_received: str
    msgs_lost: str


TRACE_COLUMNS = [f.name for f in fields(SlotRecord)]


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


class SlotTrace(list):
    """One SlotRecord per (slot, car), in slot order."""

    def rows_for(self, uid: int) -> list:
        return [r for r in self if r.uid == uid]

    def to_csv(self, header: Optional[dict] = None) -> str:
        buf = io.StringIO()
        for k, v in (header or {}).items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self:
            w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
        return buf.getvalue()


@dataclass
class Verdict:
    safe: bool
    both_crossed: bool
    t_en_observed: Optional[int]
    total_crossing_slots: Optional[int]
    min_separation: float
    col: list
    priority: dict
    first_enter_slot: dict
    mainctrl_slot: dict
    crossed_slot: dict
    safe_slots: dict
    overlaps: list
    slots_run: int

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def crossing_time(rows, T: float, target: float) -> float:
    """Exact time (s) at which the front bumper first reaches ``target``."""
    for r in rows:
        t0 = (r.slot - 1) * T
        if r.x_true >= target:
            return t0
        tau = time_to_travel(r.v, r.a, target - r.x_true)
        if tau <= T:
            return t0 + tau
    return math.inf


def occupancy_intervals(trace: SlotTrace, geom: IntersectionGeometry, route: Route, uid: int, T: float) -> dict:
    """Per-cell [t_in, t_out] during which any part of the car overlaps the cell."""
    rows = trace.rows_for(uid)
    out = {}
    for cell in subsections_of(route):
        a, b = geom.cell_span(route, cell)
        t_in = crossing_time(rows, T, a)
        if math.isinf(t_in):
            continue
        out[cell] = (t_in, crossing_time(rows, T, b + geom.car_length))
    return out


def find_overlaps(occ1: dict, occ2: dict, col) -> list:
    bad = []
    for cell in sorted(col):
        if cell in occ1 and cell in occ2:
            (a1, b1), (a2, b2) = occ1[cell], occ2[cell]
            if max(a1, a2) < min(b1, b2):
                bad.append((cell, max(a1, a2), min(b1, b2)))
    return bad


# ---------------------------------------------------------------------- run
def _names(msgs):
    return ";".join(m.msg_type.name for m in msgs)


def run(scn: Scenario):
    """Execute a scenario. Returns ``(SlotTrace, Verdict)``."""
    validate(scn)
    geom, params = scn.geometry, scn.protocol
    params = ProtocolParams(**{**params.__dict__, "tau_th": resolve_tau_th(scn)})
    T = params.T
    cars = list(scn.cars)
    uids = [c.uid for c in cars]
    machines = {
        c.uid: ProtocolMachine(c.uid, c.route, geom, params, a_desired=c.a0, v_desired=c.v0) for c in cars
    }
    poses = {c.uid: Pose(resolve_x0(scn, c), c.v0, c.a0) for c in cars}
    sigma = {c.uid: c.sigma_x for c in cars}
    routes = {c.uid: c.route for c in cars}
    procs = build_processes(scn)
    peer = {uids[0]: uids[1], uids[1]: uids[0]}
    exit_at = {u: geom.exit_boundary(routes[u]) for u in uids}
    crossed = {u: None for u in uids}
    inbox = {u: [] for u in uids}
    trace = SlotTrace()
    min_sep = math.inf

    t = 0
    for t in range(1, scn.n_t + 1):
        sent, ctrl, local = {}, {}, {}
        for u in uids:
            pose = poses[u]
            local[u] = LocalView(pose, PositionBelief(pose.x, sigma[u]), geom.position_2d(routes[u], pose.x))
            sent[u], ctrl[u] = machines[u].slot_step(t, local[u], inbox[u])
        for u in uids:
            p = procs[u]
            if isinstance(p, ch.BurstLoss) and p.start is None:
                if machines[u].phase >= Phase.ENTER and sent[peer[u]].msg_type is MsgType.ENTER:
                    p.arm(t)
        dist = geom.distance(routes[uids[0]], poses[uids[0]].x, routes[uids[1]], poses[uids[1]].x)
        min_sep = min(min_sep, dist)
        inbox, lost = ch.deliver(sent, t, procs, dist)
        for u in uids:
            pose = poses[u]
            trace.append(SlotRecord(
                t, u, pose.x, local[u].belief.mean, pose.v, ctrl[u].accel, machines[u].phase.name,
                ctrl[u].mode.value, sent[u].msg_type.name, _names(inbox[u]), _names(lost[u]),
            ))
            poses[u] = step(pose.with_accel(ctrl[u].accel), T)
            if crossed[u] is None and poses[u].x >= exit_at[u]:
                crossed[u] = t
        if all(crossed.values()) and all(m.phase is Phase.DONE for m in machines.values()):
            break

    col = collision_area(routes[uids[0]], routes[uids[1]])
    occ = {u: occupancy_intervals(trace, geom, routes[u], u, T) for u in uids}
    overlaps = find_overlaps(occ[uids[0]], occ[uids[1]], col)
    m1, m2 = machines[uids[0]], machines[uids[1]]
    t_en = None
    if m1.mainctrl and m2.mainctrl:
        t_en = max(m1.mainctrl_slot, m2.mainctrl_slot) - max(m1.first_enter_slot, m2.first_enter_slot) + 1
    both = all(v is not None for v in crossed.values())
    verdict = Verdict(
        safe=not overlaps,
        both_crossed=both,
        t_en_observed=t_en,
        total_crossing_slots=max(crossed.values()) if both else None,
        min_separation=min_sep,
        col=sorted(col),
        priority={u: machines[u].has_priority for u in uids},
        first_enter_slot={u: machines[u].first_enter_slot for u in uids},
        mainctrl_slot={u: machines[u].mainctrl_slot for u in uids},
        crossed_slot=crossed,
        safe_slots={u: machines[u].safe_slots for u in uids},
        overlaps=overlaps,
        slots_run=t,
    )
    return trace, verdict


# ----------------------------------------------------------------- builders
def burst_delay_scenario(f1: int, f2: int, *, offset: int = 0, **overrides) -> Scenario:
    """Two perpendicular straight crossings with one receive burst per car.

    Mirrors the failure time diagrams: the car that suffers the longer burst
    (car 2 on ties) sends its ENTER one slot before the other, and each burst
    starts at the receiver's first negotiating slot with an incoming ENTER.
    """
    early = 2 if f2 >= f1 else 1
    cars = [
        CarSpec(1, Route.from_turn(1, "straight"), v0=10.0, trigger_slot=3 if early == 1 else 4),
        CarSpec(2, Route.from_turn(2, "straight"), v0=10.0, trigger_slot=3 if early == 2 else 4),
    ]
    bursts = {uid: BurstSpec(f, None, offset) for uid, f in ((1, f1), (2, f2)) if f > 0}
    loss = LossSpec(ch.LossKind.BURST, bursts=bursts) if bursts else LossSpec()
    kw = dict(cars=cars, loss=loss)
    kw.update(overrides)
    return Scenario(**kw)


def symmetric_scenario(**overrides) -> Scenario:
    cars = [
        CarSpec(1, Route.from_turn(1, "straight"), v0=10.0, trigger_slot=3),
        CarSpec(2, Route.from_turn(2, "straight"), v0=10.0, trigger_slot=3),
    ]
    kw = dict(cars=cars)
    kw.update(overrides)
    return Scenario(**kw)


def random_scenario(rng: np.random.Generator, kind: ch.LossKind | str, *, p_range=(0.3, 1.0),
                    xi_range=(0.0, 0.95), n_t: int = 5000) -> Scenario:
    """Random routes, speeds, trigger offsets and a seeded random loss process."""
    kind = ch.LossKind(kind)
    r1 = ALL_ROUTES[rng.integers(len(ALL_ROUTES))]
    others = [r for r in ALL_ROUTES if r.clane != r1.clane]
    r2 = others[rng.integers(len(others))]
    uid1, uid2 = (int(u) for u in rng.choice(1000, size=2, replace=False) + 1)
    cars = [
        CarSpec(uid1, r1, v0=float(rng.uniform(8.0, 20.0)), sigma_x=float(rng.choice([1.0, 0.1])),
                trigger_slot=int(rng.integers(5, 80))),
        CarSpec(uid2, r2, v0=float(rng.uniform(8.0, 20.0)), sigma_x=float(rng.choice([1.0, 0.1])),
                trigger_slot=int(rng.integers(5, 80))),
    ]
    p = float(rng.uniform(*p_range))
    xi = float(rng.uniform(*xi_range)) if kind is ch.LossKind.CORRELATED else 0.0
    return Scenario(cars=cars, loss=LossSpec(kind, p_pdr=p, xi=xi), n_t=n_t, seed=int(rng.integers(2**31)))
