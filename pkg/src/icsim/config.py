"""YAML ``.scenario`` files: parsing, validation and serialisation.

``dump(parse(text))`` always writes every field, defaults included, so a
saved scenario fully describes the run it produced.
"""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path

import yaml

from . import channel as ch
from .geometry import GeometryError, IntersectionGeometry, Route
from .protocol import ProtocolParams
from .sim import BurstSpec, CarSpec, LossSpec, Scenario, ScenarioError, validate

BUNDLED = ("no_failure", "burst1", "burst3", "prolonged_safe")

_GEOMETRY_KEYS = [f.name for f in dataclasses.fields(IntersectionGeometry)]
_PROTOCOL_KEYS = [f.name for f in dataclasses.fields(ProtocolParams) if f.name != "tau_th"] + ["tau_th"]
_CAR_KEYS = [f.name for f in dataclasses.fields(CarSpec)]
_LOSS_KEYS = ["kind", "p_pdr", "env", "lam", "xi", "bursts"]
_TOP_KEYS = ["name", "seed", "n_t", "safety_gap", "geometry", "protocol", "cars", "loss"]


def _section(raw, key, allowed):
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ScenarioError(f"{key}: expected a mapping")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ScenarioError(f"{key}.{sorted(unknown)[0]}: unknown field")
    return sec


def _route(value, where):
    try:
        if isinstance(value, dict):
            return Route.from_turn(int(value["approach"]), value["turn"])
        clane, nlane = str(value).replace(" ", "").split("->")
        return Route(clane, nlane)
    except (GeometryError, ValueError, KeyError) as exc:
        raise ScenarioError(f"{where}: cannot read route {value!r} ({exc})") from None


def _build(where, cls, kwargs):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario: expected a mapping at top level")
    unknown = set(raw) - set(_TOP_KEYS)
    if unknown:
        raise ScenarioError(f"{sorted(unknown)[0]}: unknown field")

    geometry = _build("geometry", IntersectionGeometry, _section(raw, "geometry", _GEOMETRY_KEYS))
    proto = dict(_section(raw, "protocol", _PROTOCOL_KEYS))
    tau_th = proto.pop("tau_th", None)
    protocol = _build("protocol", ProtocolParams, proto)

    cars_raw = raw.get("cars")
    if not isinstance(cars_raw, list):
        raise ScenarioError("cars: expected a list of two cars")
    cars = []
    for i, c in enumerate(cars_raw):
        if not isinstance(c, dict):
            raise ScenarioError(f"cars[{i}]: expected a mapping")
        unknown = set(c) - set(_CAR_KEYS)
        if unknown:
            raise ScenarioError(f"cars[{i}].{sorted(unknown)[0]}: unknown field")
        if "uid" not in c or "route" not in c:
            raise ScenarioError(f"cars[{i}]: uid and route are required")
        kw = dict(c)
        kw["route"] = _route(c["route"], f"cars[{i}].route")
        cars.append(_build(f"cars[{i}]", CarSpec, kw))

    lraw = _section(raw, "loss", _LOSS_KEYS)
    try:
        kind = ch.LossKind(lraw.get("kind", "none"))
        env = ch.Environment(lraw["env"]) if lraw.get("env") is not None else None
    except ValueError as exc:
        raise ScenarioError(f"loss: {exc}") from None
    bursts = {}
    for uid, b in (lraw.get("bursts") or {}).items():
        if isinstance(b, int):
            b = {"length": b}
        bursts[int(uid)] = _build(f"loss.bursts.{uid}", BurstSpec, b)
    loss = LossSpec(kind, lraw.get("p_pdr"), env, lraw.get("lam"), float(lraw.get("xi", 0.0)), bursts)
    if kind in (ch.LossKind.GEOMETRIC, ch.LossKind.CORRELATED):
        if loss.p_pdr is None and loss.pdr_model() is None:
            raise ScenarioError("loss.p_pdr: random losses need p_pdr, env or lam")
        try:
            if loss.p_pdr is not None:
                ch.burst_length_pmf(ch.LossKind.GEOMETRIC, loss.p_pdr, 0.0, 0)
            if kind is ch.LossKind.CORRELATED:
                ch.burst_length_pmf(kind, 1.0, loss.xi, 0)
        except ValueError as exc:
            raise ScenarioError(f"loss: {exc}") from None

    scn = Scenario(
        cars=cars, geometry=geometry, protocol=protocol, loss=loss, tau_th=tau_th,
        safety_gap=float(raw.get("safety_gap", 2.0)), n_t=int(raw.get("n_t", 5000)), seed=int(raw.get("seed", 0)),
    )
    validate(scn)
    return scn


def to_dict(scn: Scenario, name: str | None = None) -> dict:
    proto = dataclasses.asdict(scn.protocol)
    proto["tau_th"] = scn.tau_th
    out = {
        "name": name,
        "seed": scn.seed,
        "n_t": scn.n_t,
        "safety_gap": scn.safety_gap,
        "geometry": dataclasses.asdict(scn.geometry),
        "protocol": {k: proto[k] for k in _PROTOCOL_KEYS},
        "cars": [],
        "loss": {
            "kind": scn.loss.kind.value,
            "p_pdr": scn.loss.p_pdr,
            "env": scn.loss.env.value if scn.loss.env is not None else None,
            "lam": scn.loss.lam,
            "xi": scn.loss.xi,
            "bursts": {uid: dataclasses.asdict(b) for uid, b in sorted(scn.loss.bursts.items())},
        },
    }
    for c in scn.cars:
        d = dataclasses.asdict(c)
        d["route"] = str(c.route)
        out["cars"].append(d)
    if name is None:
        del out["name"]
    return out


def loads(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario: not valid YAML ({exc})") from None
    return from_dict(raw)


def load(path) -> Scenario:
    return loads(Path(path).read_text())


def dumps(scn: Scenario, name: str | None = None) -> str:
    return yaml.safe_dump(to_dict(scn, name), sort_keys=False)


def bundled_path(name: str) -> Path:
    """Location of a scenario shipped with the package (``name`` without suffix)."""
    ref = resources.files("icsim") / "scenarios" / f"{name}.scenario"
    return Path(str(ref))
