"""Scripted ground truth: actors following waypoint trajectories, plus scenario documents.

Trajectories are waypoint polylines in the scene frame, linearly
interpolated in position with headings interpolated along the shorter arc.
Degrees appear only in the JSON document; everything in memory is radians.
"""

from __future__ import annotations

import bisect
import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

import numpy as np

from .association import AssociationParams, default_measurement_cov
from .geo import GeodeticPosition, ScenePosition
from .sensors import CAMERA, RADAR, SensorModel
from .tracker import TrackerParams
from .v2v import ChannelModel, SpoofStream, TEMP_ID_BASE, V2vParams

BUILTIN = {"unprotected-left": "unprotected_left.json"}


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario document."""


@dataclass(frozen=True)
class Waypoint:
    t: float
    x_m: float
    y_m: float
    heading_rad: float
    speed_mps: float


@dataclass(frozen=True)
class ActorSpec:
    actor_id: int
    length_m: float
    width_m: float
    v2v_equipped: bool
    waypoints: tuple

    def __post_init__(self):
        if self.length_m <= 0 or self.width_m <= 0:
            raise ScenarioError(f"actor {self.actor_id}: length and width must be positive")
        if not self.waypoints:
            raise ScenarioError(f"actor {self.actor_id}: no waypoints")
        times = [w.t for w in self.waypoints]
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise ScenarioError(f"actor {self.actor_id}: waypoint times must be strictly increasing "
                                    f"({a} then {b})")

    @property
    def max_speed(self) -> float:
        w = self.waypoints
        speeds = [math.hypot(b.x_m - a.x_m, b.y_m - a.y_m) / (b.t - a.t) for a, b in zip(w, w[1:])]
        return max(speeds, default=0.0)


@dataclass(frozen=True)
class ActorState:
    actor_id: int
    position: ScenePosition
    velocity: tuple
    heading_rad: float
    length_m: float = 4.8
    width_m: float = 1.9
    v2v_equipped: bool = True

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.position.x_m, self.position.y_m])

    @property
    def corners(self) -> np.ndarray:
        """Box corners: front-left, rear-left, rear-right, front-right."""
        c, s = math.cos(self.heading_rad), math.sin(self.heading_rad)
        fwd = np.array([c, s]) * 0.5 * self.length_m
        left = np.array([-s, c]) * 0.5 * self.width_m
        p = self.xy
        return np.array([p + fwd + left, p - fwd + left, p - fwd - left, p + fwd - left])


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    duration_s: float
    tick_s: float
    scene_origin: GeodeticPosition
    gamma_rad: float
    actors: tuple
    ego_id: int
    sensors: tuple = ()
    channel: ChannelModel = ChannelModel()
    v2v: V2vParams = V2vParams()
    tracker: TrackerParams = TrackerParams()
    association: AssociationParams = field(default_factory=AssociationParams)
    cluster_eps_m: float = 1.5
    cluster_min_pts: int = 2
    cluster_std_m: float = 2.0
    static_reflectors: tuple = ()
    rng_seed: int = 0

    def __post_init__(self):
        if self.tick_s <= 0:
            raise ScenarioError("tick_s must be positive")
        if self.duration_s < 0:
            raise ScenarioError("duration_s must be non-negative")
        ratio = self.duration_s / self.tick_s
        if abs(ratio - round(ratio)) * self.tick_s > 1e-9:
            raise ScenarioError("duration_s must be a multiple of tick_s")
        ids = [a.actor_id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise ScenarioError("actor ids must be unique")
        if self.ego_id not in ids:
            raise ScenarioError(f"ego_id {self.ego_id} not among actors")
        for a in self.actors:
            if a.waypoints[0].t > 1e-9 or a.waypoints[-1].t < self.duration_s - 1e-9:
                raise ScenarioError(f"actor {a.actor_id}: waypoints must span [0, {self.duration_s}]")
        sensor_ids = [m.sensor_id for m in self.sensors]
        if len(set(sensor_ids)) != len(sensor_ids):
            raise ScenarioError("sensor ids must be unique")
        real = {TEMP_ID_BASE + i for i in ids}
        for s in self.channel.spoof_injections:
            if s.temp_id in real:
                raise ScenarioError(f"spoof temp_id {s.temp_id:#x} collides with a real actor")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration_s / self.tick_s)) + 1

    def actor(self, actor_id: int) -> ActorSpec:
        for a in self.actors:
            if a.actor_id == actor_id:
                return a
        raise KeyError(actor_id)

    def radars(self) -> list[SensorModel]:
        return [m for m in self.sensors if m.kind == RADAR]

    def cameras(self) -> list[SensorModel]:
        return [m for m in self.sensors if m.kind == CAMERA]


# ------------------------------------------------------------ ground truth

def _interp_heading(h0: float, h1: float, u: float) -> float:
    return h0 + u * math.remainder(h1 - h0, 2.0 * math.pi)


def actor_state_at(spec: ActorSpec, t: float) -> ActorState:
    w = spec.waypoints
    times = [p.t for p in w]
    if len(w) == 1:
        p = w[0]
        return ActorState(spec.actor_id, ScenePosition(p.x_m, p.y_m, 0.0), (0.0, 0.0), p.heading_rad,
                          spec.length_m, spec.width_m, spec.v2v_equipped)
    k = bisect.bisect_right(times, t) - 1
    k = min(max(k, 0), len(w) - 2)
    a, b = w[k], w[k + 1]
    span = b.t - a.t
    u = (t - a.t) / span
    if u >= 1.0 - 1e-12:
        x, y, heading = b.x_m, b.y_m, b.heading_rad
    elif u <= 1e-12:
        x, y, heading = a.x_m, a.y_m, a.heading_rad
    else:
        x = a.x_m + u * (b.x_m - a.x_m)
        y = a.y_m + u * (b.y_m - a.y_m)
        heading = _interp_heading(a.heading_rad, b.heading_rad, u)
    velocity = ((b.x_m - a.x_m) / span, (b.y_m - a.y_m) / span)
    return ActorState(spec.actor_id, ScenePosition(x, y, 0.0), velocity,
                      math.remainder(heading, 2.0 * math.pi), spec.length_m, spec.width_m, spec.v2v_equipped)


def ground_truth_at(cfg: ScenarioConfig, t: float) -> list[ActorState]:
    if t < -1e-9 or t > cfg.duration_s + 1e-9:
        raise ValueError(f"t={t} outside [0, {cfg.duration_s}]")
    return [actor_state_at(a, t) for a in sorted(cfg.actors, key=lambda a: a.actor_id)]


# ----------------------------------------------------------- document I/O

def _get(doc: dict, key: str, where: str, kind=None, default: Any = ...):
    if key not in doc:
        if default is ...:
            raise ScenarioError(f"{where}: missing field '{key}'")
        return default
    value = doc[key]
    if kind is not None:
        try:
            value = kind(value)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{where}.{key}: {exc}") from exc
    return value


def _sensor_from_doc(d: dict, kind: str, where: str) -> SensorModel:
    defaults = DEFAULT_RADAR if kind == RADAR else DEFAULT_CAMERA
    try:
        return SensorModel(
            sensor_id=str(d.get("id", defaults.sensor_id)),
            kind=kind,
            fov_rad=math.radians(float(d.get("fov_deg", math.degrees(defaults.fov_rad)))),
            max_range_m=float(d.get("max_range_m", defaults.max_range_m)),
            noise_std_m=float(d.get("noise_std_m", defaults.noise_std_m)),
            detection_prob=float(d.get("detection_prob", defaults.detection_prob)),
            false_alarm_rate=float(d.get("false_alarm_rate", defaults.false_alarm_rate)),
            returns_per_vehicle=int(d.get("returns_per_vehicle", defaults.returns_per_vehicle)),
            classification_accuracy=float(d.get("classification_accuracy", defaults.classification_accuracy)),
            boresight_rad=math.radians(float(d.get("boresight_deg", math.degrees(defaults.boresight_rad)))),
            visibility_threshold=float(d.get("visibility_threshold", defaults.visibility_threshold)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _sensors_from_doc(doc: dict, key: str, kind: str) -> list[SensorModel]:
    block = doc.get(key)
    if block is None:
        return []
    items = block if isinstance(block, list) else [block]
    return [_sensor_from_doc(d, kind, f"{key}[{i}]") for i, d in enumerate(items)]


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a config from a parsed document; every defect surfaces as ScenarioError."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    try:
        return _config_from_dict(doc)
    except ScenarioError:
        raise
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc}") from exc
    except (TypeError, ValueError, AttributeError) as exc:
        raise ScenarioError(str(exc)) from exc


def _config_from_dict(doc: dict) -> ScenarioConfig:
    origin = _get(doc, "origin", "scenario")
    actors = []
    for i, a in enumerate(_get(doc, "actors", "scenario")):
        where = f"actors[{i}]"
        wps = []
        for j, row in enumerate(_get(a, "waypoints", where)):
            if len(row) != 5:
                raise ScenarioError(f"{where}.waypoints[{j}]: expected [t, x, y, heading_deg, speed_mps]")
            t, x, y, hdg, spd = (float(v) for v in row)
            wps.append(Waypoint(t, x, y, math.radians(hdg), spd))
        actors.append(ActorSpec(_get(a, "id", where, int), _get(a, "length_m", where, float),
                                _get(a, "width_m", where, float), bool(a.get("v2v", True)), tuple(wps)))

    ch = doc.get("channel", {}) or {}
    spoofs = tuple(
        SpoofStream(int(s["temp_id"]), float(s["t_start"]), float(s["t_end"]), float(s["x_m"]),
                    float(s["y_m"]), math.radians(float(s.get("heading_deg", 0.0))), float(s.get("speed_mps", 0.0)))
        for s in ch.get("spoof", []))
    try:
        channel = ChannelModel(float(ch.get("drop_prob", 0.0)), int(ch.get("latency_ticks", 0)), spoofs)
        v2v = V2vParams(gps_noise_std_m=float(ch.get("gps_noise_std_m", V2vParams.gps_noise_std_m)),
                        q=float(ch.get("q", V2vParams.q)),
                        timeout_s=float(ch.get("timeout_s", V2vParams.timeout_s)))
        tr = doc.get("tracker", {}) or {}
        tracker = TrackerParams(**{k: type(getattr(TrackerParams, k))(v) for k, v in tr.items()})
    except (TypeError, ValueError, AttributeError) as exc:
        raise ScenarioError(f"channel/tracker: {exc}") from exc

    sensors = _sensors_from_doc(doc, "radar", RADAR) + _sensors_from_doc(doc, "camera", CAMERA)
    radar_std = next((m.noise_std_m for m in sensors if m.kind == RADAR), DEFAULT_RADAR.noise_std_m)
    asc = doc.get("association", {}) or {}
    try:
        offset = float(asc.get("reference_offset_m", AssociationParams.reference_offset_m))
        if "C" in asc:
            C = np.array(asc["C"], dtype=float)
        else:
            C = default_measurement_cov(radar_std, v2v.gps_noise_std_m, offset)
        association = AssociationParams(
            float(asc.get("epsilon", AssociationParams.epsilon)), C,
            float(asc.get("priority_coast_s", AssociationParams.priority_coast_s)),
            fallback_needs_label=bool(asc.get("fallback_needs_label", AssociationParams.fallback_needs_label)),
            reference_offset_m=offset)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"association: {exc}") from exc
    clustering = doc.get("clustering", {}) or {}

    try:
        origin_pos = GeodeticPosition.from_degrees(_get(origin, "lat_deg", "origin", float),
                                                   _get(origin, "lon_deg", "origin", float),
                                                   _get(origin, "alt_m", "origin", float, 0.0))
    except ValueError as exc:
        raise ScenarioError(f"origin: {exc}") from exc
    return ScenarioConfig(
        name=str(_get(doc, "name", "scenario")),
        duration_s=_get(doc, "duration_s", "scenario", float),
        tick_s=_get(doc, "tick_s", "scenario", float),
        scene_origin=origin_pos,
        gamma_rad=math.radians(_get(doc, "gamma_deg", "scenario", float, 0.0)),
        actors=tuple(actors),
        ego_id=_get(doc, "ego_id", "scenario", int),
        sensors=tuple(sensors),
        channel=channel,
        v2v=v2v,
        tracker=tracker,
        association=association,
        cluster_eps_m=float(clustering.get("eps_m", 1.5)),
        cluster_min_pts=int(clustering.get("min_pts", 2)),
        cluster_std_m=float(clustering.get("reference_std_m", 2.0)),
        static_reflectors=tuple((float(r["x_m"]), float(r["y_m"])) for r in doc.get("static_reflectors", [])),
        rng_seed=_get(doc, "rng_seed", "scenario", int, 0),
    )


def load_scenario(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def load_builtin(name: str) -> ScenarioConfig:
    if name not in BUILTIN:
        raise ScenarioError(f"unknown builtin scenario {name!r}; choose from {sorted(BUILTIN)}")
    text = resources.files("v2vtrack").joinpath("data", BUILTIN[name]).read_text(encoding="utf-8")
    return load_scenario(text)


def _r(v: float) -> float:
    return float(round(v, 9))


def _sensor_to_doc(m: SensorModel) -> dict:
    d = {"id": m.sensor_id, "fov_deg": _r(math.degrees(m.fov_rad)), "max_range_m": m.max_range_m,
         "noise_std_m": m.noise_std_m, "detection_prob": m.detection_prob,
         "false_alarm_rate": m.false_alarm_rate, "boresight_deg": _r(math.degrees(m.boresight_rad)),
         "visibility_threshold": m.visibility_threshold}
    if m.kind == RADAR:
        d["returns_per_vehicle"] = m.returns_per_vehicle
    else:
        d["classification_accuracy"] = m.classification_accuracy
    return d


def config_to_dict(cfg: ScenarioConfig) -> dict:
    def sensors(kind):
        items = [_sensor_to_doc(m) for m in cfg.sensors if m.kind == kind]
        return items[0] if len(items) == 1 else items

    C = cfg.association.C
    return {
        "name": cfg.name,
        "duration_s": cfg.duration_s,
        "tick_s": cfg.tick_s,
        "origin": {"lat_deg": _r(cfg.scene_origin.latitude_deg), "lon_deg": _r(cfg.scene_origin.longitude_deg),
                   "alt_m": cfg.scene_origin.altitude_m},
        "gamma_deg": _r(math.degrees(cfg.gamma_rad)),
        "rng_seed": cfg.rng_seed,
        "ego_id": cfg.ego_id,
        "actors": [
            {"id": a.actor_id, "length_m": a.length_m, "width_m": a.width_m, "v2v": a.v2v_equipped,
             "waypoints": [[_r(w.t), _r(w.x_m), _r(w.y_m), _r(math.degrees(w.heading_rad)), _r(w.speed_mps)]
                           for w in a.waypoints]}
            for a in cfg.actors],
        "radar": sensors(RADAR),
        "camera": sensors(CAMERA),
        "channel": {
            "drop_prob": cfg.channel.drop_prob, "latency_ticks": cfg.channel.latency_ticks,
            "gps_noise_std_m": cfg.v2v.gps_noise_std_m, "q": cfg.v2v.q, "timeout_s": cfg.v2v.timeout_s,
            "spoof": [{"temp_id": s.temp_id, "t_start": s.t_start, "t_end": s.t_end, "x_m": s.x_m, "y_m": s.y_m,
                       "heading_deg": _r(math.degrees(s.heading_rad)), "speed_mps": s.speed_mps}
                      for s in cfg.channel.spoof_injections]},
        "tracker": dataclasses.asdict(cfg.tracker),
        "association": {"epsilon": cfg.association.epsilon, "C": C.tolist(),
                        "priority_coast_s": cfg.association.priority_coast_s,
                        "fallback_needs_label": cfg.association.fallback_needs_label,
                        "reference_offset_m": cfg.association.reference_offset_m},
        "clustering": {"eps_m": cfg.cluster_eps_m, "min_pts": cfg.cluster_min_pts,
                       "reference_std_m": cfg.cluster_std_m},
        "static_reflectors": [{"x_m": x, "y_m": y} for x, y in cfg.static_reflectors],
    }


def dump_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


# -------------------------------------------------------------- benchmark

DEFAULT_RADAR = SensorModel("radar", RADAR, math.radians(120.0), 150.0, 0.5, detection_prob=0.9,
                            false_alarm_rate=2.0, returns_per_vehicle=4)
DEFAULT_CAMERA = SensorModel("camera", CAMERA, math.radians(60.0), 80.0, 1.0, detection_prob=0.9,
                             false_alarm_rate=0.05, classification_accuracy=0.95)

EGO, THROUGH, TRUCK, FOLLOWER, CROSS, LEAD = 1, 2, 3, 4, 5, 6
LANE = 3.5
GHOST_TEMP_ID = 0xDEAD0001


def _straight(t0, p0, t1, p1, heading_deg) -> list:
    speed = math.hypot(p1[0] - p0[0], p1[1] - p0[1]) / (t1 - t0)
    return [(t0, p0[0], p0[1], heading_deg, speed), (t1, p1[0], p1[1], heading_deg, speed)]


def _accelerate(t0, p0, v0, v1, accel, heading_deg, dt=0.5) -> list:
    """Constant acceleration from v0 to v1 along the heading, sampled every dt."""
    dur = abs(v1 - v0) / accel
    a = math.copysign(accel, v1 - v0)
    ux, uy = math.cos(math.radians(heading_deg)), math.sin(math.radians(heading_deg))
    n = max(1, math.ceil(dur / dt - 1e-9))
    out = []
    for k in range(n + 1):
        tau = min(k * dt, dur)
        d = v0 * tau + 0.5 * a * tau**2
        out.append((t0 + tau, p0[0] + ux * d, p0[1] + uy * d, heading_deg, v0 + a * tau))
    return out


def _left_turn_arc(t0, t1, centre, radius, start_deg, n=6) -> list:
    """Counter-clockwise quarter arc; heading leads the radius by 90 degrees."""
    speed = radius * (math.pi / 2) / (t1 - t0)
    out = []
    for k in range(n + 1):
        u = k / n
        ang = math.radians(start_deg + 90.0 * u)
        out.append((t0 + u * (t1 - t0), centre[0] + radius * math.cos(ang), centre[1] + radius * math.sin(ang),
                    start_deg + 90.0 * u + 90.0, speed))
    return out


def _dedupe(rows: list) -> tuple:
    out = []
    for r in rows:
        if out and abs(out[-1][0] - r[0]) < 1e-12:
            continue
        out.append(r)
    return tuple(Waypoint(t, x, y, math.radians(h), s) for t, x, y, h, s in out)


def build_unprotected_left_scenario() -> ScenarioConfig:
    """Four-way intersection, ego turning left across oncoming traffic.

    Scene axes: +y is the ego's approach direction (north), +x east, right-hand
    traffic, 3.5 m lanes, intersection centred at the origin. A box truck
    waits in the oncoming left-turn pocket and hides the oncoming through
    vehicle from the approaching ego for several seconds.
    """
    h = LANE / 2
    ego = (_straight(0.0, (h, -70.0), 7.0, (h, -14.0), 90.0)
           + _straight(7.0, (h, -14.0), 9.0, (h, -8.0), 90.0)
           + _straight(9.0, (h, -8.0), 19.0, (h, -8.0), 90.0)
           + _left_turn_arc(19.0, 22.0, (-8.0, -8.0), 8.0 + h, 0.0)
           + _straight(22.0, (-8.0, h), 30.0, (-72.0, h), 180.0))
    # seen (and validated) on the approach, then swallowed by the truck's shadow
    through = (_straight(0.0, (-5 * h, 75.0), 10.0, (-5 * h, 35.0), -90.0)
               + _accelerate(10.0, (-5 * h, 35.0), 4.0, 10.0, 1.5, -90.0)
               + _straight(14.0, (-5 * h, 7.0), 30.0, (-5 * h, -153.0), -90.0))
    truck = _straight(0.0, (-h, 13.0), 30.0, (-h, 13.0), -90.0)
    # queues behind the ego, then pulls away once the turn is under way
    follower = (_straight(0.0, (h, -92.0), 6.0, (h, -44.0), 90.0)
                + _accelerate(6.0, (h, -44.0), 8.0, 0.0, 2.0, 90.0)
                + _straight(10.0, (h, -28.0), 21.0, (h, -28.0), 90.0)
                + _accelerate(21.0, (h, -28.0), 0.0, 9.0, 2.0, 90.0)
                + _straight(25.5, (h, -7.75), 30.0, (h, 32.75), 90.0))
    cross = _straight(0.0, (-60.0, -h), 30.0, (240.0, -h), 0.0)
    lead = _straight(0.0, (-5 * h, 30.0), 30.0, (-5 * h, -270.0), -90.0)

    actors = (
        ActorSpec(EGO, 4.8, 1.9, True, _dedupe(ego)),
        ActorSpec(THROUGH, 4.8, 1.9, True, _dedupe(through)),
        ActorSpec(TRUCK, 10.0, 2.5, True, _dedupe(truck)),
        ActorSpec(FOLLOWER, 4.8, 1.9, True, _dedupe(follower)),
        ActorSpec(CROSS, 4.8, 1.9, True, _dedupe(cross)),
        ActorSpec(LEAD, 4.8, 1.9, True, _dedupe(lead)),
    )
    v2v = V2vParams()
    return ScenarioConfig(
        name="unprotected-left",
        duration_s=30.0,
        tick_s=0.1,
        scene_origin=GeodeticPosition.from_degrees(37.2296, -80.4139, 634.0),
        gamma_rad=0.0,
        actors=actors,
        ego_id=EGO,
        sensors=(DEFAULT_RADAR, DEFAULT_CAMERA),
        channel=ChannelModel(),
        v2v=v2v,
        tracker=TrackerParams(),
        association=AssociationParams(C=default_measurement_cov(DEFAULT_RADAR.noise_std_m, v2v.gps_noise_std_m)),
        static_reflectors=((25.0, 60.0),),
        rng_seed=42,
    )


def ghost_vehicle_spoof(cfg: ScenarioConfig) -> SpoofStream:
    """Phantom vehicle parked just beyond the intersection, ahead of the ego."""
    return SpoofStream(GHOST_TEMP_ID, 0.0, cfg.duration_s, 3 * LANE / 2, 30.0, math.radians(90.0), 0.0)


SPOOF_PRESETS = {"ghost-vehicle": ghost_vehicle_spoof}
