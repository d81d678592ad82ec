"""Basic Safety Message generation, wire codec, channel and V2V tracks.

Wire record (25 bytes, big-endian)::

    temp_id   uint32
    msg_count uint8   0..127
    t_ms      uint32  ms since scenario start
    lat_e7    int32   degrees * 1e7
    lon_e7    int32   degrees * 1e7
    elev_cm   int32   centimetres
    speed     uint16  cm/s
    heading   uint16  centidegrees 0..35999

Heading is measured counter-clockwise from the scene +x axis.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, BinaryIO, Iterable, Optional, Sequence

import numpy as np

from .geo import (
    WGS84,
    EcefPosition,
    Ellipsoid,
    GeodeticPosition,
    SceneFrame,
    ScenePosition,
    geodetic_to_scene,
)
from .tracker import CONFIRMED, COASTED, V2V, KinematicState, Track, TrackList, ekf_update, predict_to

if TYPE_CHECKING:
    from .scenario import ActorState

RECORD = struct.Struct(">IBIiiiHH")
RECORD_SIZE = RECORD.size  # 25

LAT_E7_MAX = 900_000_000
LON_E7_MAX = 1_800_000_000
TEMP_ID_BASE = 0x10000000


class BsmError(ValueError):
    """Raised for malformed or out-of-range BSM records."""


@dataclass(frozen=True)
class BsmMessage:
    temp_id: int
    msg_count: int
    t_ms: int
    lat_e7: int
    lon_e7: int
    elev_cm: int
    speed_cmps: int
    heading_cdeg: int

    def __post_init__(self):
        checks = (
            ("temp_id", 0, 2**32 - 1),
            ("msg_count", 0, 127),
            ("t_ms", 0, 2**32 - 1),
            ("lat_e7", -LAT_E7_MAX, LAT_E7_MAX),
            ("lon_e7", -LON_E7_MAX + 1, LON_E7_MAX),
            ("elev_cm", -(2**31), 2**31 - 1),
            ("speed_cmps", 0, 2**16 - 1),
            ("heading_cdeg", 0, 35999),
        )
        for name, lo, hi in checks:
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise BsmError(f"{name} must be an integer")
            if not lo <= v <= hi:
                raise BsmError(f"{name}={v} outside [{lo}, {hi}]")

    @property
    def t(self) -> float:
        return self.t_ms / 1000.0

    @property
    def speed_mps(self) -> float:
        return self.speed_cmps / 100.0

    @property
    def heading_rad(self) -> float:
        return math.radians(self.heading_cdeg / 100.0)

    def geodetic(self) -> GeodeticPosition:
        return GeodeticPosition.from_degrees(self.lat_e7 * 1e-7, self.lon_e7 * 1e-7, self.elev_cm / 100.0)


def encode_bsm(m: BsmMessage) -> bytes:
    try:
        return RECORD.pack(m.temp_id, m.msg_count, m.t_ms, m.lat_e7, m.lon_e7,
                           m.elev_cm, m.speed_cmps, m.heading_cdeg)
    except struct.error as exc:
        raise BsmError(str(exc)) from exc


def decode_bsm(data: bytes) -> BsmMessage:
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise BsmError("BSM record must be bytes")
    if len(data) != RECORD_SIZE:
        raise BsmError(f"BSM record must be {RECORD_SIZE} bytes, got {len(data)}")
    return BsmMessage(*RECORD.unpack(bytes(data)))


def write_capture(fh: BinaryIO, tick: int, msgs: Iterable[BsmMessage]) -> None:
    """Append records, each prefixed by a 4-byte big-endian tick index."""
    for m in msgs:
        fh.write(struct.pack(">I", tick))
        fh.write(encode_bsm(m))


def read_capture(fh: BinaryIO) -> list[tuple[int, BsmMessage]]:
    out = []
    while True:
        head = fh.read(4)
        if not head:
            return out
        body = fh.read(RECORD_SIZE)
        if len(head) != 4 or len(body) != RECORD_SIZE:
            raise BsmError("truncated capture file")
        out.append((struct.unpack(">I", head)[0], decode_bsm(body)))


# ------------------------------------------------------------ inverse frame

def ecef_to_geodetic(p: EcefPosition, e: Ellipsoid = WGS84, tol: float = 1e-13) -> GeodeticPosition:
    """Iterative ECEF to geodetic conversion (latitude fixed-point)."""
    a, b = e.semi_major_a, e.semi_minor_b
    e2 = 1.0 - (b * b) / (a * a)
    x, y, z = p.x_m, p.y_m, p.z_m
    lon = math.atan2(y, x)
    rho = math.hypot(x, y)
    if rho < 1e-9:
        return GeodeticPosition(math.copysign(math.pi / 2, z), lon, abs(z) - b)
    lat = math.atan2(z, rho * (1.0 - e2))
    h = 0.0
    for _ in range(50):
        s = math.sin(lat)
        n = a / math.sqrt(1.0 - e2 * s * s)
        h = rho / math.cos(lat) - n
        new_lat = math.atan2(z, rho * (1.0 - e2 * n / (n + h)))
        if abs(new_lat - lat) < tol:
            lat = new_lat
            break
        lat = new_lat
    s = math.sin(lat)
    n = a / math.sqrt(1.0 - e2 * s * s)
    h = rho / math.cos(lat) - n
    return GeodeticPosition(lat, lon, h)


def scene_to_geodetic(pos: ScenePosition, frame: SceneFrame, e: Ellipsoid = WGS84) -> GeodeticPosition:
    local = frame.rotation.T @ pos.as_array()
    o = frame.origin_ecef
    return ecef_to_geodetic(EcefPosition(o.x_m + local[0], o.y_m + local[1], o.z_m + local[2]), e)


# --------------------------------------------------------------- generation

def temp_id_for(actor_id: int) -> int:
    return TEMP_ID_BASE + int(actor_id)


def make_bsm(temp_id: int, tick: int, t: float, g: GeodeticPosition, speed_mps: float,
             heading_rad: float) -> BsmMessage:
    lat_e7 = int(round(g.latitude_deg * 1e7))
    lon_e7 = int(round(g.longitude_deg * 1e7))
    if lon_e7 == -LON_E7_MAX:
        lon_e7 = LON_E7_MAX
    heading_cdeg = int(round(math.degrees(heading_rad) % 360.0 * 100.0)) % 36000
    return BsmMessage(
        temp_id=temp_id,
        msg_count=tick % 128,
        t_ms=int(round(t * 1000.0)),
        lat_e7=lat_e7,
        lon_e7=lon_e7,
        elev_cm=int(round(g.altitude_m * 100.0)),
        speed_cmps=min(int(round(speed_mps * 100.0)), 2**16 - 1),
        heading_cdeg=heading_cdeg,
    )


def generate_bsms(actors: Sequence["ActorState"], frame: SceneFrame, t: float, rng: np.random.Generator,
                  gps_noise_std_m: float = 0.0, tick: Optional[int] = None, tick_s: float = 0.1,
                  e: Ellipsoid = WGS84, exclude: Iterable[int] = ()) -> list[BsmMessage]:
    """One message per V2V-equipped actor, position perturbed by GPS noise."""
    if tick is None:
        tick = int(round(t / tick_s))
    skip = set(exclude)
    out = []
    for actor in sorted(actors, key=lambda a: a.actor_id):
        if not actor.v2v_equipped or actor.actor_id in skip:
            continue
        dx, dy = gps_noise_std_m * rng.standard_normal(2) if gps_noise_std_m > 0 else (0.0, 0.0)
        pos = ScenePosition(actor.position.x_m + dx, actor.position.y_m + dy, actor.position.z_m)
        g = scene_to_geodetic(pos, frame, e)
        speed = float(np.hypot(*actor.velocity))
        out.append(make_bsm(temp_id_for(actor.actor_id), tick, t, g, speed, actor.heading_rad))
    return out


# ------------------------------------------------------------------ channel

@dataclass(frozen=True)
class SpoofStream:
    """Fabricated BSM stream: a phantom moving straight from a start pose."""

    temp_id: int
    t_start: float
    t_end: float
    x_m: float
    y_m: float
    heading_rad: float = 0.0
    speed_mps: float = 0.0

    def position(self, t: float) -> ScenePosition:
        dt = t - self.t_start
        return ScenePosition(self.x_m + self.speed_mps * dt * math.cos(self.heading_rad),
                             self.y_m + self.speed_mps * dt * math.sin(self.heading_rad), 0.0)


@dataclass(frozen=True)
class ChannelModel:
    drop_prob: float = 0.0
    latency_ticks: int = 0
    spoof_injections: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        if self.latency_ticks < 0 or int(self.latency_ticks) != self.latency_ticks:
            raise ValueError("latency_ticks must be a non-negative integer")
        for s in self.spoof_injections:
            if s.t_end < s.t_start:
                raise ValueError("spoof window must have t_end >= t_start")


class Channel:
    """Lossy, delayed broadcast medium with optional spoofed injections."""

    def __init__(self, model: ChannelModel, frame: SceneFrame, rng: np.random.Generator,
                 tick_s: float = 0.1, e: Ellipsoid = WGS84):
        self.model = model
        self.frame = frame
        self.rng = rng
        self.tick_s = tick_s
        self.ellipsoid = e
        self._queue: list[tuple[int, BsmMessage]] = []

    def spoofed(self, tick: int) -> list[BsmMessage]:
        t = tick * self.tick_s
        out = []
        for s in self.model.spoof_injections:
            if s.t_start - 1e-9 <= t <= s.t_end + 1e-9:
                g = scene_to_geodetic(s.position(t), self.frame, self.ellipsoid)
                out.append(make_bsm(s.temp_id, tick, t, g, s.speed_mps, s.heading_rad))
        return out

    def transmit(self, msgs: Sequence[BsmMessage], tick: int) -> list[BsmMessage]:
        for m in msgs:
            if self.rng.random() < self.model.drop_prob:
                continue
            self._queue.append((tick + self.model.latency_ticks, m))
        delivered = [m for due, m in self._queue if due <= tick]
        self._queue = [(due, m) for due, m in self._queue if due > tick]
        return delivered + self.spoofed(tick)


def channel_transmit(msgs: Sequence[BsmMessage], ch: Channel, tick: int) -> list[BsmMessage]:
    return ch.transmit(msgs, tick)


# --------------------------------------------------------------- V2V tracks

@dataclass(frozen=True)
class V2vParams:
    gps_noise_std_m: float = 0.3
    q: float = 0.5
    velocity_var: float = 1.0
    timeout_s: float = 1.0

    @property
    def measurement_cov(self) -> np.ndarray:
        # quantisation (~1 cm) keeps R SPD on an ideal GPS
        var = max(self.gps_noise_std_m, 0.01) ** 2
        return np.diag([var, var])


def bsm_scene_position(m: BsmMessage, frame: SceneFrame, e: Ellipsoid = WGS84) -> ScenePosition:
    return geodetic_to_scene(m.geodetic(), frame, e)


def bsm_to_v2v_track(m: BsmMessage, frame: SceneFrame, existing: TrackList,
                     params: V2vParams = V2vParams(), e: Ellipsoid = WGS84) -> TrackList:
    pos = bsm_scene_position(m, frame, e)
    z = np.array([pos.x_m, pos.y_m])
    R = params.measurement_cov
    t = m.t
    current = next((tr for tr in existing if tr.source_actor_hint == m.temp_id), None)
    if current is None:
        v = m.speed_mps
        x = [z[0], z[1], v * math.cos(m.heading_rad), v * math.sin(m.heading_rad)]
        P = np.diag([R[0, 0], R[1, 1], params.velocity_var, params.velocity_var])
        tr = Track(existing.next_id, V2V, KinematicState(x, P), CONFIRMED, 1, 0, t, t, m.temp_id, (True,))
        return TrackList(existing.tracks + (tr,), existing.next_id + 1)
    tr = predict_to(current, t, params.q)
    tr = ekf_update(tr, z, R)
    status = CONFIRMED if tr.status == COASTED else tr.status
    tr = tr.transition(status, hits=tr.hits + 1, misses_consecutive=0, last_update_t=max(t, tr.last_update_t))
    others = tuple(o for o in existing if o.track_id != current.track_id)
    return TrackList(others + (tr,), existing.next_id)


def step_v2v(tl: TrackList, msgs: Sequence[BsmMessage], frame: SceneFrame, t: float,
             params: V2vParams = V2vParams(), e: Ellipsoid = WGS84) -> TrackList:
    """Ingest one tick of delivered BSMs, then age and predict every track to ``t``."""
    heard = set()
    for m in sorted(msgs, key=lambda m: (m.t_ms, m.temp_id)):
        tl = bsm_to_v2v_track(m, frame, tl, params, e)
        heard.add(m.temp_id)
    out = []
    for tr in tl:
        tr = predict_to(tr, t, params.q)
        if tr.source_actor_hint not in heard:
            tr = tr.transition(COASTED, misses_consecutive=tr.misses_consecutive + 1)
            if t - tr.last_update_t > params.timeout_s + 1e-9:
                continue
        out.append(tr)
    return TrackList(tuple(out), tl.next_id)


def spoof_temp_ids(model: ChannelModel) -> set[int]:
    return {s.temp_id for s in model.spoof_injections}


def with_drop(model: ChannelModel, drop_prob: float) -> ChannelModel:
    return replace(model, drop_prob=drop_prob)
