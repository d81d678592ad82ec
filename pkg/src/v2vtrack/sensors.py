"""Parametric radar/camera detection models with occlusion, plus DBSCAN.

Radar returns are modelled as a handful of points scattered around the
midpoint of the bounding-box face closest to the ego sensor; the camera
reports one object centroid per visible vehicle. Neither sees targets
outside its field of view or hidden behind other vehicles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geo import ScenePosition

if TYPE_CHECKING:
    from .scenario import ActorState

RADAR = "radar"
CAMERA = "camera"

# Floor on the per-axis noise std used for covariances, keeps them SPD.
MIN_STD_M = 0.01


@dataclass(frozen=True)
class SensorModel:
    sensor_id: str
    kind: str
    fov_rad: float
    max_range_m: float
    noise_std_m: float
    detection_prob: float = 0.9
    false_alarm_rate: float = 0.0
    returns_per_vehicle: int = 1
    classification_accuracy: float = 1.0
    boresight_rad: float = 0.0
    visibility_threshold: float = 0.4

    def __post_init__(self):
        if self.kind not in (RADAR, CAMERA):
            raise ValueError(f"unknown sensor kind {self.kind!r}")
        if not 0.0 < self.fov_rad <= 2.0 * math.pi:
            raise ValueError("fov_rad must be in (0, 2*pi]")
        if self.max_range_m <= 0.0:
            raise ValueError("max_range_m must be positive")
        if self.noise_std_m < 0.0:
            raise ValueError("noise_std_m must be non-negative")
        if not 0.0 <= self.detection_prob <= 1.0:
            raise ValueError("detection_prob must be in [0, 1]")
        if self.false_alarm_rate < 0.0:
            raise ValueError("false_alarm_rate must be non-negative")
        if self.returns_per_vehicle < 1:
            raise ValueError("returns_per_vehicle must be >= 1")
        if not 0.0 <= self.classification_accuracy <= 1.0:
            raise ValueError("classification_accuracy must be in [0, 1]")
        if not 0.0 <= self.visibility_threshold <= 1.0:
            raise ValueError("visibility_threshold must be in [0, 1]")

    @property
    def covariance(self) -> np.ndarray:
        var = max(self.noise_std_m, MIN_STD_M) ** 2
        return np.diag([var, var, var])


@dataclass(frozen=True)
class Detection:
    source: str
    t: float
    position: ScenePosition
    covariance: np.ndarray = field(repr=False)
    class_label: Optional[str] = None

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.position.x_m, self.position.y_m])


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray
    n_clusters: int


# ---------------------------------------------------------------- geometry

def sensor_pose(ego: "ActorState", m: Optional[SensorModel] = None) -> tuple[np.ndarray, float]:
    """Sensor origin (front bumper centre of ego) and boresight heading."""
    h = ego.heading_rad
    origin = np.array([ego.position.x_m, ego.position.y_m])
    origin = origin + 0.5 * ego.length_m * np.array([math.cos(h), math.sin(h)])
    boresight = h + (m.boresight_rad if m is not None else 0.0)
    return origin, boresight


def in_fov(m: SensorModel, origin: np.ndarray, boresight: float, point: np.ndarray) -> bool:
    d = np.asarray(point, dtype=float) - origin
    rng = math.hypot(d[0], d[1])
    if rng > m.max_range_m:
        return False
    if m.fov_rad >= 2.0 * math.pi:
        return True
    bearing = math.remainder(math.atan2(d[1], d[0]) - boresight, 2.0 * math.pi)
    return abs(bearing) <= 0.5 * m.fov_rad


def _segment_hits_box(p0: np.ndarray, p1: np.ndarray, box: "ActorState") -> bool:
    # Liang-Barsky clip of p0->p1 against the box in its own frame.
    c, s = math.cos(box.heading_rad), math.sin(box.heading_rad)
    centre = np.array([box.position.x_m, box.position.y_m])
    rot = np.array([[c, s], [-s, c]])
    a = rot @ (p0 - centre)
    d = rot @ (p1 - p0)
    half = (0.5 * box.length_m, 0.5 * box.width_m)
    t0, t1 = 0.0, 1.0
    for k in range(2):
        if abs(d[k]) < 1e-15:
            if abs(a[k]) > half[k]:
                return False
            continue
        ta = (-half[k] - a[k]) / d[k]
        tb = (half[k] - a[k]) / d[k]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


def silhouette_segment(origin: np.ndarray, target: "ActorState") -> tuple[np.ndarray, np.ndarray]:
    """The two box corners subtending the widest angle as seen from ``origin``."""
    corners = target.corners
    centre = np.array([target.position.x_m, target.position.y_m])
    ref = math.atan2(centre[1] - origin[1], centre[0] - origin[0])
    rel = [math.remainder(math.atan2(cy - origin[1], cx - origin[0]) - ref, 2.0 * math.pi)
           for cx, cy in corners]
    return corners[int(np.argmin(rel))], corners[int(np.argmax(rel))]


def visible_fraction(ego: "ActorState", target: "ActorState", occluders: Sequence["ActorState"],
                     n_rays: int = 25) -> float:
    origin, _ = sensor_pose(ego)
    if not occluders:
        return 1.0
    left, right = silhouette_segment(origin, target)
    clear = 0
    for i in range(n_rays):
        u = (i + 0.5) / n_rays
        point = left + u * (right - left)
        if not any(_segment_hits_box(origin, point, occ) for occ in occluders):
            clear += 1
    return clear / n_rays


def line_of_sight_visible(ego: "ActorState", target: "ActorState", occluders: Sequence["ActorState"],
                          threshold: float = 0.4) -> bool:
    return visible_fraction(ego, target, occluders) >= threshold


def nearest_face_point(origin: np.ndarray, target: "ActorState") -> np.ndarray:
    corners = target.corners
    mids = [(corners[i] + corners[(i + 1) % 4]) / 2.0 for i in range(4)]
    dists = [float(np.hypot(*(mp - origin))) for mp in mids]
    return mids[int(np.argmin(dists))]


def _visible_targets(m: SensorModel, ego: "ActorState", actors: Sequence["ActorState"]):
    origin, boresight = sensor_pose(ego, m)
    others = sorted((a for a in actors if a.actor_id != ego.actor_id), key=lambda a: a.actor_id)
    for target in others:
        centre = np.array([target.position.x_m, target.position.y_m])
        if not in_fov(m, origin, boresight, centre):
            continue
        occluders = [a for a in others if a.actor_id != target.actor_id]
        if not line_of_sight_visible(ego, target, occluders, m.visibility_threshold):
            continue
        yield target


def _clutter(m: SensorModel, ego: "ActorState", t: float, rng: np.random.Generator,
             label: Optional[str]) -> list[Detection]:
    origin, boresight = sensor_pose(ego, m)
    out = []
    for _ in range(rng.poisson(m.false_alarm_rate)):
        r = m.max_range_m * math.sqrt(rng.random())
        theta = boresight + (rng.random() - 0.5) * m.fov_rad
        x, y = origin + r * np.array([math.cos(theta), math.sin(theta)])
        out.append(Detection(m.sensor_id, t, ScenePosition(float(x), float(y), 0.0), m.covariance, label))
    return out


# ------------------------------------------------------------- sensor models

def _visible_reflectors(m: SensorModel, ego: "ActorState", actors: Sequence["ActorState"],
                        reflectors: Sequence) -> list[np.ndarray]:
    origin, boresight = sensor_pose(ego, m)
    others = [a for a in actors if a.actor_id != ego.actor_id]
    out = []
    for r in reflectors:
        point = np.asarray(r, dtype=float)[:2]
        if in_fov(m, origin, boresight, point) and not any(_segment_hits_box(origin, point, a) for a in others):
            out.append(point)
    return out


def simulate_radar(m: SensorModel, ego: "ActorState", actors: Sequence["ActorState"],
                   rng: np.random.Generator, t: float = 0.0, reflectors: Sequence = ()) -> list[Detection]:
    """Radar returns for visible actors, static roadside reflectors and clutter.

    Reflectors (sign posts, poles) are point scatterers that the radar sees
    like a small vehicle; they are not actors, so no truth exists for them.
    """
    if m.kind != RADAR:
        raise ValueError("simulate_radar needs a radar model")
    origin, _ = sensor_pose(ego, m)
    refs = []
    for target in _visible_targets(m, ego, actors):
        if rng.random() < m.detection_prob:
            refs.append(nearest_face_point(origin, target))
    for point in _visible_reflectors(m, ego, actors, reflectors):
        if rng.random() < m.detection_prob:
            refs.append(point)
    dets = []
    for ref in refs:
        for _ in range(m.returns_per_vehicle):
            x, y = ref + m.noise_std_m * rng.standard_normal(2)
            dets.append(Detection(m.sensor_id, t, ScenePosition(float(x), float(y), 0.0), m.covariance))
    dets.extend(_clutter(m, ego, t, rng, None))
    return dets


def simulate_camera(m: SensorModel, ego: "ActorState", actors: Sequence["ActorState"],
                    rng: np.random.Generator, t: float = 0.0) -> list[Detection]:
    if m.kind != CAMERA:
        raise ValueError("simulate_camera needs a camera model")
    dets = []
    for target in _visible_targets(m, ego, actors):
        if rng.random() >= m.detection_prob:
            continue
        x, y = np.array([target.position.x_m, target.position.y_m]) + m.noise_std_m * rng.standard_normal(2)
        label = "vehicle" if rng.random() < m.classification_accuracy else "unknown"
        dets.append(Detection(m.sensor_id, t, ScenePosition(float(x), float(y), 0.0), m.covariance, label))
    dets.extend(_clutter(m, ego, t, rng, "unknown"))
    return dets


def simulate(m: SensorModel, ego: "ActorState", actors: Sequence["ActorState"],
             rng: np.random.Generator, t: float = 0.0, reflectors: Sequence = ()) -> list[Detection]:
    if m.kind == RADAR:
        return simulate_radar(m, ego, actors, rng, t, reflectors)
    return simulate_camera(m, ego, actors, rng, t)


# ------------------------------------------------------------------ DBSCAN

_UNVISITED = -2
_NOISE = -1


def dbscan(points, eps: float, min_pts: int) -> ClusterResult:
    """Density-based clustering; noise is labelled -1.

    Points are scanned in input order and cluster ids are handed out in
    discovery order. A border point reachable from several clusters stays
    with the first one that claimed it.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.full(n, _UNVISITED, dtype=int)
    if n == 0:
        return ClusterResult(labels, 0)
    pts = pts.reshape(n, -1)
    neighbours = [sorted(nb) for nb in cKDTree(pts).query_ball_point(pts, eps)]
    core = np.array([len(nb) >= min_pts for nb in neighbours])

    k = 0
    for i in range(n):
        if labels[i] != _UNVISITED:
            continue
        if not core[i]:
            labels[i] = _NOISE
            continue
        labels[i] = k
        queue = list(neighbours[i])
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            if labels[j] == _NOISE:
                labels[j] = k
            if labels[j] != _UNVISITED:
                continue
            labels[j] = k
            if core[j]:
                queue.extend(neighbours[j])
        k += 1
    return ClusterResult(labels, k)


def cluster_radar(dets: Sequence[Detection], eps: float = 1.5, min_pts: int = 2,
                  covariance: Optional[np.ndarray] = None) -> list[Detection]:
    """Collapse raw radar points to one centroid detection per cluster."""
    if not dets:
        return []
    pts = np.array([[d.position.x_m, d.position.y_m, d.position.z_m] for d in dets])
    result = dbscan(pts[:, :2], eps, min_pts)
    out = []
    for k in range(result.n_clusters):
        members = [i for i in range(len(dets)) if result.labels[i] == k]
        x, y, z = pts[members].mean(axis=0)
        first = dets[members[0]]
        cov = first.covariance if covariance is None else np.asarray(covariance, dtype=float)
        out.append(Detection(first.source, first.t, ScenePosition(float(x), float(y), float(z)), cov))
    return out
