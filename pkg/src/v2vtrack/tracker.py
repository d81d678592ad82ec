"""EKF state estimation and track lifecycle for the local fused track list.

The filter runs a 2-D constant-velocity model with position measurements.
That pair is linear, so the EKF coincides with the plain Kalman filter, but
the motion/measurement models are kept behind Jacobian hooks so a nonlinear
model can be swapped in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
COASTED = "coasted"
DELETED = "deleted"

SENSOR = "sensor"
V2V = "v2v"
PRIORITY = "priority"

REPORTED = (CONFIRMED, COASTED)

VEHICLE = "vehicle"

_ALLOWED = {
    TENTATIVE: {TENTATIVE, CONFIRMED, DELETED},
    CONFIRMED: {CONFIRMED, COASTED, DELETED},
    COASTED: {COASTED, CONFIRMED, DELETED},
    DELETED: {DELETED},
}


def is_spd(m: np.ndarray) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.all(np.isfinite(m)):
        return False
    if not np.allclose(m, m.T, atol=1e-9, rtol=0.0):
        return False
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    return True


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class KinematicState:
    """State ``[x, y, vx, vy]`` and its 4x4 covariance."""

    x: np.ndarray
    P: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(4)
        P = np.array(self.P, dtype=float).reshape(4, 4)
        if not is_spd(P):
            raise ValueError("state covariance must be symmetric positive definite")
        x.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    @property
    def position(self) -> np.ndarray:
        return self.x[:2]


class ConstantVelocity:
    """White-noise-acceleration constant-velocity model in 2-D."""

    def f(self, x: np.ndarray, dt: float) -> np.ndarray:
        return self.jacobian(x, dt) @ x

    def jacobian(self, x: np.ndarray, dt: float) -> np.ndarray:
        F = np.eye(4)
        F[0, 2] = dt
        F[1, 3] = dt
        return F

    def process_noise(self, dt: float, q: float) -> np.ndarray:
        q11, q12, q22 = dt**3 / 3.0, dt**2 / 2.0, dt
        return q * np.array([
            [q11, 0.0, q12, 0.0],
            [0.0, q11, 0.0, q12],
            [q12, 0.0, q22, 0.0],
            [0.0, q12, 0.0, q22],
        ])


class PositionMeasurement:
    def h(self, x: np.ndarray) -> np.ndarray:
        return x[:2]

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        H = np.zeros((2, 4))
        H[0, 0] = H[1, 1] = 1.0
        return H


CV_MODEL = ConstantVelocity()
POSITION = PositionMeasurement()


@dataclass(frozen=True)
class Track:
    track_id: int
    kind: str
    state: KinematicState
    status: str = TENTATIVE
    hits: int = 1
    misses_consecutive: int = 0
    last_update_t: float = 0.0
    t: float = 0.0
    source_actor_hint: Optional[int] = None
    hit_window: tuple = (True,)
    sensors: frozenset = frozenset()
    class_label: Optional[str] = None
    innovation: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    innovation_cov: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def position(self) -> np.ndarray:
        return self.state.position

    def transition(self, status: str, **changes) -> "Track":
        if status not in _ALLOWED[self.status]:
            raise ValueError(f"illegal track transition {self.status} -> {status}")
        return replace(self, status=status, **changes)


@dataclass(frozen=True)
class TrackList:
    tracks: tuple = ()
    next_id: int = 1

    def __post_init__(self):
        tracks = tuple(sorted(self.tracks, key=lambda tr: tr.track_id))
        ids = [tr.track_id for tr in tracks]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate track ids")
        if ids and self.next_id <= ids[-1]:
            raise ValueError("next_id must exceed every issued id")
        object.__setattr__(self, "tracks", tracks)

    def __len__(self):
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks)

    def get(self, track_id: int) -> Optional[Track]:
        for tr in self.tracks:
            if tr.track_id == track_id:
                return tr
        return None

    def reported(self) -> list[Track]:
        return [tr for tr in self.tracks if tr.status in REPORTED]


@dataclass(frozen=True)
class TrackerParams:
    gate: float = 3.0
    q: float = 1.0
    confirm_hits: int = 2
    confirm_window: int = 3
    delete_after_misses: int = 6
    init_velocity_var: float = 100.0
    spawn_separation_m: float = 8.0
    merge_distance_m: float = 4.0
    merge_speed_mps: float = 2.0

    def __post_init__(self):
        if self.gate <= 0 or self.q < 0:
            raise ValueError("gate must be positive and q non-negative")
        if not 1 <= self.confirm_hits <= self.confirm_window:
            raise ValueError("need 1 <= confirm_hits <= confirm_window")
        if self.delete_after_misses < 1 or self.init_velocity_var <= 0:
            raise ValueError("delete_after_misses >= 1 and init_velocity_var > 0 required")
        if self.spawn_separation_m < 0 or self.merge_distance_m < 0 or self.merge_speed_mps < 0:
            raise ValueError("spawn/merge thresholds must be non-negative")


def ekf_predict(tr: Track, dt: float, q: float, model=CV_MODEL) -> Track:
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, P = tr.state.x, tr.state.P
    F = model.jacobian(x, dt)
    P_new = _symmetrize(F @ P @ F.T + model.process_noise(dt, q))
    return replace(tr, state=KinematicState(model.f(x, dt), P_new), t=tr.t + dt)


def ekf_update(tr: Track, z, r, meas=POSITION) -> Track:
    r = np.asarray(r, dtype=float)
    if not is_spd(r):
        raise ValueError("measurement covariance must be symmetric positive definite")
    x, P = tr.state.x, tr.state.P
    H = meas.jacobian(x)
    y = np.asarray(z, dtype=float).reshape(-1) - meas.h(x)
    S = _symmetrize(H @ P @ H.T + r)
    K = np.linalg.solve(S, H @ P).T
    x_new = x + K @ y
    P_new = _symmetrize((np.eye(4) - K @ H) @ P)
    return replace(tr, state=KinematicState(x_new, P_new), innovation=y, innovation_cov=S)


def predict_to(tr: Track, t: float, q: float) -> Track:
    dt = t - tr.t
    return ekf_predict(tr, dt, q) if dt > 1e-12 else tr


def mahalanobis_cost_matrix(tracks: Sequence[Track], dets: Sequence) -> np.ndarray:
    cost = np.empty((len(tracks), len(dets)))
    for i, tr in enumerate(tracks):
        P = tr.state.P[:2, :2]
        for j, d in enumerate(dets):
            S = P + np.asarray(d.covariance)[:2, :2]
            y = d.xy - tr.position
            cost[i, j] = math.sqrt(max(float(y @ np.linalg.solve(S, y)), 0.0))
    return cost


@dataclass(frozen=True)
class Assignment:
    pairs: tuple            # (track_id, detection index, distance)
    unassigned_tracks: tuple
    unassigned_detections: tuple


def solve_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment on a (possibly rectangular) matrix."""
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))


def associate_detections_to_tracks(tl: TrackList, dets: Sequence, gate: float) -> Assignment:
    """Global nearest neighbour on Mahalanobis distance, gated after solving."""
    if gate <= 0:
        raise ValueError("gate must be positive")
    tracks = [tr for tr in tl if tr.status != DELETED]
    cost = mahalanobis_cost_matrix(tracks, dets)
    # Gated entries get a large finite cost so the solver stays feasible.
    big = gate * 1e6 + 1.0
    solver_cost = np.where(cost <= gate, cost, big)
    pairs = []
    for i, j in solve_assignment(solver_cost):
        if cost[i, j] <= gate:
            pairs.append((tracks[i].track_id, j, float(cost[i, j])))
    used_t = {p[0] for p in pairs}
    used_d = {p[1] for p in pairs}
    return Assignment(
        tuple(pairs),
        tuple(tr.track_id for tr in tracks if tr.track_id not in used_t),
        tuple(j for j in range(len(dets)) if j not in used_d),
    )


def new_track(track_id: int, kind: str, det, t: float, init_velocity_var: float) -> Track:
    R = np.asarray(det.covariance)[:2, :2]
    P = np.zeros((4, 4))
    P[:2, :2] = R
    P[2, 2] = P[3, 3] = init_velocity_var
    x = np.array([det.position.x_m, det.position.y_m, 0.0, 0.0])
    return Track(track_id, kind, KinematicState(x, P), TENTATIVE, 1, 0, t, t, None, (True,),
                 frozenset({det.source}), getattr(det, "class_label", None))


def _within_gate(tr: Track, det, gate: float) -> bool:
    S = tr.state.P[:2, :2] + np.asarray(det.covariance)[:2, :2]
    y = det.xy - tr.position
    return float(y @ np.linalg.solve(S, y)) <= gate * gate


def _blocks_spawn(tr: Track, det, params: TrackerParams) -> bool:
    if float(np.hypot(*(det.xy - tr.position))) < params.spawn_separation_m:
        return True
    return _within_gate(tr, det, params.gate)


def merge_duplicates(tracks: Sequence[Track], params: TrackerParams) -> list[Track]:
    """Drop the younger of two reported tracks that sit on top of each other.

    Two tracks count as duplicates when their positions are closer than
    ``merge_distance_m`` and their velocity estimates differ by less than
    ``merge_speed_mps``. Tentative tracks are left alone.
    """
    kept = []
    for tr in sorted(tracks, key=lambda tr: tr.track_id):
        if tr.status in REPORTED:
            dup = any(
                o.status in REPORTED
                and float(np.hypot(*(o.position - tr.position))) < params.merge_distance_m
                and float(np.hypot(*(o.state.x[2:] - tr.state.x[2:]))) < params.merge_speed_mps
                for o in kept)
            if dup:
                continue
        kept.append(tr)
    return kept


def _absorb(tr: Track, det) -> Track:
    tr = ekf_update(tr, det.xy, np.asarray(det.covariance)[:2, :2])
    label = tr.class_label
    if det.class_label is not None and label != VEHICLE:
        label = det.class_label
    return replace(tr, sensors=tr.sensors | {det.source}, class_label=label)


def step_local_fusion(tl: TrackList, dets: Sequence, t: float, params: TrackerParams = TrackerParams()) -> TrackList:
    """Advance the local track list by one frame of detections at time ``t``.

    Each sensor's detections are assigned separately, in order of first
    appearance, so one track can absorb a camera and a radar report of the
    same vehicle in the same frame. Unassigned detections spawn tentative
    tracks unless they fall inside the gate of, or closer than
    ``spawn_separation_m`` to, a track that already exists. Radar sees the
    near face and the camera the centre of the same body, which on a long
    vehicle are further apart than the gate.
    """
    window = params.confirm_window
    current = {tr.track_id: predict_to(tr, t, params.q) for tr in tl}
    hit = set()
    leftovers = []
    sources = list(dict.fromkeys(d.source for d in dets))
    for source in sources:
        idx = [j for j, d in enumerate(dets) if d.source == source]
        # confirmed tracks pick first so a wide tentative gate cannot steal their detections
        for tier in (REPORTED, (TENTATIVE,)):
            if tier != REPORTED:
                # a report next to an established track is that track's, even outside its gate
                reported = [tr for tr in current.values() if tr.status in REPORTED]
                idx = [j for j in idx if not any(_blocks_spawn(tr, dets[j], params) for tr in reported)]
            group = [dets[j] for j in idx]
            view = TrackList(tuple(tr for tr in current.values() if tr.status in tier), tl.next_id)
            assignment = associate_detections_to_tracks(view, group, params.gate)
            for track_id, j, _ in assignment.pairs:
                current[track_id] = _absorb(current[track_id], group[j])
                hit.add(track_id)
            idx = [idx[j] for j in assignment.unassigned_detections]
        leftovers.extend(idx)

    out = []
    for track_id, tr in current.items():
        if track_id in hit:
            hist = (tr.hit_window + (True,))[-window:]
            status = tr.status
            if status == TENTATIVE and sum(hist) >= params.confirm_hits:
                status = CONFIRMED
            elif status == COASTED:
                status = CONFIRMED
            out.append(tr.transition(status, hits=tr.hits + 1, misses_consecutive=0, last_update_t=t,
                                     hit_window=hist))
            continue
        hist = (tr.hit_window + (False,))[-window:]
        misses = tr.misses_consecutive + 1
        if tr.status == TENTATIVE:
            # creation frame plus window-1 follow-ups decide the tentative track
            age = len(tr.hit_window) + 1
            status = DELETED if age >= window and sum(hist) < params.confirm_hits else TENTATIVE
        elif misses >= params.delete_after_misses:
            status = DELETED
        else:
            status = COASTED
        tr = tr.transition(status, misses_consecutive=misses, hit_window=hist)
        if status != DELETED:
            out.append(tr)
    out = merge_duplicates(out, params)

    next_id = tl.next_id
    existing = list(out)
    for j in sorted(leftovers):
        det = dets[j]
        if any(_blocks_spawn(tr, det, params) for tr in existing):
            continue
        tr = new_track(next_id, SENSOR, det, t, params.init_velocity_var)
        next_id += 1
        out.append(tr)
        existing.append(tr)
    return TrackList(tuple(out), next_id)
