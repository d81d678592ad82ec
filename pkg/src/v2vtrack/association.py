"""Sensor/V2V track association and the validated priority track list.

A V2V source (BSM temporary id) only enters the priority list after one of
its tracks has been paired with a local sensor track. Once validated, the
priority track keeps running on V2V data alone for much longer than a local
track may coast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import chi2

from .tracker import (
    CONFIRMED,
    COASTED,
    PRIORITY,
    VEHICLE,
    KinematicState,
    Track,
    TrackList,
    predict_to,
)

DEFAULT_EPSILON = math.sqrt(chi2.ppf(0.95, df=3))


def default_measurement_cov(radar_std_m: float = 0.5, gps_std_m: float = 0.3,
                            reference_offset_m: float = 2.5) -> np.ndarray:
    """Diagonal C: radar and GPS variances plus the spread between where radar
    sees a vehicle (its nearest face) and where its BSM places it (centre)."""
    var = radar_std_m**2 + gps_std_m**2 + reference_offset_m**2
    return np.diag([var, var, var])


@dataclass(frozen=True)
class AssociationParams:
    epsilon: float = DEFAULT_EPSILON
    C: np.ndarray = field(default_factory=default_measurement_cov, repr=False)
    priority_coast_s: float = 10.0
    q: float = 0.5
    fallback_needs_label: bool = True
    reference_offset_m: float = 2.5  # sensor-track bias budget used when fusing

    def __post_init__(self):
        C = np.array(self.C, dtype=float).reshape(3, 3)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        _cholesky(C)
        if self.priority_coast_s <= 0:
            raise ValueError("priority_coast_s must be positive")
        if self.reference_offset_m < 0:
            raise ValueError("reference_offset_m must be non-negative")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)


@dataclass(frozen=True)
class AssociationPair:
    sensor_track_id: int
    v2v_track_id: int
    distance: float


def _cholesky(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or not np.allclose(C, C.T, rtol=0, atol=1e-12):
        raise ValueError("C must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise ValueError("C must be positive definite") from exc


def mahalanobis_distance(z_v, z_s, C) -> float:
    L = _cholesky(C)
    d = np.asarray(z_v, dtype=float) - np.asarray(z_s, dtype=float)
    w = solve_triangular(L, d, lower=True)
    return float(np.linalg.norm(w))


def track_point(tr: Track) -> np.ndarray:
    """Track position lifted to 3-D (ground plane, z = 0)."""
    return np.array([tr.position[0], tr.position[1], 0.0])


def associate_tracks(S: Sequence[Track], V: Sequence[Track], p: AssociationParams) -> list[AssociationPair]:
    """All sensor/V2V pairs within the Mahalanobis threshold (many-to-many)."""
    L = _cholesky(p.C)
    A = []
    for s in S:
        z_s = track_point(s)
        for v in V:
            w = solve_triangular(L, track_point(v) - z_s, lower=True)
            d_m = float(np.linalg.norm(w))
            if d_m <= p.epsilon:
                A.append(AssociationPair(s.track_id, v.track_id, d_m))
    return A


def resolve_one_to_one(pairs: Sequence[AssociationPair]) -> list[AssociationPair]:
    """Greedy by ascending distance; ties go to the lower sensor then V2V id."""
    kept = []
    used_s, used_v = set(), set()
    for pair in sorted(pairs, key=lambda q: (q.distance, q.sensor_track_id, q.v2v_track_id)):
        if pair.sensor_track_id in used_s or pair.v2v_track_id in used_v:
            continue
        kept.append(pair)
        used_s.add(pair.sensor_track_id)
        used_v.add(pair.v2v_track_id)
    return kept


def with_reference_uncertainty(s: KinematicState, offset_m: float) -> KinematicState:
    """Widen the position block: a sensor track follows the visible face, not the centre."""
    P = s.P.copy()
    P[0, 0] += offset_m**2
    P[1, 1] += offset_m**2
    return KinematicState(s.x, P)


def fuse_states(a: KinematicState, b: KinematicState) -> KinematicState:
    """Covariance-weighted (information) combination of two estimates."""
    Ia = np.linalg.inv(a.P)
    Ib = np.linalg.inv(b.P)
    P = np.linalg.inv(Ia + Ib)
    P = 0.5 * (P + P.T)
    return KinematicState(P @ (Ia @ a.x + Ib @ b.x), P)


@dataclass(frozen=True)
class PriorityTrackList:
    tracks: TrackList = TrackList()
    registry: dict = field(default_factory=dict)  # temp_id -> validated_at (s)

    def is_validated(self, temp_id: Optional[int]) -> bool:
        return temp_id in self.registry

    def track_for(self, temp_id: int) -> Optional[Track]:
        for tr in self.tracks:
            if tr.source_actor_hint == temp_id:
                return tr
        return None


def update_priority_list(pl: PriorityTrackList, sensor_tl: TrackList, v2v_tl: TrackList,
                         mapping: Sequence[AssociationPair], t: float,
                         params: AssociationParams = AssociationParams()) -> PriorityTrackList:
    v2v_by_id = {tr.track_id: tr for tr in v2v_tl}
    sensor_by_id = {tr.track_id: tr for tr in sensor_tl}
    partner = {}
    registry = dict(pl.registry)
    for pair in mapping:
        v = v2v_by_id.get(pair.v2v_track_id)
        s = sensor_by_id.get(pair.sensor_track_id)
        if v is None or s is None or v.source_actor_hint is None:
            continue
        if v.track_id in partner:
            raise ValueError("mapping is not one-to-one")
        partner[v.track_id] = s
        registry.setdefault(v.source_actor_hint, t)

    existing = {tr.source_actor_hint: tr for tr in pl.tracks}
    next_id = pl.tracks.next_id
    out = []
    live = set()
    for v in sorted(v2v_tl, key=lambda tr: tr.track_id):
        temp = v.source_actor_hint
        if temp not in registry:
            continue
        s = partner.get(v.track_id)
        state = (fuse_states(with_reference_uncertainty(s.state, params.reference_offset_m), v.state)
                 if s is not None else v.state)
        last = max(v.last_update_t, s.last_update_t) if s is not None else v.last_update_t
        prev = existing.get(temp)
        if prev is not None and t - prev.last_update_t > params.priority_coast_s + 1e-9:
            prev = None  # expired: the source re-enters under a new track id
        if prev is None:
            tr = Track(next_id, PRIORITY, state, CONFIRMED, 1, 0, last, t, temp, (True,))
            next_id += 1
        else:
            status = CONFIRMED if last > prev.last_update_t + 1e-12 else COASTED
            tr = prev.transition(status, state=state, t=t, hits=prev.hits + 1,
                                 misses_consecutive=0 if status == CONFIRMED else prev.misses_consecutive + 1,
                                 last_update_t=max(last, prev.last_update_t))
        out.append(tr)
        live.add(temp)

    for temp, prev in existing.items():
        if temp in live:
            continue
        if t - prev.last_update_t > params.priority_coast_s + 1e-9:
            continue
        tr = predict_to(prev, t, params.q)
        out.append(tr.transition(COASTED, misses_consecutive=prev.misses_consecutive + 1))
    return PriorityTrackList(TrackList(tuple(out), next_id), registry)


def priority_system_tracks(pl: PriorityTrackList, sensor_reported: Sequence[Track],
                           v2v_tl: TrackList, pairs: Sequence[AssociationPair],
                           needs_label: bool = False) -> list[tuple[str, Track]]:
    """What the priority system hands downstream.

    Every priority track, plus local sensor tracks as a fallback. A sensor
    track is left out when the association step tied it to a validated V2V
    source (the priority track already represents that object) or, with
    ``needs_label``, when no camera report has ever classified it as a
    vehicle. The label check screens out radar-only artefacts such as
    roadside reflectors. It only applies while V2V tracks exist; with no
    V2V input the output is exactly the local list.
    """
    validated_v = {tr.track_id for tr in v2v_tl if pl.is_validated(tr.source_actor_hint)}
    absorbed = {p.sensor_track_id for p in pairs if p.v2v_track_id in validated_v}
    screen = needs_label and len(v2v_tl) > 0
    out = [("p", tr) for tr in pl.tracks]
    out += [("s", tr) for tr in sensor_reported if tr.track_id not in absorbed
            and (not screen or tr.class_label == VEHICLE)]
    return out
