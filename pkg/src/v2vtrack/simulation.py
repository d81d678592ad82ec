"""Per-frame pipeline tying ground truth, sensors, V2V and the track lists together.

Frame order: ground truth, camera then clustered radar detections, local
fusion, BSM broadcast through the channel, V2V tracks, sensor/V2V
association, priority list, metric snapshot.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import BinaryIO, Optional

import numpy as np

from .association import (
    PriorityTrackList,
    associate_tracks,
    priority_system_tracks,
    resolve_one_to_one,
    update_priority_list,
)
from .geo import build_scene_frame
from .metrics import FrameSnapshot, GospaParams, RunReport, evaluate_run
from .scenario import ScenarioConfig, ground_truth_at
from .sensors import RADAR, cluster_radar, in_fov, sensor_pose, simulate, visible_fraction
from .tracker import TrackList, step_local_fusion
from .v2v import Channel, generate_bsms, spoof_temp_ids, step_v2v, write_capture


@dataclass(frozen=True)
class RunOptions:
    seed: Optional[int] = None
    disable_v2v: bool = False
    disable_local: bool = False
    gospa: GospaParams = GospaParams()


@dataclass
class RunResult:
    config: ScenarioConfig
    snapshots: list
    report: RunReport
    registry: dict
    spoof_ids: set
    occluded: list                     # per frame: actor ids in radar FOV but hidden
    priority_sources: set              # every temp_id that ever owned a priority track
    track_log: list = field(repr=False, default_factory=list)
    n_detections: list = field(repr=False, default_factory=list)


def _occluded_actors(cfg: ScenarioConfig, ego, truth) -> set:
    radars = cfg.radars()
    if not radars:
        return set()
    m = radars[0]
    origin, boresight = sensor_pose(ego, m)
    others = [a for a in truth if a.actor_id != ego.actor_id]
    out = set()
    for target in others:
        if not in_fov(m, origin, boresight, target.xy):
            continue
        occluders = [a for a in others if a.actor_id != target.actor_id]
        if visible_fraction(ego, target, occluders) < m.visibility_threshold:
            out.add(target.actor_id)
    return out


def _cluster_cov(m, cfg: ScenarioConfig) -> np.ndarray:
    # point noise plus the spread of where on the body the returns came from
    var = m.noise_std_m**2 + cfg.cluster_std_m**2
    return np.diag([var, var, var])


def _log_rows(k: int, t: float, system: str, items) -> list[dict]:
    rows = []
    for key, tr in items:
        rows.append({"frame": k, "t": round(t, 6), "system": system, "track": key, "status": tr.status,
                     "x": float(tr.position[0]), "y": float(tr.position[1]),
                     "vx": float(tr.state.x[2]), "vy": float(tr.state.x[3]),
                     "source": tr.source_actor_hint})
    return rows


def run_scenario(cfg: ScenarioConfig, opts: RunOptions = RunOptions(),
                 capture: Optional[BinaryIO] = None) -> RunResult:
    seed = cfg.rng_seed if opts.seed is None else opts.seed
    streams = np.random.SeedSequence(seed).spawn(len(cfg.sensors) + 2)
    sensor_rngs = [np.random.default_rng(s) for s in streams[:len(cfg.sensors)]]
    gps_rng = np.random.default_rng(streams[-2])
    channel = Channel(cfg.channel, build_scene_frame(cfg.scene_origin, cfg.gamma_rad), np.random.default_rng(streams[-1]),
                      cfg.tick_s)
    frame = channel.frame
    cameras = [(m, r) for m, r in zip(cfg.sensors, sensor_rngs) if m.kind != RADAR]
    radars = [(m, r) for m, r in zip(cfg.sensors, sensor_rngs) if m.kind == RADAR]

    local = TrackList()
    v2v = TrackList()
    priority = PriorityTrackList()
    snapshots, occluded, log, n_dets = [], [], [], []
    sources = set()
    for k in range(cfg.n_ticks):
        t = k * cfg.tick_s
        truth = ground_truth_at(cfg, t)
        ego = next(a for a in truth if a.actor_id == cfg.ego_id)

        dets = []
        if not opts.disable_local:
            for m, rng in cameras:
                dets.extend(simulate(m, ego, truth, rng, t, cfg.static_reflectors))
            for m, rng in radars:
                dets.extend(cluster_radar(simulate(m, ego, truth, rng, t, cfg.static_reflectors), cfg.cluster_eps_m,
                                          cfg.cluster_min_pts, _cluster_cov(m, cfg)))
        n_dets.append(len(dets))
        local = step_local_fusion(local, dets, t, cfg.tracker)

        bsms = generate_bsms(truth, frame, t, gps_rng, cfg.v2v.gps_noise_std_m, tick=k, tick_s=cfg.tick_s,
                             exclude=(cfg.ego_id,))
        delivered = channel.transmit(bsms, k)
        if opts.disable_v2v:
            delivered = []
        if capture is not None:
            write_capture(capture, k, delivered)
        v2v = step_v2v(v2v, delivered, frame, t, cfg.v2v)

        S = local.reported()
        pairs = associate_tracks(S, list(v2v), cfg.association)
        mapping = resolve_one_to_one(pairs)
        priority = update_priority_list(priority, local, v2v, mapping, t, cfg.association)
        sources.update(tr.source_actor_hint for tr in priority.tracks)
        prio_out = priority_system_tracks(priority, S, v2v, pairs, cfg.association.fallback_needs_label)

        systems = {
            "local": {tr.track_id: tuple(tr.position) for tr in S},
            "v2v": {tr.track_id: tuple(tr.position) for tr in v2v},
            "priority": {f"{tag}{tr.track_id}": tuple(tr.position) for tag, tr in prio_out},
        }
        truths = {a.actor_id: (a.position.x_m, a.position.y_m) for a in truth if a.actor_id != cfg.ego_id}
        snapshots.append(FrameSnapshot(k, t, truths, systems))
        occluded.append(_occluded_actors(cfg, ego, truth))
        log += _log_rows(k, t, "local", [(tr.track_id, tr) for tr in S])
        log += _log_rows(k, t, "v2v", [(tr.track_id, tr) for tr in v2v])
        log += _log_rows(k, t, "priority", [(f"{tag}{tr.track_id}", tr) for tag, tr in prio_out])

    report = evaluate_run(snapshots, opts.gospa)
    return RunResult(cfg, snapshots, report, dict(priority.registry), spoof_temp_ids(cfg.channel),
                     occluded, sources, log, n_dets)


def with_overrides(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    return dataclasses.replace(cfg, **changes)
