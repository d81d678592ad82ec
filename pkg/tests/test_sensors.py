import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dbscan_reference
from v2vtrack.geo import ScenePosition
from v2vtrack.scenario import ActorState
from v2vtrack.sensors import (
    CAMERA,
    RADAR,
    Detection,
    SensorModel,
    cluster_radar,
    dbscan,
    in_fov,
    nearest_face_point,
    sensor_pose,
    simulate_camera,
    simulate_radar,
    visible_fraction,
)

RADAR_IDEAL = SensorModel("r", RADAR, math.radians(120), 150.0, 0.0, detection_prob=1.0, returns_per_vehicle=3)
CAMERA_IDEAL = SensorModel("c", CAMERA, math.radians(60), 80.0, 0.0, detection_prob=1.0)


def car(i, x, y, heading=0.0, length=4.8, width=1.9):
    return ActorState(i, ScenePosition(x, y), np.zeros(2), heading, length, width, True)


EGO = car(1, 0.0, 0.0)  # facing +x, sensor on the front bumper at (2.4, 0)


# ------------------------------------------------------------------ DBSCAN

@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 30), st.floats(0, 30)), max_size=80),
       st.floats(0.3, 4.0), st.integers(1, 5))
def test_dbscan_matches_reference(points, eps, min_pts):
    got = dbscan(points, eps, min_pts).labels
    want = dbscan_reference(np.array(points).reshape(-1, 2), eps, min_pts) if points else np.array([])
    assert got.tolist() == want.tolist()


def test_dbscan_two_blobs_and_noise():
    pts = [(0, 0), (0.5, 0), (0, 0.5), (10, 10), (10.4, 10), (50, 50)]
    res = dbscan(pts, 1.0, 2)
    assert res.labels.tolist() == [0, 0, 0, 1, 1, -1]
    assert res.n_clusters == 2


def test_dbscan_border_point_goes_to_first_cluster():
    # point 2 is a border point reachable from both cores
    pts = [(0, 0), (-0.9, 0), (1.0, 0), (2.0, 0), (2.9, 0)]
    assert dbscan(pts, 1.0, 2).labels.tolist() == dbscan_reference(np.array(pts), 1.0, 2).tolist()


def test_dbscan_empty_and_invalid():
    assert dbscan([], 1.0, 2).n_clusters == 0
    with pytest.raises(ValueError):
        dbscan([(0, 0)], 0.0, 2)
    with pytest.raises(ValueError):
        dbscan([(0, 0)], 1.0, 0)


def test_cluster_radar_centroid_and_covariance():
    cov = np.diag([4.0, 4.0, 4.0])
    dets = [Detection("r", 0.0, ScenePosition(x, y), np.eye(3)) for x, y in [(0, 0), (1, 0), (0.5, 0.9), (40, 40)]]
    (d,) = cluster_radar(dets, 1.5, 2, cov)
    assert d.xy == pytest.approx([0.5, 0.3])
    assert np.array_equal(d.covariance, cov)


# ---------------------------------------------------------------- geometry

def test_sensor_pose_front_bumper():
    origin, bore = sensor_pose(car(1, 0, 0, math.pi / 2))
    assert origin == pytest.approx([0.0, 2.4])
    assert bore == pytest.approx(math.pi / 2)


def test_in_fov():
    origin = np.zeros(2)
    assert in_fov(RADAR_IDEAL, origin, 0.0, np.array([100.0, 0.0]))
    assert not in_fov(RADAR_IDEAL, origin, 0.0, np.array([151.0, 0.0]))
    assert in_fov(RADAR_IDEAL, origin, 0.0, np.array([10 * math.cos(1.04), 10 * math.sin(1.04)]))
    assert not in_fov(RADAR_IDEAL, origin, 0.0, np.array([10 * math.cos(1.06), 10 * math.sin(1.06)]))


def test_nearest_face_is_rear_bumper_of_car_ahead():
    assert nearest_face_point(np.zeros(2), car(2, 20.0, 0.0)) == pytest.approx([17.6, 0.0])


def test_visibility_blocked_by_truck():
    target = car(2, 40.0, 0.0)
    truck = car(3, 15.0, 0.0, length=10.0, width=2.5)
    assert visible_fraction(EGO, target, []) == 1.0
    assert visible_fraction(EGO, target, [truck]) == 0.0
    assert visible_fraction(EGO, target, [car(3, 15.0, 8.0)]) == 1.0


# ----------------------------------------------------------------- sensors

def test_ideal_radar_returns_on_near_face():
    dets = simulate_radar(RADAR_IDEAL, EGO, [EGO, car(2, 20.0, 0.0)], np.random.default_rng(0))
    assert len(dets) == 3
    assert all(d.xy == pytest.approx([17.6, 0.0]) for d in dets)


def test_radar_hidden_target_not_seen():
    actors = [EGO, car(2, 40.0, 0.0), car(3, 15.0, 0.0, length=10.0, width=2.5)]
    dets = simulate_radar(RADAR_IDEAL, EGO, actors, np.random.default_rng(0))
    assert {tuple(np.round(d.xy, 6)) for d in dets} == {(10.0, 0.0)}


def test_radar_reflector_seen_and_shadowed():
    rng = np.random.default_rng(0)
    dets = simulate_radar(RADAR_IDEAL, EGO, [EGO], rng, reflectors=[(30.0, 5.0)])
    assert len(dets) == 3 and dets[0].xy == pytest.approx([30.0, 5.0])
    blocker = car(3, 15.0, 2.5, length=10.0, width=2.5)
    shadowed = simulate_radar(RADAR_IDEAL, EGO, [EGO, blocker], rng, reflectors=[(30.0, 5.0)])
    assert len(shadowed) == 3 and all(d.xy[0] < 20 for d in shadowed)  # only the blocker's face


def test_camera_centre_and_label():
    (d,) = simulate_camera(CAMERA_IDEAL, EGO, [EGO, car(2, 20.0, 3.0)], np.random.default_rng(0))
    assert d.xy == pytest.approx([20.0, 3.0])
    assert d.class_label == "vehicle"


def test_camera_out_of_range():
    assert simulate_camera(CAMERA_IDEAL, EGO, [EGO, car(2, 90.0, 0.0)], np.random.default_rng(0)) == []


def test_clutter_rate():
    m = SensorModel("r", RADAR, math.radians(120), 150.0, 0.5, false_alarm_rate=2.0)
    rng = np.random.default_rng(1)
    n = [len(simulate_radar(m, EGO, [EGO], rng)) for _ in range(2000)]
    assert np.mean(n) == pytest.approx(2.0, rel=0.08)


def test_detection_probability():
    m = SensorModel("c", CAMERA, math.radians(60), 80.0, 0.0, detection_prob=0.7)
    rng = np.random.default_rng(2)
    hits = sum(len(simulate_camera(m, EGO, [EGO, car(2, 20.0, 0.0)], rng)) for _ in range(4000))
    assert hits / 4000 == pytest.approx(0.7, abs=0.03)


def test_same_seed_same_detections():
    m = SensorModel("r", RADAR, math.radians(120), 150.0, 0.5, detection_prob=0.9, false_alarm_rate=1.0)
    actors = [EGO, car(2, 20.0, 0.0), car(3, 40.0, 10.0)]
    a = simulate_radar(m, EGO, actors, np.random.default_rng(5))
    b = simulate_radar(m, EGO, actors, np.random.default_rng(5))
    assert [tuple(d.xy) for d in a] == [tuple(d.xy) for d in b]


@pytest.mark.parametrize("kw", [dict(kind="lidar"), dict(fov_rad=0.0), dict(max_range_m=-1.0), dict(noise_std_m=-1.0),
                                dict(detection_prob=1.2), dict(returns_per_vehicle=0), dict(false_alarm_rate=-1.0)])
def test_sensor_model_validation(kw):
    base = dict(sensor_id="s", kind=RADAR, fov_rad=1.0, max_range_m=10.0, noise_std_m=0.1)
    base.update(kw)
    with pytest.raises(ValueError):
        SensorModel(**base)


def test_wrong_kind_rejected():
    with pytest.raises(ValueError):
        simulate_radar(CAMERA_IDEAL, EGO, [EGO], np.random.default_rng(0))
    with pytest.raises(ValueError):
        simulate_camera(RADAR_IDEAL, EGO, [EGO], np.random.default_rng(0))
