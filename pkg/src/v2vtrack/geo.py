"""Geodetic (WGS-84) to ECEF to local scene frame conversion.

The scene frame is obtained by translating ECEF coordinates to a local
origin and rotating with ``R = Rx(lat0) @ Ry(lon0) @ Rz(gamma)``, using the
canonical right-handed (active) axis rotations. Angles are radians
internally; degree helpers exist for I/O boundaries only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Ellipsoid:
    semi_major_a: float
    semi_minor_b: float

    def __post_init__(self):
        if not (self.semi_major_a >= self.semi_minor_b > 0):
            raise ValueError("ellipsoid requires a >= b > 0")


WGS84 = Ellipsoid(6378137.0, 6356752.314245)


def _wrap_longitude(lon: float) -> float:
    """Normalize into (-pi, pi]."""
    wrapped = math.remainder(lon, 2.0 * math.pi)
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class GeodeticPosition:
    latitude_rad: float
    longitude_rad: float
    altitude_m: float = 0.0

    def __post_init__(self):
        if not -math.pi / 2 <= self.latitude_rad <= math.pi / 2:
            raise ValueError(f"latitude {self.latitude_rad} rad outside [-pi/2, pi/2]")
        if not math.isfinite(self.longitude_rad) or not math.isfinite(self.altitude_m):
            raise ValueError("longitude and altitude must be finite")
        object.__setattr__(self, "longitude_rad", _wrap_longitude(self.longitude_rad))

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, alt_m: float = 0.0) -> "GeodeticPosition":
        return cls(math.radians(lat_deg), math.radians(lon_deg), alt_m)

    @property
    def latitude_deg(self) -> float:
        return math.degrees(self.latitude_rad)

    @property
    def longitude_deg(self) -> float:
        return math.degrees(self.longitude_rad)


@dataclass(frozen=True)
class EcefPosition:
    x_m: float
    y_m: float
    z_m: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x_m, self.y_m, self.z_m)):
            raise ValueError("ECEF components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.z_m])


@dataclass(frozen=True)
class ScenePosition:
    x_m: float
    y_m: float
    z_m: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x_m, self.y_m, self.z_m)):
            raise ValueError("scene components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.z_m])


def prime_vertical_radius(lat: float, e: Ellipsoid = WGS84) -> float:
    """Radius of curvature in the prime vertical, N(lat)."""
    a, b = e.semi_major_a, e.semi_minor_b
    c, s = math.cos(lat), math.sin(lat)
    return a * a / math.sqrt(a * a * c * c + b * b * s * s)


def geodetic_to_ecef(g: GeodeticPosition, e: Ellipsoid = WGS84) -> EcefPosition:
    a, b = e.semi_major_a, e.semi_minor_b
    lat, lon, h = g.latitude_rad, g.longitude_rad, g.altitude_m
    n = prime_vertical_radius(lat, e)
    cos_lat = math.cos(lat)
    return EcefPosition(
        (n + h) * cos_lat * math.cos(lon),
        (n + h) * cos_lat * math.sin(lon),
        ((b * b) / (a * a) * n + h) * math.sin(lat),
    )


def ecef_to_local(p: EcefPosition, origin: EcefPosition) -> np.ndarray:
    return np.array([p.x_m - origin.x_m, p.y_m - origin.y_m, p.z_m - origin.z_m])


def rot_x(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SceneFrame:
    origin_geodetic: GeodeticPosition
    origin_ecef: EcefPosition
    gamma_rad: float
    rotation: np.ndarray = field(repr=False)

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=float)
        rotation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)


def build_scene_frame(origin: GeodeticPosition, gamma: float = 0.0, e: Ellipsoid = WGS84) -> SceneFrame:
    rotation = rot_x(origin.latitude_rad) @ rot_y(origin.longitude_rad) @ rot_z(gamma)
    return SceneFrame(origin, geodetic_to_ecef(origin, e), gamma, rotation)


def geodetic_to_scene(g: GeodeticPosition, f: SceneFrame, e: Ellipsoid = WGS84) -> ScenePosition:
    local = ecef_to_local(geodetic_to_ecef(g, e), f.origin_ecef)
    x, y, z = f.rotation @ local
    return ScenePosition(float(x), float(y), float(z))
