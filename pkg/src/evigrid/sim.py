"""Synthetic urban scenarios: scripted trajectories, raycast lidar, and
per-cell ground-truth labels for quantitative evaluation.

World geometry is polygonal; dynamic objects are oriented rectangles moving
along waypoint tracks.  Scans are reproducible: the noise stream for frame
k is seeded by (rng_seed, k), so frames can be generated in any order.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .grid import GridSpec
from .mapio import MapValidationError, Polygon, VectorMap, load_map
from .sensor import MISS, Pose, Scan, normalize_angle

#: Ground-truth class codes follow the fused frame's element order.
CLASS_FREE, CLASS_BUILDING, CLASS_UNMAPPED, CLASS_STOPPED, CLASS_MOVING = range(5)

#: Objects slower than this count as stopped in the ground truth.
STOPPED_SPEED_MAX = 0.5

_RAY_EPS = 1e-9


@dataclass(frozen=True)
class LidarParams:
    beams: int = 800
    fov: float = math.tau
    max_range: float = 50.0
    sigma: float = 0.02

    def __post_init__(self):
        if self.beams < 1:
            raise ValueError("lidar needs at least one beam")
        if self.fov <= 0 or self.max_range <= 0 or self.sigma < 0:
            raise ValueError("invalid lidar parameters")


@dataclass(frozen=True)
class DynamicObject:
    """A rectangular object following a waypoint track.

    Ground truth labels its cells as moving or stopped depending on the
    interpolated speed.
    """

    length: float
    width: float
    waypoints: tuple[Pose, ...]

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if self.length <= 0 or self.width <= 0:
            raise ValueError("object footprint must be positive")
        if not self.waypoints:
            raise ValueError("object needs at least one waypoint")
        times = [wp.t for wp in self.waypoints]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")


@dataclass(frozen=True)
class Scenario:
    vmap: VectorMap
    ego: tuple[Pose, ...]
    duration: float
    unmapped_obstacles: tuple[Polygon, ...] = ()
    objects: tuple[DynamicObject, ...] = ()
    lidar: LidarParams = field(default_factory=LidarParams)
    frame_rate: float = 10.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ego", tuple(self.ego))
        object.__setattr__(self, "unmapped_obstacles", tuple(self.unmapped_obstacles))
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if not self.ego:
            raise ValueError("scenario needs an ego track")
        times = [wp.t for wp in self.ego]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValueError("ego waypoint times must be strictly increasing")
        if times[0] > 0.0 or times[-1] < self.duration:
            raise ValueError("ego waypoints must cover [0, duration]")

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.duration * self.frame_rate)) + 1

    def frame_time(self, index: int) -> float:
        return index / self.frame_rate

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[Path] = None) -> "Scenario":
        map_field = data.get("map", {"buildings": [], "roads": []})
        if isinstance(map_field, str):
            path = Path(map_field)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            vmap = load_map(path)
        else:
            vmap = load_map(map_field)

        def _pose(quad) -> Pose:
            t, x, y, heading = quad
            return Pose(x, y, heading, t=t)

        objects = tuple(
            DynamicObject(length=obj["footprint"][0], width=obj["footprint"][1],
                          waypoints=tuple(_pose(q) for q in obj["waypoints"]))
            for obj in data.get("objects", []))
        obstacles = tuple(Polygon(tuple((x, y) for x, y in ring))
                          for ring in data.get("unmapped_obstacles", []))
        lidar_field = data.get("lidar", {})
        lidar = LidarParams(
            beams=int(lidar_field.get("beams", 800)),
            fov=float(lidar_field.get("fov", math.tau)),
            max_range=float(lidar_field.get("max_range", 50.0)),
            sigma=float(lidar_field.get("sigma", 0.02)))
        return cls(
            vmap=vmap,
            ego=tuple(_pose(q) for q in data["ego"]),
            duration=float(data["duration"]),
            unmapped_obstacles=obstacles,
            objects=objects,
            lidar=lidar,
            frame_rate=float(data.get("frame_rate", 10.0)),
            rng_seed=int(data.get("rng_seed", 0)))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        path = Path(path)
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MapValidationError(f"scenario file is not valid JSON: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, rng_seed=seed)


def _interpolate_track(waypoints: Sequence[Pose], t: float) -> tuple[Pose, float]:
    """Pose and speed along a waypoint track; held constant (speed 0)
    outside the track's time span."""
    first, last = waypoints[0], waypoints[-1]
    if len(waypoints) == 1 or t < first.t:
        return Pose(first.x, first.y, first.heading, t=t), 0.0
    if t > last.t:
        return Pose(last.x, last.y, last.heading, t=t), 0.0
    times = [wp.t for wp in waypoints]
    k = min(bisect_right(times, t) - 1, len(waypoints) - 2)
    a, b = waypoints[k], waypoints[k + 1]
    dt = b.t - a.t
    u = (t - a.t) / dt
    x = a.x + u * (b.x - a.x)
    y = a.y + u * (b.y - a.y)
    heading = normalize_angle(a.heading + u * normalize_angle(b.heading - a.heading))
    speed = math.hypot(b.x - a.x, b.y - a.y) / dt
    return Pose(x, y, heading, t=t), speed


def poses_at(scenario: Scenario, t: float) -> tuple[Pose, list[tuple[Pose, float]]]:
    """Ego pose and (pose, speed) for every object at time t."""
    if not 0.0 <= t <= scenario.duration:
        raise ValueError(f"t={t} outside scenario duration [0, {scenario.duration}]")
    ego, _ = _interpolate_track(scenario.ego, t)
    objects = [_interpolate_track(obj.waypoints, t) for obj in scenario.objects]
    return ego, objects


def _footprint_corners(obj: DynamicObject, pose: Pose) -> tuple[tuple[float, float], ...]:
    half_l, half_w = 0.5 * obj.length, 0.5 * obj.width
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    return tuple(
        (pose.x + c * lx - s * ly, pose.y + s * lx + c * ly)
        for lx, ly in ((half_l, half_w), (-half_l, half_w),
                       (-half_l, -half_w), (half_l, -half_w)))


def _world_segments(scenario: Scenario, t: float) -> np.ndarray:
    """(S, 4) array of obstacle segments (buildings, unmapped obstacles,
    object footprints at time t)."""
    segments = []

    def _add(poly_vertices):
        n = len(poly_vertices)
        for k in range(n):
            x1, y1 = poly_vertices[k]
            x2, y2 = poly_vertices[(k + 1) % n]
            segments.append((x1, y1, x2, y2))

    for poly in scenario.vmap.buildings:
        _add(poly.vertices)
    for poly in scenario.unmapped_obstacles:
        _add(poly.vertices)
    _, object_states = poses_at(scenario, t)
    for obj, (pose, _) in zip(scenario.objects, object_states):
        _add(_footprint_corners(obj, pose))
    return np.array(segments, dtype=np.float64).reshape(-1, 4)


def generate_scan(scenario: Scenario, t: float) -> Scan:
    """Cast one sweep of rays from the ego pose and apply range noise.

    Noise is Gaussian on range, clamped to four sigmas and to
    (0, max_range]; the generator is seeded per frame so scans are
    bit-reproducible.
    """
    ego, _ = poses_at(scenario, t)
    lidar = scenario.lidar
    bearings = np.linspace(-0.5 * lidar.fov, 0.5 * lidar.fov, lidar.beams)
    angles = ego.heading + bearings
    dir_x, dir_y = np.cos(angles), np.sin(angles)

    segments = _world_segments(scenario, t)
    distances = np.full(lidar.beams, np.inf)
    if len(segments):
        ax, ay = segments[:, 0], segments[:, 1]
        seg_x, seg_y = segments[:, 2] - ax, segments[:, 3] - ay
        rel_x, rel_y = ax - ego.x, ay - ego.y
        denom = dir_x[:, None] * seg_y[None, :] - dir_y[:, None] * seg_x[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ray = (rel_x[None, :] * seg_y[None, :]
                     - rel_y[None, :] * seg_x[None, :]) / denom
            u = (rel_x[None, :] * dir_y[:, None]
                 - rel_y[None, :] * dir_x[:, None]) / denom
        valid = (np.abs(denom) > _RAY_EPS) & (u >= 0.0) & (u <= 1.0) & (t_ray > _RAY_EPS)
        distances = np.where(valid, t_ray, np.inf).min(axis=1)

    hit = distances <= lidar.max_range
    ranges = np.full(lidar.beams, MISS)
    if lidar.sigma > 0.0:
        frame_index = int(round(t * scenario.frame_rate))
        rng = np.random.default_rng([scenario.rng_seed, frame_index])
        noise = lidar.sigma * np.clip(rng.standard_normal(lidar.beams), -4.0, 4.0)
        noisy = np.clip(distances + noise, _RAY_EPS, lidar.max_range)
        ranges[hit] = noisy[hit]
    else:
        ranges[hit] = distances[hit]
    return Scan(bearings, ranges, lidar.max_range)


def rasterize_static_labels(scenario: Scenario, spec: GridSpec) -> np.ndarray:
    """(width, height) int8 labels for the static world: buildings win over
    unmapped obstacles; everything else starts free."""
    from .mapio import rasterize

    labels = np.zeros((spec.width, spec.height), dtype=np.int8)
    labels[rasterize(scenario.unmapped_obstacles, spec)] = CLASS_UNMAPPED
    labels[rasterize(scenario.vmap.buildings, spec)] = CLASS_BUILDING
    return labels


def ground_truth_grid(scenario: Scenario, t: float, spec: GridSpec,
                      static_labels: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-cell class labels at time t.

    Precedence: building > unmapped obstacle > object (moving/stopped by
    speed threshold) > free.  Pass precomputed static labels to avoid
    re-rasterizing the map every frame.
    """
    from .mapio import rasterize

    if static_labels is None:
        static_labels = rasterize_static_labels(scenario, spec)
    labels = static_labels.copy()
    _, object_states = poses_at(scenario, t)
    for obj, (pose, speed) in zip(scenario.objects, object_states):
        footprint = Polygon(_footprint_corners(obj, pose))
        mask = rasterize([footprint], spec) & (labels == CLASS_FREE)
        labels[mask] = CLASS_MOVING if speed >= STOPPED_SPEED_MAX else CLASS_STOPPED
    return labels
