"""Vector-map ingestion and prior-grid construction.

Maps are plain JSON polygon lists in the scenario's local metric frame.
Each cell of the prior grid is classified by its center point and receives
mass on one context set (building, road, or the intermediate area) plus
the full frame; the confidence split is governed by the beta parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .belief import MAP_FRAME
from .grid import EvidentialGrid, GridSpec

#: Context sets projected from map data onto the fused frame.
BUILDING_CONTEXT = MAP_FRAME.mask("C")
ROAD_CONTEXT = MAP_FRAME.mask("F", "S", "V")
INTERMEDIATE_CONTEXT = MAP_FRAME.mask("F", "N", "S", "V")

#: Points within this distance of an edge count as on the boundary (inside).
_BOUNDARY_TOL = 1e-9

_MIN_AREA = 1e-12


class MapValidationError(ValueError):
    """Raised when map data violates the polygon or disjointness rules."""


def _points_in_polygon(xs: np.ndarray, ys: np.ndarray,
                       verts: np.ndarray) -> np.ndarray:
    """Even-odd containment test, boundary points counted as inside."""
    inside = np.zeros(xs.shape, dtype=bool)
    boundary = np.zeros(xs.shape, dtype=bool)
    n = len(verts)
    for k in range(n):
        x1, y1 = verts[k - 1]
        x2, y2 = verts[k]
        ex, ey = x2 - x1, y2 - y1
        cross = ex * (ys - y1) - ey * (xs - x1)
        edge_len = np.hypot(ex, ey)
        on_line = np.abs(cross) <= _BOUNDARY_TOL * edge_len
        lo_x, hi_x = min(x1, x2) - _BOUNDARY_TOL, max(x1, x2) + _BOUNDARY_TOL
        lo_y, hi_y = min(y1, y2) - _BOUNDARY_TOL, max(y1, y2) + _BOUNDARY_TOL
        boundary |= on_line & (xs >= lo_x) & (xs <= hi_x) & (ys >= lo_y) & (ys <= hi_y)
        crossing = (y1 > ys) != (y2 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = x1 + (ys - y1) * ex / ey
        inside ^= crossing & (xs < x_int)
    return inside | boundary


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py):
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """True when the closed segments p1-p2 and p3-p4 share any point."""
    d1 = _orient(*p3, *p4, *p1)
    d2 = _orient(*p3, *p4, *p2)
    d3 = _orient(*p1, *p2, *p3)
    d4 = _orient(*p1, *p2, *p4)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
            ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(*p3, *p4, *p1):
        return True
    if d2 == 0 and _on_segment(*p3, *p4, *p2):
        return True
    if d3 == 0 and _on_segment(*p1, *p2, *p3):
        return True
    if d4 == 0 and _on_segment(*p1, *p2, *p4):
        return True
    return False


@dataclass(frozen=True)
class Polygon:
    """A simple polygon, implicitly closed, with nonzero area."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise MapValidationError("polygon needs at least 3 vertices")
        n = len(verts)
        for k in range(n):
            if verts[k] == verts[(k + 1) % n]:
                raise MapValidationError("polygon has a zero-length edge")
        if abs(self.area) < _MIN_AREA:
            raise MapValidationError("polygon has zero area")
        # Simplicity: no two non-adjacent edges may share a point.
        edges = [(verts[k], verts[(k + 1) % n]) for k in range(n)]
        for a in range(n):
            for b in range(a + 1, n):
                if b == a + 1 or (a == 0 and b == n - 1):
                    continue
                if _segments_intersect(*edges[a], *edges[b]):
                    raise MapValidationError("polygon is self-intersecting")

    @property
    def area(self) -> float:
        """Signed shoelace area."""
        total = 0.0
        n = len(self.vertices)
        for k in range(n):
            x1, y1 = self.vertices[k]
            x2, y2 = self.vertices[(k + 1) % n]
            total += x1 * y2 - x2 * y1
        return 0.5 * total

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def contains_points(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return _points_in_polygon(np.asarray(xs, dtype=np.float64),
                                  np.asarray(ys, dtype=np.float64),
                                  np.asarray(self.vertices, dtype=np.float64))


def point_in_polygon(point: tuple[float, float], polygon: Polygon) -> bool:
    """Even-odd containment with boundary points counted as inside."""
    xs = np.array([point[0]], dtype=np.float64)
    ys = np.array([point[1]], dtype=np.float64)
    return bool(polygon.contains_points(xs, ys)[0])


def rasterize(polygons: Sequence[Polygon], spec: GridSpec) -> np.ndarray:
    """(width, height) mask of cells whose center lies in any polygon."""
    out = np.zeros((spec.width, spec.height), dtype=bool)
    if not polygons:
        return out
    xs, ys = spec.cell_centers()
    for poly in polygons:
        lo_x, lo_y, hi_x, hi_y = poly.bounds
        i0 = max(0, int(np.floor((lo_x - spec.origin_x) / spec.resolution)))
        j0 = max(0, int(np.floor((lo_y - spec.origin_y) / spec.resolution)))
        i1 = min(spec.width, int(np.ceil((hi_x - spec.origin_x) / spec.resolution)) + 1)
        j1 = min(spec.height, int(np.ceil((hi_y - spec.origin_y) / spec.resolution)) + 1)
        if i0 >= i1 or j0 >= j1:
            continue
        sub = poly.contains_points(xs[i0:i1, j0:j1], ys[i0:i1, j0:j1])
        out[i0:i1, j0:j1] |= sub
    return out


@dataclass(frozen=True)
class VectorMap:
    """Building and road footprints in world coordinates."""

    buildings: tuple[Polygon, ...] = ()
    roads: tuple[Polygon, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        object.__setattr__(self, "roads", tuple(self.roads))


def check_building_road_overlap(vmap: VectorMap, resolution: float = 0.5) -> None:
    """Verify building and road interiors are disjoint by sampling a grid
    of cell centers over their joint bounding box."""
    if not vmap.buildings or not vmap.roads:
        return
    bounds = [p.bounds for p in vmap.buildings + vmap.roads]
    lo_x = min(b[0] for b in bounds)
    lo_y = min(b[1] for b in bounds)
    hi_x = max(b[2] for b in bounds)
    hi_y = max(b[3] for b in bounds)
    # Keep the sample count bounded for very large maps.
    span = max(hi_x - lo_x, hi_y - lo_y)
    res = max(resolution, span / 2048.0)
    spec = GridSpec(lo_x, lo_y,
                    max(1, int(np.ceil((hi_x - lo_x) / res))),
                    max(1, int(np.ceil((hi_y - lo_y) / res))),
                    res)
    in_building = rasterize(vmap.buildings, spec)
    in_road = rasterize(vmap.roads, spec)
    if np.any(in_building & in_road):
        raise MapValidationError("building and road polygons overlap")


def load_map(source: Union[str, Path, dict]) -> VectorMap:
    """Load and validate a vector map from a JSON file or parsed dict.

    Schema: {"buildings": [[[x, y], ...], ...], "roads": [...]} with
    coordinates in meters.
    """
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MapValidationError(f"map file is not valid JSON: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise MapValidationError("map JSON must be an object")

    def _polys(key: str) -> tuple[Polygon, ...]:
        out = []
        for k, ring in enumerate(data.get(key, [])):
            try:
                out.append(Polygon(tuple((x, y) for x, y in ring)))
            except (MapValidationError, TypeError, ValueError) as exc:
                raise MapValidationError(f"{key}[{k}]: {exc}") from exc
        return tuple(out)

    vmap = VectorMap(buildings=_polys("buildings"), roads=_polys("roads"))
    check_building_road_overlap(vmap)
    return vmap


@dataclass(frozen=True)
class PriorConfidence:
    """Confidence placed in each map context, in [0, 1]."""

    beta_building: float = 0.9
    beta_road: float = 0.9
    beta_other: float = 0.7

    def __post_init__(self):
        for name in ("beta_building", "beta_road", "beta_other"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def build_prior_grid(vmap: VectorMap, spec: GridSpec,
                     beta: PriorConfidence = PriorConfidence()) -> EvidentialGrid:
    """Project map polygons onto a grid of contextual mass functions.

    Each cell is classified by its center with precedence building > road >
    intermediate, and holds mass beta on its context set plus 1 - beta on
    the full frame.
    """
    in_building = rasterize(vmap.buildings, spec)
    in_road = rasterize(vmap.roads, spec) & ~in_building
    other = ~(in_building | in_road)
    masses = np.zeros((MAP_FRAME.size, spec.width, spec.height))
    masses[BUILDING_CONTEXT] = np.where(in_building, beta.beta_building, 0.0)
    masses[ROAD_CONTEXT] = np.where(in_road, beta.beta_road, 0.0)
    masses[INTERMEDIATE_CONTEXT] = np.where(other, beta.beta_other, 0.0)
    masses[MAP_FRAME.omega] = np.where(
        in_building, 1.0 - beta.beta_building,
        np.where(in_road, 1.0 - beta.beta_road, 1.0 - beta.beta_other))
    grid = EvidentialGrid(spec, MAP_FRAME, masses=masses)
    grid._active_rows = sorted({BUILDING_CONTEXT, ROAD_CONTEXT,
                                INTERMEDIATE_CONTEXT, MAP_FRAME.omega})
    return grid
