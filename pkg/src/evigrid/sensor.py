"""Inverse sensor model: lidar scan plus ego pose to a free/occupied grid.

Each beam deposits free-space evidence on every cell it crosses before its
hit (or out to max range on a miss) and occupied evidence on the hit cell.
Evidence from multiple beams touching one cell is fused with Dempster's
rule; because the per-beam masses are simple support functions, the fused
cell mass depends only on the number of free and occupied observations,
which lets the whole grid be built from two observation-count arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .belief import SCAN_FRAME, TotalConflictError
from .grid import EvidentialGrid, GridSpec


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))


MISS = math.nan


class Scan:
    """One lidar sweep: bearings relative to the heading, ranges with NaN
    marking beams that hit nothing within max_range."""

    __slots__ = ("bearings", "ranges", "max_range")

    def __init__(self, bearings: Sequence[float], ranges: Sequence[Optional[float]],
                 max_range: float):
        bearings = np.asarray(bearings, dtype=np.float64)
        ranges = np.array([MISS if r is None else r for r in ranges],
                          dtype=np.float64)
        if bearings.shape != ranges.shape or bearings.ndim != 1:
            raise ValueError("bearings and ranges must be equal-length 1D sequences")
        if len(bearings) > 1 and not np.all(np.diff(bearings) > 0):
            raise ValueError("bearings must be strictly increasing")
        if max_range <= 0:
            raise ValueError("max_range must be positive")
        hits = ~np.isnan(ranges)
        if np.any(ranges[hits] <= 0) or np.any(ranges[hits] > max_range):
            raise ValueError("hit ranges must lie in (0, max_range]")
        self.bearings = bearings
        self.ranges = ranges
        self.max_range = float(max_range)

    @property
    def n_beams(self) -> int:
        return len(self.bearings)

    @property
    def hit_mask(self) -> np.ndarray:
        return ~np.isnan(self.ranges)


@dataclass(frozen=True)
class SensorModelParams:
    """Simple support masses deposited per observation, each below 1 so
    that mixed free/occupied evidence never reaches total conflict."""

    mu_occ: float = 0.7
    mu_free: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.mu_occ <= 1.0 or not 0.0 <= self.mu_free <= 1.0:
            raise ValueError("sensor model masses must lie in [0, 1]")


def traverse_cells(spec: GridSpec, start: tuple[float, float],
                   end: tuple[float, float]) -> list[tuple[int, int]]:
    """All in-bounds cells the segment passes through, in order.

    Incremental line traversal, amortized constant work per cell.  When the
    segment crosses a lattice corner exactly, the step is diagonal: only
    cells the segment actually enters are reported.
    """
    res = spec.resolution
    fx0 = (start[0] - spec.origin_x) / res
    fy0 = (start[1] - spec.origin_y) / res
    fx1 = (end[0] - spec.origin_x) / res
    fy1 = (end[1] - spec.origin_y) / res
    i, j = math.floor(fx0), math.floor(fy0)
    i1, j1 = math.floor(fx1), math.floor(fy1)
    dx, dy = fx1 - fx0, fy1 - fy0

    step_i = 1 if dx > 0 else -1
    step_j = 1 if dy > 0 else -1
    # Parameter t in [0, 1] at which the ray crosses the next lattice line.
    if dx != 0.0:
        t_max_x = ((i + (step_i > 0)) - fx0) / dx
        t_delta_x = abs(1.0 / dx)
    else:
        t_max_x, t_delta_x = math.inf, math.inf
    if dy != 0.0:
        t_max_y = ((j + (step_j > 0)) - fy0) / dy
        t_delta_y = abs(1.0 / dy)
    else:
        t_max_y, t_delta_y = math.inf, math.inf

    cells = []
    remaining = abs(i1 - i) + abs(j1 - j)
    if 0 <= i < spec.width and 0 <= j < spec.height:
        cells.append((i, j))
    while remaining > 0:
        if t_max_x < t_max_y:
            i += step_i
            t_max_x += t_delta_x
            remaining -= 1
        elif t_max_y < t_max_x:
            j += step_j
            t_max_y += t_delta_y
            remaining -= 1
        else:
            # Exact corner crossing: enter the diagonal neighbour directly.
            i += step_i
            j += step_j
            t_max_x += t_delta_x
            t_max_y += t_delta_y
            remaining -= 2
        if 0 <= i < spec.width and 0 <= j < spec.height:
            cells.append((i, j))
    return cells


def _crossing_params(f0: float, f1: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-beam lattice-line crossings between cell coordinates f0 and f1
    (one axis).  Returns (beam index, crossed line index, normalized
    parameter t) flattened over all beams."""
    c0 = math.floor(f0)
    c1 = np.floor(f1).astype(np.int64)
    lo = np.minimum(c0, c1)
    counts = np.abs(c1 - c0)
    beams = np.repeat(np.arange(len(f1)), counts)
    starts = np.cumsum(counts) - counts
    offsets = np.arange(counts.sum()) - np.repeat(starts, counts)
    lines = lo[beams] + 1 + offsets
    t = (lines - f0) / (f1[beams] - f0)
    return beams, lines, t


def observation_counts(scan: Scan, pose: Pose,
                       spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell counts of free-space and occupied observations for a scan.

    A cell counts as free once per beam that crosses it before the beam's
    endpoint, and as occupied once per beam whose hit lands in it.  The hit
    cell itself only receives the occupied observation.

    Traversed cells are recovered from the lattice crossings directly: each
    crossing enters exactly one new cell (a ray through an exact lattice
    corner enters the diagonal neighbour), so together with the start cell
    the crossing cells enumerate the beam's traversal.
    """
    if spec.world_to_cell(pose.x, pose.y) is None:
        raise ValueError("sensor pose lies outside the grid")
    res = spec.resolution
    w, h = spec.width, spec.height
    ncells = w * h

    angles = pose.heading + scan.bearings
    reach = np.where(scan.hit_mask, scan.ranges, scan.max_range)
    fx0 = (pose.x - spec.origin_x) / res
    fy0 = (pose.y - spec.origin_y) / res
    dx = reach * np.cos(angles) / res
    dy = reach * np.sin(angles) / res
    fx1 = fx0 + dx
    fy1 = fy0 + dy
    n_beams = scan.n_beams

    bx, lines_x, tx = _crossing_params(fx0, fx1)
    by, lines_y, ty = _crossing_params(fy0, fy1)
    col_x = lines_x - (dx[bx] < 0)
    row_x = np.floor(fy0 + tx * dy[bx]).astype(np.int64)
    row_y = lines_y - (dy[by] < 0)
    col_y = np.floor(fx0 + ty * dx[by]).astype(np.int64)

    start = np.arange(n_beams)
    cols = np.concatenate([np.full(n_beams, math.floor(fx0)), col_x, col_y])
    rows = np.concatenate([np.full(n_beams, math.floor(fy0)), row_x, row_y])
    beams = np.concatenate([start, bx, by])
    valid = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    # Unique (beam, cell) pairs: corner crossings would otherwise count twice.
    keys = np.unique(beams[valid] * ncells + cols[valid] * h + rows[valid])

    # Hit cells: drop each from its own beam's free set.
    hit_beams = np.flatnonzero(scan.hit_mask)
    hi = np.floor(fx1[hit_beams]).astype(np.int64)
    hj = np.floor(fy1[hit_beams]).astype(np.int64)
    hit_valid = (hi >= 0) & (hi < w) & (hj >= 0) & (hj < h)
    hit_cells = hi[hit_valid] * h + hj[hit_valid]
    hit_keys = hit_beams[hit_valid] * ncells + hit_cells
    pos = np.searchsorted(keys, hit_keys)
    pos = pos[(pos < len(keys)) & (keys[np.minimum(pos, len(keys) - 1)] == hit_keys)]
    free = np.ones(len(keys), dtype=bool)
    free[pos] = False

    n_free = np.bincount(keys[free] % ncells, minlength=ncells)
    n_occ = np.bincount(hit_cells, minlength=ncells)
    return n_free.reshape(w, h), n_occ.reshape(w, h)


def evidence_from_counts(n_free: np.ndarray, n_occ: np.ndarray, spec: GridSpec,
                         params: SensorModelParams) -> EvidentialGrid:
    """Closed-form Dempster fusion of per-cell simple support observations.

    Works with the complement products p = (1-mu_free)^k and
    q = (1-mu_occ)^j so the normalizer p + q - p*q never suffers the
    catastrophic cancellation of 1 - (1-p)(1-q); it vanishes only for
    genuinely categorical contradictions (mu = 1 on both sides).
    """
    p = (1.0 - params.mu_free) ** n_free
    q = (1.0 - params.mu_occ) ** n_occ
    denom = p + q - p * q
    if np.any(denom <= 0.0):
        raise TotalConflictError("categorical free and occupied evidence on one cell")
    masses = np.zeros((SCAN_FRAME.size, spec.width, spec.height))
    masses[SCAN_FRAME.mask("F")] = (1.0 - p) * q / denom
    masses[SCAN_FRAME.mask("O")] = p * (1.0 - q) / denom
    masses[SCAN_FRAME.omega] = p * q / denom
    grid = EvidentialGrid(spec, SCAN_FRAME, masses=masses)
    grid._active_rows = [SCAN_FRAME.mask("F"), SCAN_FRAME.mask("O"), SCAN_FRAME.omega]
    return grid


def build_scan_grid(scan: Scan, pose: Pose, spec: GridSpec,
                    params: SensorModelParams) -> EvidentialGrid:
    """Evidential grid over the free/occupied frame for one scan.

    Equivalent to chaining Dempster combinations of the per-observation
    simple support masses in beam order; computed in closed form from the
    observation counts (the rule is commutative and associative).
    """
    n_free, n_occ = observation_counts(scan, pose, spec)
    return evidence_from_counts(n_free, n_occ, spec, params)
