"""2D evidential lattice: geometry, indexing, per-cell masses and counters.

Cell (i, j) covers the world box [origin_x + i*res, origin_x + (i+1)*res) x
[origin_y + j*res, origin_y + (j+1)*res).  Mass tables are stored
subset-major, shape (2^n, width, height), so whole-grid belief operations
run as row-wise numpy arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Optional

import numpy as np

from .belief import Frame, FrameMismatchError, MassFunction


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a world-aligned grid; (0, 0) is the lower-left cell."""

    origin_x: float
    origin_y: float
    width: int
    height: int
    resolution: float = 0.5

    def __post_init__(self):
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one cell per axis")

    @property
    def cells(self) -> int:
        return self.width * self.height

    def world_to_cell(self, x: float, y: float) -> Optional[tuple[int, int]]:
        """Cell index containing a world point, or None when out of bounds."""
        i = math.floor((x - self.origin_x) / self.resolution)
        j = math.floor((y - self.origin_y) / self.resolution)
        if 0 <= i < self.width and 0 <= j < self.height:
            return i, j
        return None

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        if not (0 <= i < self.width and 0 <= j < self.height):
            raise IndexError(f"cell ({i}, {j}) outside {self.width}x{self.height} grid")
        return (self.origin_x + (i + 0.5) * self.resolution,
                self.origin_y + (j + 0.5) * self.resolution)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(width, height) arrays of all cell-center coordinates."""
        xs = self.origin_x + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin_y + (np.arange(self.height) + 0.5) * self.resolution
        return np.broadcast_to(xs[:, None], (self.width, self.height)).copy(), \
            np.broadcast_to(ys[None, :], (self.width, self.height)).copy()


class EvidentialGrid:
    """Per-cell mass functions over one frame plus a persistence counter.

    ``_active_rows``, when set, names a superset of the subset indices that
    may carry mass anywhere in the grid; producers that know it (the fusion
    step) cache it so consumers can skip all-zero rows.
    """

    __slots__ = ("spec", "frame", "masses", "zeta", "_active_rows")

    def __init__(self, spec: GridSpec, frame: Frame,
                 masses: Optional[np.ndarray] = None,
                 zeta: Optional[np.ndarray] = None):
        shape = (frame.size, spec.width, spec.height)
        if masses is None:
            masses = np.zeros(shape)
            masses[frame.omega] = 1.0
        else:
            masses = np.asarray(masses, dtype=np.float64)
            if masses.shape != shape:
                raise ValueError(f"masses must have shape {shape}")
        if zeta is None:
            zeta = np.zeros((spec.width, spec.height))
        else:
            zeta = np.asarray(zeta, dtype=np.float64)
            if zeta.shape != (spec.width, spec.height):
                raise ValueError("zeta must have shape (width, height)")
        self.spec = spec
        self.frame = frame
        self.masses = masses
        self.zeta = zeta
        self._active_rows = None

    @classmethod
    def vacuous(cls, spec: GridSpec, frame: Frame) -> "EvidentialGrid":
        grid = cls(spec, frame)
        grid._active_rows = [frame.omega]
        return grid

    def active_rows(self) -> list[int]:
        """Subset indices that may carry mass somewhere in the grid."""
        if self._active_rows is None:
            flat = self.masses.reshape(self.frame.size, -1)
            self._active_rows = [int(r) for r in np.flatnonzero(flat.any(axis=1))]
        return self._active_rows

    def cell(self, i: int, j: int) -> MassFunction:
        return MassFunction(self.frame, self.masses[:, i, j])

    def set_cell(self, i: int, j: int, mass: MassFunction) -> None:
        if mass.frame != self.frame:
            raise FrameMismatchError("cell mass frame does not match grid frame")
        self.masses[:, i, j] = mass.table
        self._active_rows = None

    def fill(self, mass: MassFunction) -> None:
        """Overwrite every cell with a copy of one mass; counters unchanged."""
        if mass.frame != self.frame:
            raise FrameMismatchError("fill mass frame does not match grid frame")
        self.masses[:] = mass.table[:, None, None]
        self._active_rows = None

    def copy(self) -> "EvidentialGrid":
        clone = EvidentialGrid(self.spec, self.frame,
                               self.masses.copy(), self.zeta.copy())
        clone._active_rows = self._active_rows
        return clone

    def to_csv(self, out: IO[str]) -> None:
        """Dump one row per cell: i,j,zeta,m_hex0..m_hex{2^n-1}.

        Weights use 9 significant digits; columns follow ascending subset
        bitmask with frame element 0 as bit 0.
        """
        header = "i,j,zeta," + ",".join(f"m_hex{k}" for k in range(self.frame.size))
        out.write(header + "\n")
        for i in range(self.spec.width):
            for j in range(self.spec.height):
                weights = ",".join(f"{w:.9g}" for w in self.masses[:, i, j])
                out.write(f"{i},{j},{self.zeta[i, j]:.9g},{weights}\n")
