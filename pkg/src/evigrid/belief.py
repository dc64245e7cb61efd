"""Frame-of-discernment and mass-function algebra.

Evidence is represented as a dense table of 2^n weights indexed by subset
bitmask (bit i set means element i of the frame is in the subset).  All
combination rules enumerate focal-set pairs; with n capped at 16 the dense
representation is both the simplest and the fastest option for the small
frames used here.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

MAX_FRAME_SIZE = 16

# Mass tables must sum to 1 within MASS_TOL; drift above RENORM_TOL is
# silently rescaled so that long combination chains stay clean.
MASS_TOL = 1e-9
RENORM_TOL = 1e-12

# Dempster's rule is undefined at total conflict.
CONFLICT_TOL = 1e-12

SubsetLike = Union[int, str, Iterable[str]]


class FrameMismatchError(ValueError):
    """Raised when two mass functions do not share a frame."""


class TotalConflictError(ArithmeticError):
    """Raised when normalized combination meets irreconcilable evidence."""


@dataclass(frozen=True)
class Frame:
    """An ordered frame of discernment; element i corresponds to bit i."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not 1 <= len(labels) <= MAX_FRAME_SIZE:
            raise ValueError(f"frame size must be in [1, {MAX_FRAME_SIZE}]")
        if len(set(labels)) != len(labels):
            raise ValueError("frame labels must be unique")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        """Number of subsets, 2^n."""
        return 1 << self.n

    @property
    def omega(self) -> int:
        """Bitmask of the full frame."""
        return self.size - 1

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def mask(self, *labels: str) -> int:
        """Bitmask of the subset containing exactly the given elements."""
        bits = 0
        for lab in labels:
            bits |= 1 << self.labels.index(lab)
        return bits

    def subset_mask(self, subset: SubsetLike) -> int:
        """Coerce an int mask, a label string, or an iterable of labels."""
        if isinstance(subset, (int, np.integer)):
            if not 0 <= subset < self.size:
                raise ValueError(f"mask {subset} out of range for frame {self.labels}")
            return int(subset)
        return self.mask(*subset)

    def subset_labels(self, mask: int) -> tuple[str, ...]:
        return tuple(lab for i, lab in enumerate(self.labels) if mask >> i & 1)


#: Binary free/occupied frame used by per-scan evidence.
SCAN_FRAME = Frame(("F", "O"))

#: Fused-perception frame: free, mapped infrastructure, non-mapped
#: infrastructure, stopped object, moving object.
MAP_FRAME = Frame(("F", "C", "N", "S", "V"))

MAP_FREE = MAP_FRAME.mask("F")
MAP_MOVING = MAP_FRAME.mask("V")
MAP_STOPPED = MAP_FRAME.mask("S")
#: Everything that blocks a beam: the image of "occupied" on MAP_FRAME.
MAP_OCCUPIED = MAP_FRAME.mask("C", "N", "S", "V")


@functools.lru_cache(maxsize=None)
def _pair_masks(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Flattened intersection/union masks for all 2^n x 2^n subset pairs."""
    masks = np.arange(1 << n)
    inter = np.bitwise_and.outer(masks, masks).ravel()
    union = np.bitwise_or.outer(masks, masks).ravel()
    return inter, union


@functools.lru_cache(maxsize=None)
def _pignistic_matrix(n: int) -> np.ndarray:
    """(n, 2^n) matrix with entry [i, A] = 1/|A| if element i in A else 0."""
    size = 1 << n
    mat = np.zeros((n, size))
    for mask in range(1, size):
        share = 1.0 / bin(mask).count("1")
        for i in range(n):
            if mask >> i & 1:
                mat[i, mask] = share
    return mat


class MassFunction:
    """A basic belief assignment over a frame, stored as a dense table.

    ``allows_empty`` is True only for unnormalized intermediates
    (conjunctive results, elementary discounting factors); normalized
    mass functions carry zero weight on the empty set.
    """

    __slots__ = ("frame", "table", "allows_empty")

    def __init__(self, frame: Frame, table, allows_empty: bool = False,
                 validate: bool = True):
        table = np.array(table, dtype=np.float64)
        if table.shape != (frame.size,):
            raise ValueError(f"table must have shape ({frame.size},)")
        if validate:
            if table.min() < 0.0:
                raise ValueError("mass weights must be nonnegative")
            total = float(table.sum())
            if abs(total - 1.0) > MASS_TOL:
                raise ValueError(f"mass must sum to 1, got {total!r}")
            if abs(total - 1.0) > RENORM_TOL:
                table = table / total
            if not allows_empty and table[0] != 0.0:
                raise ValueError("normalized mass function has weight on the empty set")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "allows_empty", allows_empty)

    def __setattr__(self, name, value):
        raise AttributeError("MassFunction is immutable")

    @classmethod
    def from_masses(cls, frame: Frame, masses: Mapping[SubsetLike, float],
                    allows_empty: bool = False) -> "MassFunction":
        """Build from a mapping of subsets (masks, label strings) to weights."""
        table = np.zeros(frame.size)
        for subset, weight in masses.items():
            table[frame.subset_mask(subset)] += weight
        return cls(frame, table, allows_empty=allows_empty)

    def mass(self, subset: SubsetLike) -> float:
        return float(self.table[self.frame.subset_mask(subset)])

    def focal_sets(self) -> list[tuple[int, float]]:
        return [(int(mask), float(w)) for mask, w in enumerate(self.table) if w > 0.0]

    def __repr__(self):
        parts = ", ".join(
            f"{{{','.join(self.frame.subset_labels(mask)) or chr(0x2205)}}}: {w:.6g}"
            for mask, w in self.focal_sets()
        )
        return f"MassFunction({parts})"


def _require_same_frame(m1: MassFunction, m2: MassFunction) -> None:
    if m1.frame != m2.frame:
        raise FrameMismatchError(
            f"frames differ: {m1.frame.labels} vs {m2.frame.labels}")


def vacuous(frame: Frame) -> MassFunction:
    """Total ignorance: all mass on the full frame."""
    table = np.zeros(frame.size)
    table[frame.omega] = 1.0
    return MassFunction(frame, table)


def conjunctive_combine(m1: MassFunction, m2: MassFunction) -> MassFunction:
    """Unnormalized conjunctive rule; conflict accumulates on the empty set."""
    _require_same_frame(m1, m2)
    inter, _ = _pair_masks(m1.frame.n)
    out = np.zeros(m1.frame.size)
    np.add.at(out, inter, np.outer(m1.table, m2.table).ravel())
    return MassFunction(m1.frame, out, allows_empty=True)


def disjunctive_combine(m1: MassFunction, m2: MassFunction) -> MassFunction:
    """Disjunctive rule: products accumulate on unions of focal sets."""
    _require_same_frame(m1, m2)
    _, union = _pair_masks(m1.frame.n)
    out = np.zeros(m1.frame.size)
    np.add.at(out, union, np.outer(m1.table, m2.table).ravel())
    return MassFunction(m1.frame, out,
                        allows_empty=m1.allows_empty and m2.allows_empty)


def dempster_combine(m1: MassFunction, m2: MassFunction) -> MassFunction:
    """Conjunctive rule renormalized over nonempty subsets."""
    _require_same_frame(m1, m2)
    inter, _ = _pair_masks(m1.frame.n)
    out = np.zeros(m1.frame.size)
    np.add.at(out, inter, np.outer(m1.table, m2.table).ravel())
    conflict = out[0]
    if conflict >= 1.0 - CONFLICT_TOL:
        raise TotalConflictError(f"total conflict k={conflict!r}")
    out /= 1.0 - conflict
    out[0] = 0.0
    return MassFunction(m1.frame, out)


@dataclass(frozen=True)
class Refining:
    """A map from a coarse frame onto a finer one.

    Each coarse element maps to a nonempty subset of the target frame;
    images of distinct elements are disjoint.  Subsets map to the union
    of their elements' images.
    """

    source: Frame
    target: Frame
    element_images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(m) for m in self.element_images)
        object.__setattr__(self, "element_images", images)
        if len(images) != self.source.n:
            raise ValueError("one image per source element required")
        seen = 0
        for img in images:
            if img == 0:
                raise ValueError("element images must be nonempty")
            if not 0 < img <= self.target.omega:
                raise ValueError("element image out of range")
            if seen & img:
                raise ValueError("element images must be pairwise disjoint")
            seen |= img

    @functools.cached_property
    def subset_images(self) -> np.ndarray:
        """Target mask for every source mask (union of element images)."""
        out = np.zeros(self.source.size, dtype=np.int64)
        for mask in range(self.source.size):
            img = 0
            for i, elem_img in enumerate(self.element_images):
                if mask >> i & 1:
                    img |= elem_img
            out[mask] = img
        return out


#: Canonical refining of scan evidence onto the fused frame:
#: free stays free, occupied becomes "any obstacle class".
SCAN_TO_MAP = Refining(SCAN_FRAME, MAP_FRAME,
                       (MAP_FREE, MAP_OCCUPIED))


def refine(m: MassFunction, r: Refining) -> MassFunction:
    """Express a coarse mass function on the refining's target frame."""
    if m.frame != r.source:
        raise FrameMismatchError("mass function frame does not match refining source")
    out = np.zeros(r.target.size)
    np.add.at(out, r.subset_images, m.table)
    return MassFunction(r.target, out, allows_empty=m.allows_empty)


@dataclass(frozen=True)
class Partition:
    """A partition of a frame into disjoint context blocks."""

    frame: Frame
    blocks: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        seen = 0
        for block in blocks:
            if block == 0:
                raise ValueError("partition blocks must be nonempty")
            if seen & block:
                raise ValueError("partition blocks must be pairwise disjoint")
            seen |= block
        if seen != self.frame.omega:
            raise ValueError("partition blocks must cover the frame")


#: Contexts that age at different speeds: infrastructure, movable
#: objects, free space.
MOBILITY_PARTITION = Partition(MAP_FRAME, (
    MAP_FRAME.mask("C", "N"),
    MAP_FRAME.mask("S", "V"),
    MAP_FRAME.mask("F"),
))


@dataclass(frozen=True)
class DiscountRates:
    """One forgetting rate per partition block, each in [0, 1]."""

    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        for r in rates:
            if not 0.0 <= r <= 1.0:
                raise ValueError("discount rates must lie in [0, 1]")


def _elementary_discount(frame: Frame, block: int, rate: float) -> MassFunction:
    table = np.zeros(frame.size)
    table[block] = rate
    table[0] = 1.0 - rate
    return MassFunction(frame, table, allows_empty=True)


def contextual_discount(m: MassFunction, partition: Partition,
                        rates: DiscountRates) -> MassFunction:
    """Weaken evidence per context by disjunctively mixing in elementary
    masses that push each block's share toward its supersets.

    A rate of 0 leaves the block untouched (the elementary mass is all on
    the empty set, the identity of the disjunctive rule); a rate of 1
    unconditionally widens every focal set by that block.
    """
    if m.frame != partition.frame:
        raise FrameMismatchError("mass function frame does not match partition")
    if isinstance(rates, DiscountRates):
        rate_values = rates.rates
    else:
        rate_values = tuple(rates)
    if len(rate_values) != len(partition.blocks):
        raise ValueError("one rate per partition block required")
    out = m
    for block, rate in zip(partition.blocks, rate_values):
        out = disjunctive_combine(out, _elementary_discount(m.frame, block, rate))
    return MassFunction(m.frame, out.table, allows_empty=m.allows_empty)


@dataclass(frozen=True)
class SpecializationMatrix:
    """Column-stochastic operator redistributing each subset's mass.

    Entry [A, B] is the fraction of m(B) transferred to A; every column
    sums to 1 so total mass is conserved.
    """

    frame: Frame
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", matrix)
        if matrix.shape != (self.frame.size, self.frame.size):
            raise ValueError("matrix shape must be (2^n, 2^n)")
        if matrix.min() < 0.0:
            raise ValueError("matrix entries must be nonnegative")
        col_sums = matrix.sum(axis=0)
        if np.abs(col_sums - 1.0).max() > MASS_TOL:
            raise ValueError("matrix columns must sum to 1")


def build_mobility_specialization(zeta: float, frame: Frame = MAP_FRAME,
                                  moving: str = "V",
                                  stopped: str = "S") -> SpecializationMatrix:
    """Operator that strips the moving hypothesis from persistent cells.

    Each focal set containing the moving element sheds a zeta fraction of
    its mass to the same set without that element.  The bare moving
    singleton has nowhere smaller to go, so its share is rerouted to the
    stopped singleton: an object seen occupying the same cell long enough
    is a stopped object, not a mover.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ValueError("zeta must lie in [0, 1]")
    moving_bit = frame.mask(moving)
    stopped_bit = frame.mask(stopped)
    size = frame.size
    mat = np.zeros((size, size))
    for mask in range(size):
        if mask & moving_bit:
            target = mask & ~moving_bit
            if target == 0:
                target = stopped_bit
            mat[target, mask] = zeta
            mat[mask, mask] = 1.0 - zeta
        else:
            mat[mask, mask] = 1.0
    return SpecializationMatrix(frame, mat)


def specialize(m: MassFunction, spec: SpecializationMatrix) -> MassFunction:
    """Apply a specialization as a matrix-vector product on the mass table."""
    if m.frame != spec.frame:
        raise FrameMismatchError("mass function frame does not match matrix")
    out = spec.matrix @ m.table
    return MassFunction(m.frame, out, allows_empty=m.allows_empty)


def pignistic(m: MassFunction) -> np.ndarray:
    """Decision-level probabilities: each focal set's mass split evenly
    among its elements.  Returns one probability per frame element."""
    if m.table[0] > 0.0:
        raise ValueError("pignistic transform requires zero mass on the empty set")
    return _pignistic_matrix(m.frame.n) @ m.table
