"""Temporal fusion pipeline: prior injection, conflict accounting, counter
update, mobility specialization, contextual discounting, and the modified
Yager combination.

Per-cell operations are exposed for testing and single-cell traces;
``fuse_step`` runs the identical arithmetic vectorized over all grid cells
(per-cell work is constant: one pass over the 2^n x 2^n focal-pair table).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .belief import (
    CONFLICT_TOL,
    MAP_FRAME,
    MAP_FREE,
    MAP_MOVING,
    MAP_STOPPED,
    MOBILITY_PARTITION,
    SCAN_FRAME,
    SCAN_TO_MAP,
    DiscountRates,
    FrameMismatchError,
    MassFunction,
    TotalConflictError,
    build_mobility_specialization,
    conjunctive_combine,
    contextual_discount,
    dempster_combine,
    refine,
    specialize,
)
from .grid import EvidentialGrid
from .mapio import PriorConfidence
from .sensor import SensorModelParams

#: Nonempty subsets of the fused frame that contain no free-space element;
#: their combined mass is the cell's "occupied" aggregate.
OCCUPIED_MASKS = np.array(
    [m for m in range(1, MAP_FRAME.size) if not m & MAP_FREE], dtype=np.int64)


@dataclass(frozen=True)
class ConflictSplit:
    """Oriented decomposition of conjunctive conflict between the stored
    cell state and the new observation."""

    appeared: float   # was free, observed occupied: something arrived
    vanished: float   # was occupied, observed free: something left
    residual: float   # disjoint pairs outside the free/occupied taxonomy

    @property
    def total(self) -> float:
        return self.appeared + self.vanished + self.residual


@dataclass(frozen=True)
class CounterParams:
    """Persistence-counter steps and thresholds, all in [0, 1]."""

    delta_inc: float = 0.2
    delta_dec: float = 0.4
    gamma_occupied: float = 0.6
    gamma_conflict: float = 0.1

    def __post_init__(self):
        for name in ("delta_inc", "delta_dec", "gamma_occupied", "gamma_conflict"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class DiscountParams:
    """Forgetting rates per mobility context."""

    alpha_static: float = 0.05
    alpha_dynamic: float = 0.4
    alpha_free: float = 0.3

    def rates(self) -> DiscountRates:
        """Rates aligned with the mobility partition's block order."""
        return DiscountRates((self.alpha_static, self.alpha_dynamic, self.alpha_free))


@dataclass(frozen=True)
class FusionParams:
    """Everything tunable in the pipeline."""

    counter: CounterParams = field(default_factory=CounterParams)
    discount: DiscountParams = field(default_factory=DiscountParams)
    prior: PriorConfidence = field(default_factory=PriorConfidence)
    sensor: SensorModelParams = field(default_factory=SensorModelParams)
    use_prior: bool = True


def occupied_mass(m: MassFunction) -> float:
    """Total mass on nonempty subsets containing no free-space element."""
    return float(m.table[OCCUPIED_MASKS].sum())


def inject_prior(m_sg: MassFunction, m_pg: MassFunction | None,
                 use_prior: bool = True) -> MassFunction:
    """Lift scan evidence onto the fused frame and sharpen it with the map
    prior via Dempster's rule.  With the prior disabled the refined scan
    mass is returned unchanged."""
    refined = refine(m_sg, SCAN_TO_MAP)
    if not use_prior or m_pg is None:
        return refined
    return dempster_combine(refined, m_pg)


def split_conflict(m_prev: MassFunction, m_obs: MassFunction) -> ConflictSplit:
    """Classify every disjoint focal pair between the stored mass and the
    observation.  Pairs (free singleton, occupied subset) mark an
    appearance, (occupied subset, free singleton) a disappearance;
    everything else (including empty-set operands) is residual."""
    _require_map_frame(m_prev)
    _require_map_frame(m_obs)
    appeared = vanished = residual = 0.0
    for a, wa in m_prev.focal_sets():
        for b, wb in m_obs.focal_sets():
            if a & b:
                continue
            product = wa * wb
            if a == MAP_FREE and b != 0:
                appeared += product
            elif b == MAP_FREE and a != 0:
                vanished += product
            else:
                residual += product
    return ConflictSplit(appeared, vanished, residual)


def update_counter(zeta: float, m_prev: MassFunction, split: ConflictSplit,
                   params: CounterParams) -> float:
    """Advance the persistence counter: step up while the cell stays
    occupied without conflict, step down on conflict, hold otherwise."""
    conflict = split.appeared + split.vanished
    if conflict > params.gamma_conflict:
        return max(0.0, zeta - params.delta_dec)
    if occupied_mass(m_prev) >= params.gamma_occupied:
        return min(1.0, zeta + params.delta_inc)
    return zeta


def yager_modified_combine(m1: MassFunction, m2: MassFunction) -> MassFunction:
    """Conjunctive combination with conflict rerouted instead of discarded.

    Appearance conflict (m1 free vs m2 occupied) becomes mass on the moving
    singleton; disappearance and residual conflict fall back on the full
    frame, Yager style.  Argument order matters: m1 is the accumulated
    state, m2 the new observation.  The result is total (no normalization).
    """
    _require_map_frame(m1)
    _require_map_frame(m2)
    conj = conjunctive_combine(m1, m2)
    split = split_conflict(m1, m2)
    out = conj.table.copy()
    out[MAP_MOVING] += split.appeared
    out[MAP_FRAME.omega] += split.vanished + split.residual
    out[0] = 0.0
    return MassFunction(MAP_FRAME, out)


def fuse_cell(m_prev: MassFunction, zeta: float, m_sg: MassFunction,
              m_pg: MassFunction | None,
              params: FusionParams) -> tuple[MassFunction, float]:
    """One cell through the full pipeline; the reference for fuse_step."""
    m_obs = inject_prior(m_sg, m_pg, params.use_prior)
    split = split_conflict(m_prev, m_obs)
    new_zeta = update_counter(zeta, m_prev, split, params.counter)
    m_spec = specialize(m_prev, build_mobility_specialization(new_zeta))
    m_disc = contextual_discount(m_spec, MOBILITY_PARTITION, params.discount.rates())
    return yager_modified_combine(m_disc, m_obs), new_zeta


def _require_map_frame(m: MassFunction) -> None:
    if m.frame != MAP_FRAME:
        raise FrameMismatchError("operation requires the fused map frame")


def _combine_conjunctive_grid(a: np.ndarray, rows_a: list[int],
                              b: np.ndarray, rows_b: list[int]
                              ) -> tuple[np.ndarray, list[int]]:
    """Conjunctive rule over (2^n, cells) tables, row-pair enumeration.

    Row lists name the subsets that may carry mass; they keep the work and
    the focal-pair accumulation order identical to the scalar rule while
    skipping all-zero rows.
    """
    out = np.zeros(a.shape)
    buf = np.empty(a.shape[1])
    for i in rows_a:
        ai = a[i]
        for j in rows_b:
            target = out[i & j]
            np.multiply(ai, b[j], out=buf)
            np.add(target, buf, out=target)
    return out, sorted({i & j for i in rows_a for j in rows_b})


def _observation_grid(sg: EvidentialGrid, pg: EvidentialGrid | None,
                      use_prior: bool) -> tuple[np.ndarray, list[int]]:
    """Vectorized inject_prior over all cells; returns (2^n, cells) plus the
    rows that may be nonzero."""
    cells = sg.spec.cells
    scan = sg.masses.reshape(SCAN_FRAME.size, cells)
    obs = np.zeros((MAP_FRAME.size, cells))
    rows = []
    for mask in range(SCAN_FRAME.size):
        image = int(SCAN_TO_MAP.subset_images[mask])
        obs[image] = scan[mask]
        rows.append(image)
    rows.sort()
    if not use_prior or pg is None:
        return obs, rows
    prior = pg.masses.reshape(MAP_FRAME.size, cells)
    obs, rows = _combine_conjunctive_grid(obs, rows, prior, pg.active_rows())
    conflict = obs[0].copy()
    if np.any(conflict >= 1.0 - CONFLICT_TOL):
        raise TotalConflictError("total conflict between scan evidence and prior")
    scale = 1.0 - conflict
    for row in rows:
        if row:
            obs[row] /= scale
    obs[0] = 0.0
    return obs, [r for r in rows if r]


def _specialize_grid(prev: np.ndarray, rows: list[int],
                     zeta: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Per-cell mobility specialization with cell-specific counters."""
    out = np.zeros(prev.shape)
    buf = np.empty(prev.shape[1])
    keep = 1.0 - zeta
    targets = set()
    for mask in rows:
        if mask & MAP_MOVING:
            target = mask & ~MAP_MOVING
            if target == 0:
                target = MAP_STOPPED
            np.multiply(keep, prev[mask], out=out[mask])
            np.multiply(zeta, prev[mask], out=buf)
            np.add(out[target], buf, out=out[target])
            targets.add(target)
        else:
            np.add(out[mask], prev[mask], out=out[mask])
    return out, sorted(set(rows) | targets)


def _discount_grid(masses: np.ndarray, rows: list[int],
                   rates: DiscountRates) -> tuple[np.ndarray, list[int]]:
    """Contextual discounting, one disjunctive mix per partition block."""
    cur = masses
    buf = np.empty(masses.shape[1])
    for block, rate in zip(MOBILITY_PARTITION.blocks, rates.rates):
        if rate == 0.0:
            continue
        nxt = np.zeros(cur.shape)
        for mask in rows:
            np.multiply(cur[mask], 1.0 - rate, out=nxt[mask])
        for mask in rows:
            target = nxt[mask | block]
            np.multiply(rate, cur[mask], out=buf)
            np.add(target, buf, out=target)
        cur = nxt
        rows = sorted({m for mask in rows for m in (mask, mask | block)})
    return cur, rows


def fuse_step(mg: EvidentialGrid, sg: EvidentialGrid,
              pg: EvidentialGrid | None,
              params: FusionParams) -> EvidentialGrid:
    """Fuse one scan grid into the accumulated map grid.

    Per cell: inject the prior into the scan evidence, split the conflict
    against the stored state, advance the counter, specialize and discount
    the stored state, then combine with the modified Yager rule.  Cells are
    independent; inputs are left untouched.
    """
    if mg.frame != MAP_FRAME or sg.frame != SCAN_FRAME:
        raise FrameMismatchError("fuse_step expects a map grid and a scan grid")
    if sg.spec != mg.spec or (pg is not None and pg.spec != mg.spec):
        raise ValueError("fuse_step requires grids over one shared GridSpec")
    if params.use_prior and pg is None:
        raise ValueError("use_prior requires a prior grid")
    if pg is not None and pg.frame != MAP_FRAME:
        raise FrameMismatchError("prior grid must use the fused map frame")

    w, h = mg.spec.width, mg.spec.height
    cells = mg.spec.cells
    prev = mg.masses.reshape(MAP_FRAME.size, cells)
    prev_rows = mg.active_rows()
    obs, obs_rows = _observation_grid(sg, pg, params.use_prior)

    occ_obs = obs[OCCUPIED_MASKS].sum(axis=0)
    occ_prev = prev[OCCUPIED_MASKS].sum(axis=0)
    appeared = prev[MAP_FREE] * occ_obs
    vanished = occ_prev * obs[MAP_FREE]
    conflict = appeared + vanished

    c = params.counter
    zeta = mg.zeta.reshape(cells)
    new_zeta = np.where(
        conflict > c.gamma_conflict,
        np.maximum(0.0, zeta - c.delta_dec),
        np.where(occ_prev >= c.gamma_occupied,
                 np.minimum(1.0, zeta + c.delta_inc),
                 zeta))

    state, state_rows = _specialize_grid(prev, prev_rows, new_zeta)
    state, state_rows = _discount_grid(state, state_rows, params.discount.rates())

    fused, fused_rows = _combine_conjunctive_grid(state, state_rows, obs, obs_rows)
    appeared_fused = state[MAP_FREE] * occ_obs
    fused[MAP_MOVING] += appeared_fused
    fused[MAP_FRAME.omega] += fused[0] - appeared_fused
    fused[0] = 0.0
    result = EvidentialGrid(mg.spec, MAP_FRAME,
                            masses=fused.reshape(MAP_FRAME.size, w, h),
                            zeta=new_zeta.reshape(w, h))
    result._active_rows = sorted(
        (set(fused_rows) | {MAP_MOVING, MAP_FRAME.omega}) - {0})
    return result
