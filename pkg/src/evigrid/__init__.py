"""Map-aided evidential occupancy-grid fusion.

Lidar scan grids are fused with prior geographic-map grids under
Dempster-Shafer theory; conflict drives moving-object detection, a
persistence counter separates stopped objects from movers, and contextual
discounting forgets stale evidence at context-specific rates.
"""

from .belief import (
    MAP_FRAME,
    MOBILITY_PARTITION,
    SCAN_FRAME,
    SCAN_TO_MAP,
    DiscountRates,
    Frame,
    FrameMismatchError,
    MassFunction,
    Partition,
    Refining,
    SpecializationMatrix,
    TotalConflictError,
    build_mobility_specialization,
    conjunctive_combine,
    contextual_discount,
    dempster_combine,
    disjunctive_combine,
    pignistic,
    refine,
    specialize,
    vacuous,
)
from .cli import EvalReport, RunConfig, run, simulate
from .fusion import (
    ConflictSplit,
    CounterParams,
    DiscountParams,
    FusionParams,
    fuse_cell,
    fuse_step,
    inject_prior,
    split_conflict,
    update_counter,
    yager_modified_combine,
)
from .grid import EvidentialGrid, GridSpec
from .mapio import (
    MapValidationError,
    Polygon,
    PriorConfidence,
    VectorMap,
    build_prior_grid,
    load_map,
    point_in_polygon,
)
from .sensor import (
    MISS,
    Pose,
    Scan,
    SensorModelParams,
    build_scan_grid,
    traverse_cells,
)
from .sim import DynamicObject, LidarParams, Scenario, generate_scan, \
    ground_truth_grid, poses_at

__version__ = "0.1.0"
