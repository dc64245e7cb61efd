"""Run scenarios through the fusion pipeline: configuration, outputs,
evaluation, and the `evigrid` command-line entry point.

A run builds the prior grid once, then per frame: simulate a scan, build
the scan grid, fuse, optionally write images/CSV dumps, and score the
fused grid against the ground truth over all cells observed so far.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .belief import MAP_FRAME, _pignistic_matrix
from .fusion import (CounterParams, DiscountParams, FusionParams, fuse_step)
from .grid import EvidentialGrid, GridSpec
from .mapio import MapValidationError, PriorConfidence, build_prior_grid
from .sensor import SensorModelParams, evidence_from_counts, observation_counts
from .sim import Scenario, generate_scan, ground_truth_grid, poses_at, \
    rasterize_static_labels

CLASS_LABELS = MAP_FRAME.labels
TIE = len(CLASS_LABELS)

#: Pignistic argmax colors: F white, C blue, N cyan, S green, V red,
#: ties gray (no decision).
_PALETTE = np.array([
    (255, 255, 255),
    (0, 0, 200),
    (0, 200, 200),
    (0, 200, 0),
    (200, 0, 0),
    (128, 128, 128),
], dtype=np.uint8)

_TIE_TOL = 1e-12


class ConfigError(ValueError):
    """Raised for unusable configuration or input files."""


def pignistic_layers(grid: EvidentialGrid) -> np.ndarray:
    """(n, width, height) pignistic probability per frame element."""
    mat = _pignistic_matrix(grid.frame.n)
    return np.tensordot(mat, grid.masses, axes=(1, 0))


def classify_cells(grid: EvidentialGrid) -> np.ndarray:
    """Pignistic argmax per cell; cells whose maximum is shared report the
    dedicated tie code instead of an arbitrary class."""
    betp = pignistic_layers(grid)
    best = betp.max(axis=0)
    codes = betp.argmax(axis=0).astype(np.int8)
    tied = (betp >= best - _TIE_TOL).sum(axis=0) > 1
    codes[tied] = TIE
    return codes


def _image_rows(cells: np.ndarray) -> np.ndarray:
    """Reorder a (width, height) cell array into image rows, y-up."""
    return cells.T[::-1]


def render_composite(grid: EvidentialGrid) -> bytes:
    """Binary PPM (P6) of the per-cell pignistic argmax classes."""
    img = _PALETTE[_image_rows(classify_cells(grid))]
    header = f"P6\n{grid.spec.width} {grid.spec.height}\n255\n".encode()
    return header + np.ascontiguousarray(img).tobytes()


def render_class_layer(grid: EvidentialGrid, label: str) -> bytes:
    """Binary PGM (P5) of one class's pignistic probability."""
    if label not in grid.frame.labels:
        raise ValueError(f"unknown class {label!r}")
    layer = pignistic_layers(grid)[grid.frame.index(label)]
    img = np.rint(255.0 * _image_rows(layer)).astype(np.uint8)
    header = f"P5\n{grid.spec.width} {grid.spec.height}\n255\n".encode()
    return header + np.ascontiguousarray(img).tobytes()


@dataclass
class FrameState:
    """Everything produced for one simulated frame."""

    index: int
    t: float
    scan_grid: EvidentialGrid
    map_grid: EvidentialGrid
    touched: np.ndarray     # cells reached by at least one beam this frame
    observed: np.ndarray    # cells reached by at least one beam so far
    truth: np.ndarray


def simulate(scenario: Scenario, spec: GridSpec, params: FusionParams,
             n_frames: Optional[int] = None) -> Iterator[FrameState]:
    """Drive the full pipeline over a scenario, one frame at a time."""
    prior = build_prior_grid(scenario.vmap, spec, params.prior)
    mg = EvidentialGrid.vacuous(spec, MAP_FRAME)
    observed = np.zeros((spec.width, spec.height), dtype=bool)
    static_labels = rasterize_static_labels(scenario, spec)
    total = scenario.n_frames if n_frames is None else min(n_frames, scenario.n_frames)
    for index in range(total):
        t = scenario.frame_time(index)
        scan = generate_scan(scenario, t)
        ego, _ = poses_at(scenario, t)
        n_free, n_occ = observation_counts(scan, ego, spec)
        touched = (n_free + n_occ) > 0
        sg = evidence_from_counts(n_free, n_occ, spec, params.sensor)
        mg = fuse_step(mg, sg, prior, params)
        observed |= touched
        truth = ground_truth_grid(scenario, t, spec, static_labels)
        yield FrameState(index, t, sg, mg, touched, observed.copy(), truth)


@dataclass
class EvalReport:
    """Confusion of ground truth against pignistic argmax over observed
    cells, per frame and aggregated."""

    frames: int = 0
    observed_cells: int = 0
    per_frame: list[np.ndarray] = field(default_factory=list)
    aggregate: np.ndarray = field(
        default_factory=lambda: np.zeros((len(CLASS_LABELS), TIE + 1), dtype=np.int64))

    def add_frame(self, truth: np.ndarray, codes: np.ndarray,
                  observed: np.ndarray) -> None:
        confusion = np.bincount(
            truth[observed].astype(np.int64) * (TIE + 1) + codes[observed],
            minlength=len(CLASS_LABELS) * (TIE + 1)
        ).reshape(len(CLASS_LABELS), TIE + 1)
        self.per_frame.append(confusion)
        self.aggregate += confusion
        self.frames += 1
        self.observed_cells = int(observed.sum())

    def recall(self, label: str) -> Optional[float]:
        row = self.aggregate[CLASS_LABELS.index(label)]
        total = int(row.sum())
        return float(row[CLASS_LABELS.index(label)]) / total if total else None

    def precision(self, label: str) -> Optional[float]:
        k = CLASS_LABELS.index(label)
        predicted = int(self.aggregate[:, k].sum())
        return float(self.aggregate[k, k]) / predicted if predicted else None

    def to_dict(self) -> dict:
        return {
            "class_labels": list(CLASS_LABELS),
            "prediction_columns": list(CLASS_LABELS) + ["tie"],
            "frames": self.frames,
            "observed_cells": self.observed_cells,
            "aggregate": self.aggregate.tolist(),
            "per_frame": [m.tolist() for m in self.per_frame],
            "precision": {lab: self.precision(lab) for lab in CLASS_LABELS},
            "recall": {lab: self.recall(lab) for lab in CLASS_LABELS},
        }


@dataclass
class RunConfig:
    scenario_path: Path
    out_dir: Path
    params: FusionParams = field(default_factory=FusionParams)
    grid: Optional[GridSpec] = None
    frames: Optional[int] = None
    seed: Optional[int] = None
    images: bool = False
    dump_masses: bool = False


def derive_grid_spec(scenario: Scenario, resolution: float = 0.5) -> GridSpec:
    """Smallest grid covering the map, all tracks, and the ego's sensor
    reach, snapped to the resolution."""
    xs, ys = [], []
    for poly in scenario.vmap.buildings + scenario.vmap.roads + scenario.unmapped_obstacles:
        for x, y in poly.vertices:
            xs.append(x)
            ys.append(y)
    reach = scenario.lidar.max_range
    for wp in scenario.ego:
        xs.extend((wp.x - reach, wp.x + reach))
        ys.extend((wp.y - reach, wp.y + reach))
    for obj in scenario.objects:
        pad = 0.5 * math.hypot(obj.length, obj.width)
        for wp in obj.waypoints:
            xs.extend((wp.x - pad, wp.x + pad))
            ys.extend((wp.y - pad, wp.y + pad))
    origin_x = math.floor(min(xs) / resolution) * resolution
    origin_y = math.floor(min(ys) / resolution) * resolution
    width = int(math.ceil((max(xs) - origin_x) / resolution))
    height = int(math.ceil((max(ys) - origin_y) / resolution))
    return GridSpec(origin_x, origin_y, width, height, resolution)


def params_from_dict(data: dict) -> FusionParams:
    """Build fusion parameters from a (possibly partial) config mapping."""
    def _section(cls, key):
        try:
            return cls(**data.get(key, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad '{key}' section: {exc}") from exc

    use_prior = data.get("use_prior", True)
    if not isinstance(use_prior, bool):
        raise ConfigError("use_prior must be a boolean")
    return FusionParams(
        counter=_section(CounterParams, "counter"),
        discount=_section(DiscountParams, "discount"),
        prior=_section(PriorConfidence, "prior"),
        sensor=_section(SensorModelParams, "sensor"),
        use_prior=use_prior)


def params_to_dict(params: FusionParams) -> dict:
    return {
        "counter": dataclasses.asdict(params.counter),
        "discount": dataclasses.asdict(params.discount),
        "prior": dataclasses.asdict(params.prior),
        "sensor": dataclasses.asdict(params.sensor),
        "use_prior": params.use_prior,
    }


def load_run_config(scenario_path: str, out_dir: str,
                    config_path: Optional[str] = None,
                    frames: Optional[int] = None,
                    seed: Optional[int] = None,
                    no_map: bool = False,
                    images: bool = False,
                    dump_masses: bool = False) -> RunConfig:
    scenario_file = Path(scenario_path)
    if not scenario_file.is_file():
        raise ConfigError(f"scenario file not found: {scenario_file}")
    data = {}
    if config_path is not None:
        config_file = Path(config_path)
        if not config_file.is_file():
            raise ConfigError(f"config file not found: {config_file}")
        try:
            data = json.loads(config_file.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
    params = params_from_dict(data.get("fusion", {}))
    if no_map:
        params = dataclasses.replace(params, use_prior=False)
    grid = None
    if "grid" in data:
        try:
            grid = GridSpec(**data["grid"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad 'grid' section: {exc}") from exc
    if frames is not None and frames < 1:
        raise ConfigError("--frames must be positive")
    return RunConfig(scenario_file, Path(out_dir), params=params, grid=grid,
                     frames=frames, seed=seed, images=images,
                     dump_masses=dump_masses)


def _grid_to_dict(spec: GridSpec) -> dict:
    return dataclasses.asdict(spec)


def run(config: RunConfig) -> EvalReport:
    """Execute a configured run, writing outputs under config.out_dir."""
    try:
        scenario = Scenario.load(config.scenario_path)
    except (OSError, KeyError, ValueError, MapValidationError) as exc:
        raise ConfigError(f"cannot load scenario {config.scenario_path}: {exc}") from exc
    if config.seed is not None:
        scenario = scenario.with_seed(config.seed)
    spec = config.grid if config.grid is not None else derive_grid_spec(scenario)
    n_frames = scenario.n_frames if config.frames is None \
        else min(config.frames, scenario.n_frames)

    out_dir = config.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc

    resolved = {
        "scenario": str(config.scenario_path),
        "seed": scenario.rng_seed,
        "frames": n_frames,
        "grid": _grid_to_dict(spec),
        "fusion": params_to_dict(config.params),
        "outputs": {"images": config.images, "dump_masses": config.dump_masses},
    }
    (out_dir / "resolved_config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n")

    report = EvalReport()
    for state in simulate(scenario, spec, config.params, n_frames):
        codes = classify_cells(state.map_grid)
        report.add_frame(state.truth, codes, state.observed)
        stem = f"frame_{state.index:04d}"
        if config.images:
            (out_dir / f"{stem}_composite.ppm").write_bytes(
                render_composite(state.map_grid))
            for label in CLASS_LABELS:
                (out_dir / f"{stem}_betp_{label}.pgm").write_bytes(
                    render_class_layer(state.map_grid, label))
        if config.dump_masses:
            with open(out_dir / f"{stem}_masses.csv", "w") as fh:
                state.map_grid.to_csv(fh)
    (out_dir / "metrics.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="evigrid",
        description="Map-aided evidential occupancy-grid fusion")
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="run a scenario through the pipeline")
    run_parser.add_argument("--scenario", required=True, help="scenario JSON file")
    run_parser.add_argument("--config", help="config JSON file (defaults applied)")
    run_parser.add_argument("--out", required=True, help="output directory")
    run_parser.add_argument("--frames", type=int, help="limit the number of frames")
    run_parser.add_argument("--seed", type=int, help="override the scenario RNG seed")
    run_parser.add_argument("--no-map", action="store_true",
                            help="disable the prior map (ablation)")
    run_parser.add_argument("--dump-masses", action="store_true",
                            help="write per-frame CSV mass dumps")
    run_parser.add_argument("--images", action="store_true",
                            help="write per-frame PPM/PGM images")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        config = load_run_config(
            args.scenario, args.out, config_path=args.config,
            frames=args.frames, seed=args.seed, no_map=args.no_map,
            images=args.images, dump_masses=args.dump_masses)
        report = run(config)
    except ConfigError as exc:
        print(f"evigrid: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"evigrid: error: {exc}", file=sys.stderr)
        return 2
    observed = report.observed_cells
    print(f"evigrid: {report.frames} frames, {observed} cells observed; "
          f"metrics written to {config.out_dir / 'metrics.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
