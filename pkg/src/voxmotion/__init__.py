"""Per-echo static/dynamic labelling of LiDAR sequences with binary occupancy grids."""

from .ego_motion import (
    OdometrySample,
    Transform,
    apply_transform,
    build_transform,
    shift_grid,
)
from .errors import (
    InconsistentSchema,
    InvalidConfig,
    InvalidDt,
    InvalidSpec,
    LengthMismatch,
    MissingOdometry,
    NonMonotonicTimestamps,
    NonRigidTransform,
    ParseError,
    ScanOrderError,
    VoxMotionError,
)
from .frames import OUT_OF_RANGE, Echo, FrameStats, Label, LabeledFrame, ScanFrame
from .geometry import CellIndex, GridConfig, GridMode, cell_center, traverse_ray, world_to_cell
from .grid2d import RangeGrid2D, ZRange, classify_echo_by_range, ingest_scan_2d
from .grid3d import OccupancyGrid3D, ingest_scan_3d
from .pipeline import PipelineConfig, benchmark, process_sequence
from .synth import Actor, Box, GroundTruth, Metrics, SceneSpec, SensorSpec, evaluate, generate_scene, street_scene

__version__ = "0.1.0"

__all__ = [
    "Actor",
    "Box",
    "CellIndex",
    "Echo",
    "FrameStats",
    "GridConfig",
    "GridMode",
    "GroundTruth",
    "InconsistentSchema",
    "InvalidConfig",
    "InvalidDt",
    "InvalidSpec",
    "Label",
    "LabeledFrame",
    "LengthMismatch",
    "Metrics",
    "MissingOdometry",
    "NonMonotonicTimestamps",
    "NonRigidTransform",
    "OUT_OF_RANGE",
    "OccupancyGrid3D",
    "OdometrySample",
    "ParseError",
    "PipelineConfig",
    "RangeGrid2D",
    "ScanFrame",
    "ScanOrderError",
    "SceneSpec",
    "SensorSpec",
    "Transform",
    "VoxMotionError",
    "ZRange",
    "apply_transform",
    "benchmark",
    "build_transform",
    "cell_center",
    "classify_echo_by_range",
    "evaluate",
    "generate_scene",
    "ingest_scan_2d",
    "ingest_scan_3d",
    "process_sequence",
    "shift_grid",
    "street_scene",
    "traverse_ray",
    "world_to_cell",
]
