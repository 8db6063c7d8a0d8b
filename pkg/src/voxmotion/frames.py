"""Scan frames, echoes and per-echo labelling results.

Echo positions are stored column-wise: a ``ScanFrame`` holds one ``(N, 3)``
float64 array rather than a list of objects, since every backend works on
whole frames at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple, Optional

import numpy as np


class Label(IntEnum):
    STATIC = 0
    DYNAMIC = 1


# per-echo diagnostic bit flags
OUT_OF_RANGE = 1


class Echo(NamedTuple):
    x: float
    y: float
    z: float
    intensity: Optional[float] = None


@dataclass
class ScanFrame:
    """All echoes of one sweep.

    Parameters
    ----------
    scan_id : int
        Strictly increasing sweep identifier.
    timestamp : float
        Seconds.
    points : np.ndarray
        ``(N, 3)`` echo coordinates in the sensor/ego frame, meters.
    sensor_origin : tuple of float
        Line-of-sight start used for see-through tests.
    intensity : np.ndarray, optional
        Passed through to outputs untouched.
    """

    scan_id: int
    timestamp: float
    points: np.ndarray
    sensor_origin: tuple = (0.0, 0.0, 0.0)
    intensity: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError(f"scan {self.scan_id}: non-finite echo coordinates")
        self.points = pts
        origin = tuple(float(c) for c in self.sensor_origin)
        if len(origin) != 3 or not all(np.isfinite(origin)):
            raise ValueError(f"scan {self.scan_id}: bad sensor origin {self.sensor_origin!r}")
        self.sensor_origin = origin
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64)
            if self.intensity.shape != (len(pts),):
                raise ValueError("intensity length does not match echo count")

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_echoes(cls, scan_id: int, timestamp: float, echoes: Iterable[Echo],
                    sensor_origin=(0.0, 0.0, 0.0)) -> "ScanFrame":
        echoes = list(echoes)
        pts = np.array([(e.x, e.y, e.z) for e in echoes], dtype=np.float64).reshape(-1, 3)
        intensity = None
        if echoes and all(e.intensity is not None for e in echoes):
            intensity = np.array([e.intensity for e in echoes], dtype=np.float64)
        return cls(scan_id, timestamp, pts, sensor_origin, intensity)

    def echoes(self) -> list[Echo]:
        inten = self.intensity
        return [
            Echo(float(x), float(y), float(z), None if inten is None else float(inten[n]))
            for n, (x, y, z) in enumerate(self.points)
        ]


@dataclass
class FrameStats:
    ingest_duration: float = 0.0  # ms
    dynamic_count: int = 0
    static_count: int = 0
    shadowed_cell_count: int = 0
    deshadowed_cell_count: int = 0
    reset_cell_count: int = 0

    def as_dict(self) -> dict:
        return {
            "ingest_duration_ms": self.ingest_duration,
            "dynamic_count": self.dynamic_count,
            "static_count": self.static_count,
            "shadowed_cell_count": self.shadowed_cell_count,
            "deshadowed_cell_count": self.deshadowed_cell_count,
            "reset_cell_count": self.reset_cell_count,
        }


@dataclass
class LabeledFrame:
    scan_id: int
    labels: np.ndarray  # uint8, values of Label
    flags: np.ndarray  # uint8 bit set, see OUT_OF_RANGE
    stats: FrameStats = field(default_factory=FrameStats)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.flags = np.asarray(self.flags, dtype=np.uint8)
        if self.labels.shape != self.flags.shape:
            raise ValueError("labels and flags must have equal length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dynamic_mask(self) -> np.ndarray:
        return self.labels == Label.DYNAMIC
