"""Ego-motion compensation by shifting grid cells instead of points.

Odometry gives linear and angular velocities in the previous ego frame.
Integrated over one frame interval they describe the ego displacement; its
inverse maps previous-frame coordinates into the current frame, and every
stored cell is moved to wherever its center lands under that map.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import geometry
from .errors import InvalidDt, MissingOdometry, NonRigidTransform
from .grid2d import RangeGrid2D
from .grid3d import OccupancyGrid3D

log = logging.getLogger(__name__)

RIGID_TOL = 1e-9
# roll/pitch per frame above which a 2D shift warns that it ignores them
PLANAR_WARN_RAD = 0.01


@dataclass(frozen=True)
class OdometrySample:
    timestamp: float
    v: tuple = (0.0, 0.0, 0.0)  # m/s
    w: tuple = (0.0, 0.0, 0.0)  # rad/s about x, y, z


@dataclass(frozen=True)
class Transform:
    """Rigid map p -> r @ p + t."""

    r: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "Transform":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Transform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m

    def is_rigid(self, tol: float = RIGID_TOL) -> bool:
        r = self.r
        if not (np.isfinite(r).all() and np.isfinite(self.t).all()):
            return False
        return (np.abs(r.T @ r - np.eye(3)).max() <= tol
                and abs(np.linalg.det(r) - 1.0) <= tol)

    def inverse(self) -> "Transform":
        rt = self.r.T
        return Transform(rt, -(rt @ self.t))

    def compose(self, first: "Transform") -> "Transform":
        """``self ∘ first``: apply ``first``, then ``self``."""
        return Transform(self.r @ first.r, self.r @ first.t + self.t)

    @property
    def yaw(self) -> float:
        return math.atan2(self.r[1, 0], self.r[0, 0])

    @property
    def roll_pitch(self) -> tuple[float, float]:
        r = self.r
        pitch = -math.asin(max(-1.0, min(1.0, r[2, 0])))
        roll = math.atan2(r[2, 1], r[2, 2])
        return roll, pitch


def rotation_zyx(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def ego_displacement(odo: OdometrySample, dt: float) -> Transform:
    """Pose of the current ego frame expressed in the previous one."""
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidDt(f"frame interval must be positive and finite, got {dt}")
    wx, wy, wz = (float(c) * dt for c in odo.w)
    return Transform(rotation_zyx(wx, wy, wz), np.asarray(odo.v, dtype=np.float64) * dt)


def build_transform(odo: OdometrySample, dt: float) -> Transform:
    """Transform taking previous-frame coordinates into the current frame."""
    return ego_displacement(odo, dt).inverse()


def apply_transform(T: Transform, p) -> tuple[float, float, float]:
    r, t = T.r, T.t
    x, y, z = (float(c) for c in p)
    return (
        r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0],
        r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1],
        r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2],
    )


def apply_transform_points(T: Transform, pts: np.ndarray) -> np.ndarray:
    """Vectorised ``apply_transform`` with the same operation order."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    r, t = T.r, T.t
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    out = np.empty_like(pts)
    for a in range(3):
        out[:, a] = r[a, 0] * x + r[a, 1] * y + r[a, 2] * z + t[a]
    return out


def _planar(T: Transform) -> Transform:
    roll, pitch = T.roll_pitch
    if max(abs(roll), abs(pitch)) > PLANAR_WARN_RAD:
        log.warning("2D grid shift ignores roll %.4f / pitch %.4f rad", roll, pitch)
    yaw = T.yaw
    c, s = math.cos(yaw), math.sin(yaw)
    r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Transform(r, np.array([T.t[0], T.t[1], 0.0]))


def _destinations(keys: np.ndarray, cfg: geometry.GridConfig, T: Transform):
    centers = geometry.cell_centers(geometry.unravel_index(keys, cfg), cfg)
    moved = apply_transform_points(T, centers)
    idx, inside = geometry.points_to_cells(moved, cfg)
    return geometry.linear_index(idx[inside], cfg), inside


def _merge(dest: np.ndarray):
    """Sort destinations and return (order, unique keys, group starts)."""
    order = np.argsort(dest, kind="stable")
    d = dest[order]
    starts = np.flatnonzero(np.r_[True, d[1:] != d[:-1]]) if len(d) else np.empty(0, dtype=np.int64)
    return order, d[starts], starts


def shift_grid(grid: Union[OccupancyGrid3D, RangeGrid2D], T: Transform):
    """Move every stored cell of ``grid`` by ``T`` (in place; returns the grid).

    Cells landing on the same destination are merged (flags OR-ed, ranges
    united); cells mapped outside the grid are dropped. 2D grids use only the
    yaw part of ``T`` and offset stored ranges by its z translation.
    """
    if not T.is_rigid():
        raise NonRigidTransform("transform is not a proper rotation plus translation")
    if isinstance(grid, OccupancyGrid3D):
        keys, flags, seen = grid.state()
        dest, inside = _destinations(keys, grid.cfg, T)
        flags, seen = flags[inside], seen[inside]
        order, ukeys, starts = _merge(dest)
        if len(ukeys):
            grid.replace_state(ukeys, np.bitwise_or.reduceat(flags[order], starts),
                               np.maximum.reduceat(seen[order], starts))
        else:
            grid.replace_state(ukeys, flags[:0], seen[:0])
        return grid
    if isinstance(grid, RangeGrid2D):
        planar = _planar(T)
        keys = grid.active_keys()
        lo, hi = grid.com_lo[keys] + T.t[2], grid.com_hi[keys] + T.t[2]
        prev, shadow = grid.prev[keys], grid.shadow[keys]
        dest, inside = _destinations(keys, grid.cfg, planar)
        lo, hi, prev, shadow = lo[inside], hi[inside], prev[inside], shadow[inside]
        order, ukeys, starts = _merge(dest)
        if len(ukeys):
            grid.replace_state(
                ukeys,
                np.fmin.reduceat(lo[order], starts),
                np.fmax.reduceat(hi[order], starts),
                np.logical_or.reduceat(prev[order], starts),
                np.logical_or.reduceat(shadow[order], starts),
            )
        else:
            grid.replace_state(ukeys, lo[:0], hi[:0], prev[:0], shadow[:0])
        return grid
    raise TypeError(f"cannot shift {type(grid).__name__}")


def match_odometry(samples: Sequence[OdometrySample], timestamp: float,
                   window: float = 0.2) -> OdometrySample:
    """Sample nearest to ``timestamp`` (samples sorted by time)."""
    if not samples:
        raise MissingOdometry(f"no odometry available for t={timestamp:.3f}")
    times = np.fromiter((s.timestamp for s in samples), dtype=np.float64, count=len(samples))
    pos = int(np.searchsorted(times, timestamp))
    best = min((p for p in (pos - 1, pos) if 0 <= p < len(samples)),
               key=lambda p: abs(times[p] - timestamp))
    if abs(times[best] - timestamp) > window:
        raise MissingOdometry(
            f"no odometry sample within {window}s of t={timestamp:.3f} "
            f"(nearest at {times[best]:.3f})")
    return samples[best]
