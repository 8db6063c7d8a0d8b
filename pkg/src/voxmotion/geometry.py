"""Grid configuration, world/cell index mapping and voxel ray traversal.

Cells use half-open intervals: a point on an axis minimum belongs to cell 0,
a point on an axis maximum is out of bounds. In 2D mode only x and y are
considered and the third index is always 0.

The traversal is the incremental DDA of Amanatides & Woo. Crossing parameters
are recomputed from the segment origin at every step instead of accumulated,
so long rays do not drift across cell boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np

from .errors import InvalidConfig

# tolerance for ceil() of extents that are exact multiples of the side length
_COUNT_EPS = 1e-9


class GridMode(str, Enum):
    GRID3D = "3d"
    GRID2D = "2d"


class CellIndex(NamedTuple):
    i: int
    j: int
    k: int = 0


@dataclass(frozen=True)
class GridConfig:
    """Axis-aligned grid bounds (meters) and cubic cell side length."""

    x_min: float = 0.0
    x_max: float = 75.0
    y_min: float = -25.0
    y_max: float = 25.0
    z_min: float = -2.5
    z_max: float = 4.5
    side_length: float = 0.15
    mode: GridMode = GridMode.GRID3D

    def __post_init__(self):
        object.__setattr__(self, "mode", GridMode(self.mode))
        vals = (self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max, self.side_length)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidConfig("grid bounds and side length must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.z_min < self.z_max):
            raise InvalidConfig("grid bounds must satisfy min < max on every axis")
        if self.side_length <= 0:
            raise InvalidConfig(f"side_length must be positive, got {self.side_length}")

    @classmethod
    def from_bounds(cls, bounds: Sequence[float], side_length: float, mode="3d") -> "GridConfig":
        x0, x1, y0, y1, z0, z1 = (float(b) for b in bounds)
        return cls(x0, x1, y0, y1, z0, z1, float(side_length), GridMode(mode))

    @property
    def ndim(self) -> int:
        return 3 if self.mode is GridMode.GRID3D else 2

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min], dtype=np.float64)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max], dtype=np.float64)

    def _count(self, lo: float, hi: float) -> int:
        return max(1, math.ceil((hi - lo) / self.side_length - _COUNT_EPS))

    @property
    def shape(self) -> tuple[int, int, int]:
        """Cell counts per axis; the z count is 1 in 2D mode."""
        nx = self._count(self.x_min, self.x_max)
        ny = self._count(self.y_min, self.y_max)
        nz = self._count(self.z_min, self.z_max) if self.mode is GridMode.GRID3D else 1
        return nx, ny, nz

    @property
    def num_cells(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def with_mode(self, mode) -> "GridConfig":
        return GridConfig(self.x_min, self.x_max, self.y_min, self.y_max,
                          self.z_min, self.z_max, self.side_length, GridMode(mode))


def world_to_cell(p, cfg: GridConfig) -> Optional[CellIndex]:
    """Map a point to its cell, or ``None`` when it lies outside the grid."""
    lo = (cfg.x_min, cfg.y_min, cfg.z_min)
    hi = (cfg.x_max, cfg.y_max, cfg.z_max)
    shape = cfg.shape
    idx = [0, 0, 0]
    for a in range(cfg.ndim):
        c = float(p[a])
        if not (lo[a] <= c < hi[a]):
            return None
        idx[a] = min(int(math.floor((c - lo[a]) / cfg.side_length)), shape[a] - 1)
    return CellIndex(*idx)


def cell_center(idx, cfg: GridConfig) -> tuple[float, float, float]:
    s = cfg.side_length
    i, j, k = (tuple(idx) + (0, 0, 0))[:3]
    z = cfg.z_min + (k + 0.5) * s if cfg.mode is GridMode.GRID3D else 0.0
    return (cfg.x_min + (i + 0.5) * s, cfg.y_min + (j + 0.5) * s, z)


def points_to_cells(points: np.ndarray, cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``world_to_cell``.

    Returns
    -------
    idx : np.ndarray
        ``(N, 3)`` int64 cell indices; rows of out-of-bounds points are 0.
    inside : np.ndarray
        ``(N,)`` bool mask of in-bounds points.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    nd = cfg.ndim
    lo = cfg.lower[:nd]
    hi = cfg.upper[:nd]
    sub = pts[:, :nd]
    inside = np.all((sub >= lo) & (sub < hi), axis=1)
    idx = np.zeros((len(pts), 3), dtype=np.int64)
    if len(pts):
        raw = np.floor((sub - lo) / cfg.side_length)
        raw = np.clip(raw, 0, np.array(cfg.shape[:nd]) - 1)
        idx[:, :nd] = np.where(inside[:, None], raw, 0).astype(np.int64)
    return idx, inside


def linear_index(idx: np.ndarray, cfg: GridConfig) -> np.ndarray:
    """Row-major linear index of ``(N, 3)`` cell indices."""
    _, ny, nz = cfg.shape
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
    return (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]


def unravel_index(lin: np.ndarray, cfg: GridConfig) -> np.ndarray:
    _, ny, nz = cfg.shape
    lin = np.asarray(lin, dtype=np.int64)
    out = np.empty((len(lin), 3), dtype=np.int64)
    out[:, 2] = lin % nz
    rest = lin // nz
    out[:, 1] = rest % ny
    out[:, 0] = rest // ny
    return out


def cell_centers(idx: np.ndarray, cfg: GridConfig) -> np.ndarray:
    """Vectorised ``cell_center`` (same arithmetic, bit-identical results)."""
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
    s = cfg.side_length
    out = np.empty((len(idx), 3), dtype=np.float64)
    out[:, 0] = cfg.x_min + (idx[:, 0] + 0.5) * s
    out[:, 1] = cfg.y_min + (idx[:, 1] + 0.5) * s
    if cfg.mode is GridMode.GRID3D:
        out[:, 2] = cfg.z_min + (idx[:, 2] + 0.5) * s
    else:
        out[:, 2] = 0.0
    return out


def grid_params(cfg: GridConfig):
    """Arrays handed to the compiled kernels: lower corner, upper corner, shape."""
    return cfg.lower, cfg.upper, np.array(cfg.shape, dtype=np.int64)


# ---------------------------------------------------------------------------
# compiled traversal
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _clip_segment(o, d, lo, hi, ndim):
    """Parametric (Liang-Barsky) clip of o + t*d, t in [0, 1], to the box."""
    t0 = 0.0
    t1 = 1.0
    for a in range(ndim):
        if d[a] == 0.0:
            if o[a] < lo[a] or o[a] >= hi[a]:
                return 1.0, 0.0
        else:
            ta = (lo[a] - o[a]) / d[a]
            tb = (hi[a] - o[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return 1.0, 0.0
    return t0, t1


@numba.njit(cache=True)
def _cell_of(p, lo, side, shape, a):
    c = int(math.floor((p - lo[a]) / side))
    if c < 0:
        return 0
    if c > shape[a] - 1:
        return shape[a] - 1
    return c


@numba.njit(cache=True, inline="always")
def _axis_setup(o, d, lo, side, c):
    """Step direction and first boundary-crossing parameter along one axis."""
    if d > 0.0:
        return 1, (lo + (c + 1) * side - o) / d
    if d < 0.0:
        return -1, (lo + c * side - o) / d
    return 0, np.inf


@numba.njit(cache=True)
def dda_walk(o, e, lo, hi, side, shape, ndim, cells, tin):
    """Walk the segment o->e through the grid.

    Writes visited cells to ``cells[:n]`` and the entry parameter of each
    cell to ``tin[:n]``; ``tin[n]`` holds the clipped exit parameter. Returns
    ``n`` (0 when the segment misses the grid). Buffers need
    ``sum(shape) + 2`` rows.
    """
    ox, oy, oz = o[0], o[1], o[2]
    dx, dy, dz = e[0] - ox, e[1] - oy, e[2] - oz
    t0, t1 = _clip_segment(o, (dx, dy, dz), lo, hi, ndim)
    if t0 > t1:
        return 0

    cx = _cell_of(ox + t0 * dx, lo, side, shape, 0)
    cy = _cell_of(oy + t0 * dy, lo, side, shape, 1)
    ex = _cell_of(ox + t1 * dx, lo, side, shape, 0)
    ey = _cell_of(oy + t1 * dy, lo, side, shape, 1)
    sx, tx = _axis_setup(ox, dx, lo[0], side, cx)
    sy, ty = _axis_setup(oy, dy, lo[1], side, cy)
    cz = 0
    ez = 0
    sz = 0
    tz = np.inf
    if ndim == 3:
        cz = _cell_of(oz + t0 * dz, lo, side, shape, 2)
        ez = _cell_of(oz + t1 * dz, lo, side, shape, 2)
        sz, tz = _axis_setup(oz, dz, lo[2], side, cz)
    nx, ny, nz = shape[0], shape[1], shape[2]

    limit = cells.shape[0] - 1
    n = 0
    t = t0
    while n < limit:
        cells[n, 0] = cx
        cells[n, 1] = cy
        cells[n, 2] = cz
        tin[n] = t
        n += 1
        if cx == ex and cy == ey and cz == ez:
            break
        # ties go to the lowest axis index
        if tx <= ty and tx <= tz:
            if tx > t1:
                break
            t = tx
            cx += sx
            if cx < 0 or cx >= nx:
                break
            tx = (lo[0] + (cx + 1) * side - ox) / dx if sx > 0 else (lo[0] + cx * side - ox) / dx
        elif ty <= tz:
            if ty > t1:
                break
            t = ty
            cy += sy
            if cy < 0 or cy >= ny:
                break
            ty = (lo[1] + (cy + 1) * side - oy) / dy if sy > 0 else (lo[1] + cy * side - oy) / dy
        else:
            if tz > t1:
                break
            t = tz
            cz += sz
            if cz < 0 or cz >= nz:
                break
            tz = (lo[2] + (cz + 1) * side - oz) / dz if sz > 0 else (lo[2] + cz * side - oz) / dz
    tin[n] = t1
    return n


@numba.njit(cache=True)
def _bin_linear(points, lo, hi, side, shape, ndim, out):
    ny, nz = shape[1], shape[2]
    for n in range(points.shape[0]):
        lin = 0
        for a in range(3):
            c = 0
            if a < ndim:
                p = points[n, a]
                if not (lo[a] <= p < hi[a]):
                    lin = -1
                    break
                c = int(math.floor((p - lo[a]) / side))
                if c > shape[a] - 1:
                    c = shape[a] - 1
            if a == 0:
                lin = c
            elif a == 1:
                lin = lin * ny + c
            else:
                lin = lin * nz + c
        out[n] = lin


def bin_points(points: np.ndarray, cfg: GridConfig) -> np.ndarray:
    """Linear cell index per point, -1 for points outside the grid.

    Same arithmetic as ``world_to_cell`` followed by ``linear_index``.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    lo, hi, shape = grid_params(cfg)
    out = np.empty(len(pts), dtype=np.int64)
    _bin_linear(pts, lo, hi, cfg.side_length, shape, cfg.ndim, out)
    return out


def _buffers(cfg: GridConfig):
    m = int(sum(cfg.shape)) + 2
    return np.empty((m, 3), dtype=np.int64), np.empty(m, dtype=np.float64)


def traverse_ray(origin, endpoint, cfg: GridConfig) -> list[CellIndex]:
    """Cells crossed by the segment origin->endpoint, in order.

    The segment is clipped to the grid first; an empty list means it misses
    the grid entirely.
    """
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    e = np.asarray(endpoint, dtype=np.float64).reshape(3)
    if not (np.isfinite(o).all() and np.isfinite(e).all()):
        raise ValueError("ray endpoints must be finite")
    if np.array_equal(o, e):
        raise ValueError("ray origin and endpoint coincide")
    lo, hi, shape = grid_params(cfg)
    cells, tin = _buffers(cfg)
    n = dda_walk(o, e, lo, hi, cfg.side_length, shape, cfg.ndim, cells, tin)
    return [CellIndex(int(a), int(b), int(c)) for a, b, c in cells[:n]]


@numba.njit(cache=True)
def see_through_hits(origin, points, echo_lin, lo, hi, side, shape, ndim, mask, cells, tin):
    """Mark cells with ``mask == 1`` crossed by any sensor->echo segment.

    Cells are visited strictly before the echo's own cell (``echo_lin``, -1
    for out-of-bounds echoes, whose clipped segments count in full). Hit
    cells are set to 2 in ``mask`` and returned as linear indices.
    """
    ny = shape[1]
    nz = shape[2]
    hits = np.empty(max(1, int((mask == 1).sum())), dtype=np.int64)
    nh = 0
    for r in range(points.shape[0]):
        p = points[r]
        if p[0] == origin[0] and p[1] == origin[1] and (ndim == 2 or p[2] == origin[2]):
            continue
        n = dda_walk(origin, p, lo, hi, side, shape, ndim, cells, tin)
        own = echo_lin[r]
        for c in range(n):
            lin = (cells[c, 0] * ny + cells[c, 1]) * nz + cells[c, 2]
            if lin == own:
                break
            if mask[lin] == 1:
                mask[lin] = 2
                hits[nh] = lin
                nh += 1
    return hits[:nh]
