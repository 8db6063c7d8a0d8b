"""Ground-plane grid that replaces the z axis by a per-cell [low, high] range.

Each (x, y) cell remembers the z-range of every echo seen up to the previous
scan. An echo inside that range (widened by ``eps``) is static; an echo that
extends the range, or lands in a cell without a range, is dynamic.

Stale ranges are the 2D false-negative hazard: after a tall object leaves,
anything shorter entering the cell would fall inside the old range. A cell
is therefore reset when the projection of a sensor-to-echo ray crosses it at
a height inside the vacated band: above the cell's current echoes (or its
committed floor when empty) and below its committed top, each shrunk by
``eps``. Such a ray passes through space the old occupant used to fill.

Rather than walking every ray, candidate cells collect the rays of the
azimuth buckets their footprint spans and clip each against their square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from . import geometry
from .errors import ScanOrderError
from .frames import OUT_OF_RANGE, FrameStats, Label, LabeledFrame, ScanFrame
from .geometry import CellIndex, GridConfig, GridMode

DEFAULT_EPS = 0.05


@dataclass(frozen=True)
class ZRange:
    z_low: float
    z_high: float

    def __post_init__(self):
        if not self.z_low <= self.z_high:
            raise ValueError(f"z_low {self.z_low} > z_high {self.z_high}")

    def contains(self, z: float, eps: float = 0.0) -> bool:
        return self.z_low - eps <= z <= self.z_high + eps

    def union(self, other: Optional["ZRange"]) -> "ZRange":
        if other is None:
            return self
        return ZRange(min(self.z_low, other.z_low), max(self.z_high, other.z_high))


@dataclass(frozen=True)
class Cell2D:
    committed_range: Optional[ZRange]
    current_range: Optional[ZRange]
    occupied_prev: bool
    shadowed: bool


def classify_echo_by_range(cell: Cell2D, echo_z: float, eps: float = DEFAULT_EPS) -> Label:
    """Static iff the echo lies within the cell's committed range (+-eps).

    Shadowed cells keep their committed range, so a re-appearing echo is
    judged against the same range it had before it was occluded.
    """
    rng = cell.committed_range
    if rng is not None and rng.contains(echo_z, eps):
        return Label.STATIC
    return Label.DYNAMIC


@numba.njit(cache=True)
def _bin_ranges(lin, z, cur_lo, cur_hi, touched):
    nt = 0
    for n in range(lin.shape[0]):
        c = lin[n]
        if c < 0:
            continue
        v = z[n]
        if math.isnan(cur_lo[c]):
            cur_lo[c] = v
            cur_hi[c] = v
            touched[nt] = c
            nt += 1
        elif v < cur_lo[c]:
            cur_lo[c] = v
        elif v > cur_hi[c]:
            cur_hi[c] = v
    return nt


_AZ_BINS = 4096


@numba.njit(cache=True)
def _azimuth_buckets(origin, points):
    """Counting-sort rays by horizontal azimuth around the origin.

    Returns (ray order, bucket start offsets of length bins + 1).
    """
    nb = _AZ_BINS
    bw = 2.0 * math.pi / nb
    n = points.shape[0]
    bins = np.empty(n, dtype=np.int64)
    counts = np.zeros(nb + 1, dtype=np.int64)
    for r in range(n):
        hx = points[r, 0] - origin[0]
        hy = points[r, 1] - origin[1]
        if hx == 0.0 and hy == 0.0:
            bins[r] = -1  # vertical ray, crosses no other column
            continue
        b = int(math.floor((math.atan2(hy, hx) + math.pi) / bw)) % nb
        bins[r] = b
        counts[b + 1] += 1
    for b in range(nb):
        counts[b + 1] += counts[b]
    fill = counts[:nb].copy()
    order = np.empty(counts[nb], dtype=np.int64)
    for r in range(n):
        b = bins[r]
        if b >= 0:
            order[fill[b]] = r
            fill[b] += 1
    return order, counts


@numba.njit(cache=True)
def _crossing(ox, oy, dx, dy, x0, x1, y0, y1):
    """Parameter interval of o + t*d (t in [0, 1]) inside the rectangle."""
    ta = 0.0
    tb = 1.0
    for a in range(2):
        o = ox if a == 0 else oy
        d = dx if a == 0 else dy
        lo = x0 if a == 0 else y0
        hi = x1 if a == 0 else y1
        if d == 0.0:
            if o < lo or o > hi:
                return 1.0, 0.0
        else:
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            ta = max(ta, t1)
            tb = min(tb, t2)
    return ta, tb


@numba.njit(cache=True)
def _vacated_cells(origin, points, echo_lin, lo, side, ny, cand_keys, band_lo, band_hi):
    """Candidate cells crossed by a projected ray inside their vacated band.

    A crossing counts when the ray's horizontal projection passes through
    the cell over a positive length before reaching the echo's own cell, and
    the ray's z over that stretch overlaps ``[band_lo, band_hi]``. Each cell
    only tests the rays of the azimuth buckets its footprint spans.
    """
    nb = _AZ_BINS
    bw = 2.0 * math.pi / nb
    order, start = _azimuth_buckets(origin, points)
    ox, oy, oz = origin[0], origin[1], origin[2]
    hits = np.empty(cand_keys.shape[0], dtype=np.int64)
    nh = 0
    for c in cand_keys:
        x0 = lo[0] + (c // ny) * side
        y0 = lo[1] + (c % ny) * side
        x1 = x0 + side
        y1 = y0 + side
        qx = min(max(ox, x0), x1) - ox
        qy = min(max(oy, y0), y1) - oy
        rnear = math.sqrt(qx * qx + qy * qy)
        if rnear == 0.0:
            b0, b1 = 0, nb - 1
        else:
            ac = math.atan2(y0 + 0.5 * side - oy, x0 + 0.5 * side - ox)
            dmin = np.inf
            dmax = -np.inf
            for cx in (x0, x1):
                for cy in (y0, y1):
                    d = math.atan2(cy - oy, cx - ox) - ac
                    if d > math.pi:
                        d -= 2.0 * math.pi
                    elif d < -math.pi:
                        d += 2.0 * math.pi
                    dmin = min(dmin, d)
                    dmax = max(dmax, d)
            # one bucket of padding keeps the window conservative
            b0 = int(math.floor((ac + dmin + math.pi) / bw)) - 1
            b1 = int(math.floor((ac + dmax + math.pi) / bw)) + 1
        lo_z = band_lo[c]
        hi_z = band_hi[c]
        found = False
        for b in range(b0, b1 + 1):
            bb = b % nb
            for q in range(start[bb], start[bb + 1]):
                r = order[q]
                if echo_lin[r] == c:
                    continue
                dx = points[r, 0] - ox
                dy = points[r, 1] - oy
                if dx * dx + dy * dy < rnear * rnear:
                    continue
                ta, tb = _crossing(ox, oy, dx, dy, x0, x1, y0, y1)
                if not tb > ta:
                    continue
                dz = points[r, 2] - oz
                za = oz + ta * dz
                zb = oz + tb * dz
                if za > zb:
                    za, zb = zb, za
                if zb >= lo_z and za <= hi_z:
                    found = True
                    break
            if found:
                break
        if found:
            hits[nh] = c
            nh += 1
    return hits[:nh]


class RangeGrid2D:
    """Ground-plane occupancy grid with z-ranging, shadowing and resizing.

    Parameters
    ----------
    cfg : GridConfig
        The mode is forced to 2D; z bounds are ignored for binning.
    eps : float
        Tolerance (m) applied around committed ranges.
    resize : bool
        Disable only to demonstrate the false negatives resizing prevents.
    """

    def __init__(self, cfg: GridConfig, eps: float = DEFAULT_EPS, resize: bool = True):
        self.cfg = cfg if cfg.mode is GridMode.GRID2D else cfg.with_mode(GridMode.GRID2D)
        if not (eps >= 0 and math.isfinite(eps)):
            raise ValueError(f"eps must be a non-negative number, got {eps}")
        self.eps = float(eps)
        self.resize_enabled = resize
        n = self.cfg.num_cells
        self.com_lo = np.full(n, np.nan)
        self.com_hi = np.full(n, np.nan)
        self.prev = np.zeros(n, dtype=bool)
        self.shadow = np.zeros(n, dtype=bool)
        self.current_scan: Optional[int] = None
        self._cur_lo = np.full(n, np.nan)
        self._cur_hi = np.full(n, np.nan)
        self._touched = np.empty(0, dtype=np.int64)
        self._last_lo = np.empty(0)
        self._last_hi = np.empty(0)
        self._lo, self._hi, self._shape = geometry.grid_params(self.cfg)

    # -- queries ----------------------------------------------------------

    def _lin(self, idx) -> int:
        i, j = tuple(idx)[:2]
        return int(geometry.linear_index(np.array([[i, j, 0]]), self.cfg)[0])

    def cell(self, idx) -> Cell2D:
        c = self._lin(idx)
        com = None if np.isnan(self.com_lo[c]) else ZRange(float(self.com_lo[c]), float(self.com_hi[c]))
        cur = None
        pos = np.searchsorted(self._touched, c)
        if pos < len(self._touched) and self._touched[pos] == c:
            cur = ZRange(float(self._last_lo[pos]), float(self._last_hi[pos]))
        return Cell2D(com, cur, bool(self.prev[c]), bool(self.shadow[c]))

    def active_keys(self) -> np.ndarray:
        """Linear indices of cells holding a range or a flag."""
        return np.flatnonzero(~np.isnan(self.com_lo) | self.prev | self.shadow)

    def shadowed_cells(self) -> list[CellIndex]:
        return [CellIndex(*map(int, r))
                for r in geometry.unravel_index(np.flatnonzero(self.shadow), self.cfg)]

    def replace_state(self, keys, com_lo, com_hi, prev, shadow) -> None:
        keys = np.asarray(keys, dtype=np.int64)
        if len(np.unique(keys)) != len(keys):
            raise ValueError("duplicate cell keys")
        n = self.cfg.num_cells
        self.com_lo = np.full(n, np.nan)
        self.com_hi = np.full(n, np.nan)
        self.prev = np.zeros(n, dtype=bool)
        self.shadow = np.zeros(n, dtype=bool)
        self.com_lo[keys] = com_lo
        self.com_hi[keys] = com_hi
        self.prev[keys] = prev
        self.shadow[keys] = shadow
        self._touched = np.empty(0, dtype=np.int64)
        self._last_lo = np.empty(0)
        self._last_hi = np.empty(0)

    # -- ingest -----------------------------------------------------------

    def ingest(self, frame: ScanFrame) -> LabeledFrame:
        if self.current_scan is not None and frame.scan_id <= self.current_scan:
            raise ScanOrderError(
                f"scan {frame.scan_id} does not follow scan {self.current_scan}")
        first = self.current_scan is None
        n = len(frame)
        z = frame.points[:, 2]

        lin = geometry.bin_points(frame.points, self.cfg)
        inside = lin >= 0
        touched = np.empty(n, dtype=np.int64)
        nt = _bin_ranges(lin, z, self._cur_lo, self._cur_hi, touched)
        touched = np.sort(touched[:nt])
        occ = np.zeros(self.cfg.num_cells, dtype=bool)
        occ[touched] = True

        labels = np.zeros(n, dtype=np.uint8)
        if not first:
            li = lin[inside]
            lo = self.com_lo[li]
            hi = self.com_hi[li]
            zi = z[inside]
            static = (zi >= lo - self.eps) & (zi <= hi + self.eps)  # False where no range
            labels[inside] = np.where(static, Label.STATIC, Label.DYNAMIC).astype(np.uint8)
        flags = np.zeros(n, dtype=np.uint8)
        flags[~inside] = OUT_OF_RANGE

        newly = self._update_shadows(occ)
        reset = self.resize_cell(frame, lin) if (self.resize_enabled and not first) else 0
        self._commit(touched, occ)
        self.current_scan = frame.scan_id

        ndyn = int(np.count_nonzero(labels))
        stats = FrameStats(
            dynamic_count=ndyn,
            static_count=n - ndyn,
            shadowed_cell_count=newly,
            reset_cell_count=reset,
        )
        return LabeledFrame(frame.scan_id, labels, flags, stats)

    def _update_shadows(self, occ: np.ndarray) -> int:
        newly = self.prev & ~occ & ~self.shadow
        self.shadow |= newly
        self.shadow &= ~occ
        return int(np.count_nonzero(newly))

    def resize_cell(self, frame: ScanFrame, echo_lin: Optional[np.ndarray] = None) -> int:
        """Reset ranges of cells a line of sight proves to be vacated.

        The vacated band of a cell runs from ``eps`` above its floor to
        ``eps`` below the committed top, where the floor is the committed
        bottom or, if the cell has echoes this scan, the top of those
        echoes. A projected sensor-to-echo ray crossing the cell inside that band resets the
        committed range to the current scan's evidence (none if empty) and
        clears the shadow. Returns the number of reset cells.
        """
        if len(frame) == 0:
            return 0
        floor = self.com_lo.copy()
        cur_hi = self._cur_hi
        occupied = ~np.isnan(cur_hi)
        floor[occupied] = np.fmax(floor[occupied], cur_hi[occupied])
        band_lo = floor + self.eps
        band_hi = self.com_hi - self.eps
        with np.errstate(invalid="ignore"):
            cand_mask = band_hi >= band_lo  # False where no committed range
        cand_keys = np.flatnonzero(cand_mask)
        if len(cand_keys) == 0:
            return 0
        if echo_lin is None:
            echo_lin = geometry.bin_points(frame.points, self.cfg)
        hits = _vacated_cells(
            np.asarray(frame.sensor_origin, dtype=np.float64), frame.points, echo_lin,
            self._lo, self.cfg.side_length, self.cfg.shape[1], cand_keys, band_lo, band_hi)
        self.com_lo[hits] = np.nan
        self.com_hi[hits] = np.nan
        self.shadow[hits] = False
        return len(hits)

    def _commit(self, touched: np.ndarray, occ: np.ndarray) -> None:
        cl = self._cur_lo[touched]
        ch = self._cur_hi[touched]
        self.com_lo[touched] = np.fmin(self.com_lo[touched], cl)
        self.com_hi[touched] = np.fmax(self.com_hi[touched], ch)
        # reset cells without current evidence have no range left to carry
        self.shadow &= ~np.isnan(self.com_lo)
        self.prev = occ | self.shadow
        self._touched, self._last_lo, self._last_hi = touched, cl, ch
        self._cur_lo[touched] = np.nan
        self._cur_hi[touched] = np.nan


def ingest_scan_2d(grid: RangeGrid2D, frame: ScanFrame) -> LabeledFrame:
    return grid.ingest(frame)
