"""3D binary occupancy grid with new-detection, shadowing and de-shadowing.

A cell is dynamic when it receives echoes but was neither occupied in the
previous scan nor shadowed. Cells that lose their echoes stay "shadowed"
(treated as still occupied) until they are seen again or a sensor ray passes
through them, which proves the former occupant moved away.

Only cells with at least one flag set are stored. They are kept as sorted
linear-index arrays so every step of an ingest is a vectorised set
operation; ``storage="dense"`` adds a full flag volume for O(1) lookups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry
from .errors import InvalidConfig, ScanOrderError
from .frames import OUT_OF_RANGE, FrameStats, Label, LabeledFrame, ScanFrame
from .geometry import CellIndex, GridConfig, GridMode

PREV = np.uint8(1)  # occupied in the previous scan (or carried as shadowed)
SHADOW = np.uint8(2)
CURR = np.uint8(4)  # transient, only during an ingest


@dataclass(frozen=True)
class Cell3D:
    occupied_prev: bool
    occupied_curr: bool
    shadowed: bool
    last_seen_scan: Optional[int]


class _SparseStore:
    """Active cells as sorted keys with aligned flag / last-seen arrays."""

    def __init__(self, num_cells: int):
        self.num_cells = num_cells
        self.keys = np.empty(0, dtype=np.int64)
        self.flags = np.empty(0, dtype=np.uint8)
        self.seen = np.empty(0, dtype=np.int64)

    def lookup(self, q: np.ndarray) -> np.ndarray:
        out = np.zeros(len(q), dtype=np.uint8)
        if len(self.keys) and len(q):
            pos = np.searchsorted(self.keys, q)
            pos[pos == len(self.keys)] = 0
            hit = self.keys[pos] == q
            out[hit] = self.flags[pos[hit]]
        return out

    def replace(self, keys, flags, seen):
        self.keys, self.flags, self.seen = keys, flags, seen


class _DenseStore(_SparseStore):
    def __init__(self, num_cells: int):
        super().__init__(num_cells)
        self.volume = np.zeros(num_cells, dtype=np.uint8)

    def lookup(self, q: np.ndarray) -> np.ndarray:
        return self.volume[q]

    def replace(self, keys, flags, seen):
        self.volume[self.keys] = 0
        self.volume[keys] = flags
        super().replace(keys, flags, seen)


class OccupancyGrid3D:
    """Per-cell motion-state bookkeeping for one sensor stream.

    Parameters
    ----------
    cfg : GridConfig
        Bounds and side length; the mode is forced to 3D.
    storage : {"sparse", "dense"}
        Cell-state layout. Labels are identical for both.
    """

    def __init__(self, cfg: GridConfig, storage: str = "sparse"):
        self.cfg = cfg if cfg.mode is GridMode.GRID3D else cfg.with_mode(GridMode.GRID3D)
        if storage not in ("sparse", "dense"):
            raise InvalidConfig(f"unknown storage {storage!r}")
        self.storage = storage
        store_cls = _DenseStore if storage == "dense" else _SparseStore
        self._store = store_cls(self.cfg.num_cells)
        self.current_scan: Optional[int] = None
        self._curr = np.empty(0, dtype=np.int64)
        self._work = None  # (keys, flags, seen) while an ingest is in progress
        self._lo, self._hi, self._shape = geometry.grid_params(self.cfg)
        self._cells_buf, self._tin_buf = geometry._buffers(self.cfg)

    # -- queries ----------------------------------------------------------

    def __len__(self) -> int:
        """Number of cells holding any state."""
        return len(self._store.keys)

    def state(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Copies of (linear keys, flag bits, last-seen scan) of stored cells."""
        s = self._store
        return s.keys.copy(), s.flags.copy(), s.seen.copy()

    def cell(self, idx) -> Cell3D:
        lin = int(geometry.linear_index(np.array([tuple(idx)]), self.cfg)[0])
        s = self._store
        pos = np.searchsorted(s.keys, lin)
        curr = bool(len(self._curr)) and bool(np.isin(lin, self._curr))
        if pos < len(s.keys) and s.keys[pos] == lin:
            f = int(s.flags[pos])
            return Cell3D(bool(f & PREV), curr, bool(f & SHADOW), int(s.seen[pos]))
        return Cell3D(False, curr, False, None)

    def _cells_with(self, bit) -> list[CellIndex]:
        s = self._store
        sel = s.keys[(s.flags & bit) != 0]
        return [CellIndex(*map(int, r)) for r in geometry.unravel_index(sel, self.cfg)]

    def shadowed_cells(self) -> list[CellIndex]:
        return self._cells_with(SHADOW)

    def occupied_cells(self) -> list[CellIndex]:
        """Cells that count as occupied for the next scan's new-detection test."""
        return self._cells_with(PREV)

    @property
    def shadowed_count(self) -> int:
        return int(np.count_nonzero(self._store.flags & SHADOW))

    # -- state replacement (voxel shifting) ---------------------------------

    def replace_state(self, keys: np.ndarray, flags: np.ndarray, seen: np.ndarray) -> None:
        keys = np.asarray(keys, dtype=np.int64)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if len(keys) and (keys[0] < 0 or keys[-1] >= self.cfg.num_cells):
            raise ValueError("cell key out of grid range")
        if np.any(keys[1:] == keys[:-1]):
            raise ValueError("duplicate cell keys")
        self._store.replace(keys, np.asarray(flags, dtype=np.uint8)[order],
                            np.asarray(seen, dtype=np.int64)[order])
        self._curr = np.empty(0, dtype=np.int64)

    # -- ingest -----------------------------------------------------------

    def ingest(self, frame: ScanFrame) -> LabeledFrame:
        """Label one scan and advance the grid state."""
        if self.current_scan is not None and frame.scan_id <= self.current_scan:
            raise ScanOrderError(
                f"scan {frame.scan_id} does not follow scan {self.current_scan}")
        first = self.current_scan is None

        n = len(frame)
        lin = geometry.bin_points(frame.points, self.cfg)
        inside = lin >= 0
        occ, inv = np.unique(lin[inside], return_inverse=True)

        before = self._store.lookup(occ)
        labels = np.zeros(n, dtype=np.uint8)
        if not first:
            dyn_cell = (before & (PREV | SHADOW)) == 0
            labels[inside] = dyn_cell[inv].astype(np.uint8) * np.uint8(Label.DYNAMIC)
        flags = np.zeros(n, dtype=np.uint8)
        flags[~inside] = OUT_OF_RANGE

        self._begin(occ, frame.scan_id)
        self._echo_lin = lin
        newly = self.update_shadows()
        cleared = self.deshadow_see_through(frame)
        self._roll()
        self.current_scan = frame.scan_id

        ndyn = int(np.count_nonzero(labels))
        stats = FrameStats(
            dynamic_count=ndyn,
            static_count=n - ndyn,
            shadowed_cell_count=newly,
            deshadowed_cell_count=cleared,
        )
        return LabeledFrame(frame.scan_id, labels, flags, stats)

    def _begin(self, occ: np.ndarray, scan_id: int) -> None:
        s = self._store
        keys = np.union1d(s.keys, occ)
        flags = np.zeros(len(keys), dtype=np.uint8)
        seen = np.full(len(keys), -1, dtype=np.int64)
        old = np.searchsorted(keys, s.keys)
        flags[old] = s.flags
        seen[old] = s.seen
        cur = np.searchsorted(keys, occ)
        # re-observed cells lose their shadow
        flags[cur] = (flags[cur] & ~SHADOW) | CURR
        seen[cur] = scan_id
        self._work = (keys, flags, seen)
        self._curr = occ

    def update_shadows(self) -> int:
        """Shadow every cell occupied before but empty in the current scan.

        Returns the number of newly shadowed cells.
        """
        if self._work is None:
            raise RuntimeError("update_shadows needs a binned scan (call ingest)")
        _, flags, _ = self._work
        newly = ((flags & PREV) != 0) & ((flags & (CURR | SHADOW)) == 0)
        flags[newly] |= SHADOW
        return int(np.count_nonzero(newly))

    def deshadow_see_through(self, frame: ScanFrame) -> int:
        """Clear shadowed cells crossed by any sensor-to-echo line of sight.

        Returns the number of cells cleared.
        """
        if self._work is None:
            raise RuntimeError("deshadow_see_through needs a binned scan (call ingest)")
        keys, flags, _ = self._work
        shadowed = keys[(flags & SHADOW) != 0]
        if len(shadowed) == 0 or len(frame) == 0:
            return 0
        mask = np.zeros(self.cfg.num_cells, dtype=np.uint8)
        mask[shadowed] = 1
        hits = geometry.see_through_hits(
            np.asarray(frame.sensor_origin, dtype=np.float64), frame.points, self._echo_lin,
            self._lo, self._hi, self.cfg.side_length, self._shape, 3, mask,
            self._cells_buf, self._tin_buf)
        pos = np.searchsorted(keys, hits)
        flags[pos] &= ~(SHADOW | PREV)
        return len(hits)

    def _roll(self) -> None:
        keys, flags, seen = self._work
        occupied = (flags & (CURR | SHADOW)) != 0
        new_flags = np.where(occupied, PREV, np.uint8(0)) | (flags & SHADOW)
        keep = new_flags != 0
        self._store.replace(keys[keep], new_flags[keep].astype(np.uint8), seen[keep])
        self._work = None


def ingest_scan_3d(grid: OccupancyGrid3D, frame: ScanFrame) -> LabeledFrame:
    return grid.ingest(frame)
