"""Reading and writing point-cloud sequences, odometry logs and results.

A sequence directory holds one file per frame whose name ends in the
zero-padded scan index (``frame_000012.csv``, ``000012.ply``), plus an
optional ``timestamps.csv`` manifest with header
``scan_id,timestamp[,origin_x,origin_y,origin_z]``. Frames missing from
the manifest are stamped at 10 Hz from their scan index.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .ego_motion import OdometrySample
from .errors import InconsistentSchema, NonMonotonicTimestamps, ParseError
from .frames import LabeledFrame, ScanFrame
from .synth import GroundTruth

MANIFEST = "timestamps.csv"
ODOMETRY = "odometry.csv"
TRUTH_DIR = "truth"
DEFAULT_RATE = 10.0  # Hz, used when no manifest entry exists

DYNAMIC_RGB = (255, 0, 255)
STATIC_RGB = (128, 128, 128)

_FRAME_RE = re.compile(r"(\d+)\.(csv|ply)$", re.IGNORECASE)
_FLOAT_FMT = "%.10g"


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _read_header(path: Path, text: str) -> tuple[list[str], str]:
    first, _, body = text.partition("\n")
    header = [h.strip().lower() for h in first.strip().split(",")]
    if not first.strip():
        raise ParseError(path, "missing header line", line=1)
    return header, body


def _parse_numeric(path: Path, body: str, ncols: int) -> np.ndarray:
    """Parse comma-separated numbers, reporting the first bad line on failure."""
    if not body.strip():
        return np.empty((0, ncols))
    try:
        data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2, dtype=np.float64)
        if data.shape[1] == ncols:
            return data
    except ValueError:
        pass
    for n, line in enumerate(body.splitlines(), start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != ncols:
            raise ParseError(path, f"expected {ncols} fields, found {len(fields)}", line=n)
        try:
            [float(f) for f in fields]
        except ValueError:
            raise ParseError(path, f"non-numeric value in {line.strip()!r}", line=n) from None
    raise ParseError(path, "could not parse numeric rows")


def _read_table(path: Path) -> tuple[list[str], str]:
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(path, f"not UTF-8 text ({exc.reason})") from None
    return _read_header(path, text)


def _check_finite(path: Path, data: np.ndarray) -> None:
    bad = ~np.isfinite(data).all(axis=1)
    if bad.any():
        raise ParseError(path, "non-finite value", line=int(np.argmax(bad)) + 2)


def _read_csv_points(path: Path) -> tuple[np.ndarray, Optional[np.ndarray], list[str]]:
    header, body = _read_table(path)
    if header not in (["x", "y", "z"], ["x", "y", "z", "intensity"]):
        raise ParseError(path, f"header must be x,y,z[,intensity], got {','.join(header)}", line=1)
    data = _parse_numeric(path, body, len(header))
    _check_finite(path, data)
    inten = data[:, 3].copy() if len(header) == 4 else None
    return data[:, :3].copy(), inten, header


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
}


def _read_ply_vertices(path: Path) -> np.ndarray:
    """Structured array of the vertex element of a binary little-endian PLY."""
    raw = path.read_bytes()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise ParseError(path, "not a PLY file")
    nl = raw.find(b"\n", end)
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements: list[tuple[str, int, list]] = []
    for n, line in enumerate(header, start=1):
        parts = line.split()
        if not parts or parts[0] in ("ply", "comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1] if len(parts) > 1 else ""
        elif parts[0] == "element" and len(parts) == 3:
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property" and elements:
            if parts[1] == "list":
                raise ParseError(path, "list properties are not supported", line=n)
            if len(parts) != 3 or parts[1] not in _PLY_TYPES:
                raise ParseError(path, f"bad property line {line!r}", line=n)
            elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
        else:
            raise ParseError(path, f"unexpected header line {line!r}", line=n)
    if fmt != "binary_little_endian":
        raise ParseError(path, f"only binary_little_endian PLY is supported, got {fmt}")
    if not elements or elements[0][0] != "vertex":
        raise ParseError(path, "first element must be 'vertex'")
    _, count, props = elements[0]
    dtype = np.dtype(props)
    names = set(dtype.names or ())
    if not {"x", "y", "z"} <= names:
        raise InconsistentSchema(path, "vertex element lacks x, y or z")
    for a in "xyz":
        if dtype[a].kind != "f":
            raise InconsistentSchema(path, f"property {a} must be float or double")
    body = raw[nl + 1:]
    if len(body) < count * dtype.itemsize:
        raise ParseError(path, f"truncated: {count} vertices declared, "
                               f"{len(body) // dtype.itemsize} present")
    return np.frombuffer(body, dtype=dtype, count=count)


def _read_ply_points(path: Path) -> tuple[np.ndarray, Optional[np.ndarray], list[str]]:
    v = _read_ply_vertices(path)
    pts = np.column_stack([v["x"], v["y"], v["z"]]).astype(np.float64)
    if not np.isfinite(pts).all():
        raise ParseError(path, "non-finite vertex coordinates")
    inten = v["intensity"].astype(np.float64) if "intensity" in v.dtype.names else None
    schema = ["x", "y", "z"] + (["intensity"] if inten is not None else [])
    return pts, inten, schema


def _write_ply(path: Path, columns: Sequence[tuple[str, str, np.ndarray]]) -> None:
    """Write a vertex-only binary little-endian PLY from (name, ply type, values)."""
    n = len(columns[0][2]) if columns else 0
    dtype = np.dtype([(name, _PLY_TYPES[t]) for name, t, _ in columns])
    rec = np.empty(n, dtype=dtype)
    for name, _, values in columns:
        rec[name] = values
    head = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    head += [f"property {t} {name}" for name, t, _ in columns]
    head.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------


def frame_files(directory: Path) -> list[tuple[int, Path]]:
    """Per-frame files of a directory sorted by the scan index in their names."""
    found = []
    for p in Path(directory).iterdir():
        m = _FRAME_RE.search(p.name)
        if p.is_file() and m and p.name not in (MANIFEST, ODOMETRY):
            found.append((int(m.group(1)), p))
    found.sort()
    for (a, pa), (b, pb) in zip(found, found[1:]):
        if a == b:
            raise InconsistentSchema(pb, f"scan index {b} also used by {pa.name}")
    return found


def read_manifest(path) -> dict[int, tuple[float, tuple]]:
    """Map scan id -> (timestamp, sensor origin) from a manifest file."""
    path = Path(path)
    header, body = _read_table(path)
    if header not in (["scan_id", "timestamp"],
                      ["scan_id", "timestamp", "origin_x", "origin_y", "origin_z"]):
        raise ParseError(path, "header must be scan_id,timestamp[,origin_x,origin_y,origin_z]",
                         line=1)
    data = _parse_numeric(path, body, len(header))
    _check_finite(path, data)
    out = {}
    for row in data:
        origin = tuple(row[2:5]) if len(header) == 5 else (0.0, 0.0, 0.0)
        out[int(row[0])] = (float(row[1]), origin)
    return out


def read_point_cloud_sequence(path) -> list[ScanFrame]:
    """Load a sequence from a frame directory or a single file.

    A single CSV file must carry a ``scan_id`` column (header
    ``scan_id,[timestamp,]x,y,z[,intensity]``); a single PLY file is one frame
    with scan id 0.

    Raises
    ------
    ParseError
        Malformed file, with path and line where known.
    InconsistentSchema
        Frames of one sequence disagree on format or columns.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(path, "no such file or directory")
    if path.is_file():
        if path.suffix.lower() == ".ply":
            pts, inten, _ = _read_ply_points(path)
            return [ScanFrame(0, 0.0, pts, intensity=inten)]
        return _read_multi_frame_csv(path)

    files = frame_files(path)
    manifest = read_manifest(path / MANIFEST) if (path / MANIFEST).exists() else {}
    frames, schema, kind = [], None, None
    for scan_id, f in files:
        suffix = f.suffix.lower()
        if kind is None:
            kind = suffix
        elif suffix != kind:
            raise InconsistentSchema(f, f"mixes {kind} and {suffix} frame files")
        reader = _read_ply_points if suffix == ".ply" else _read_csv_points
        pts, inten, cols = reader(f)
        if schema is None:
            schema = cols
        elif cols != schema:
            raise InconsistentSchema(f, f"columns {','.join(cols)} differ from "
                                        f"{','.join(schema)} of earlier frames")
        ts, origin = manifest.get(scan_id, (scan_id / DEFAULT_RATE, (0.0, 0.0, 0.0)))
        frames.append(ScanFrame(scan_id, ts, pts, origin, inten))
    return frames


def _read_multi_frame_csv(path: Path) -> list[ScanFrame]:
    header, body = _read_table(path)
    allowed = {"scan_id", "timestamp", "x", "y", "z", "intensity"}
    if not {"scan_id", "x", "y", "z"} <= set(header) or not set(header) <= allowed \
            or len(set(header)) != len(header):
        raise ParseError(path, "header must hold scan_id,x,y,z and optionally "
                               "timestamp and intensity", line=1)
    data = _parse_numeric(path, body, len(header))
    _check_finite(path, data)
    col = {h: n for n, h in enumerate(header)}
    sid = data[:, col["scan_id"]]
    if np.any(sid != np.round(sid)):
        raise ParseError(path, "scan_id must be an integer",
                         line=int(np.argmax(sid != np.round(sid))) + 2)
    frames = []
    for s in np.unique(sid.astype(np.int64)):
        rows = data[sid == s]
        ts = float(rows[0, col["timestamp"]]) if "timestamp" in col else s / DEFAULT_RATE
        inten = rows[:, col["intensity"]] if "intensity" in col else None
        pts = rows[:, [col["x"], col["y"], col["z"]]]
        frames.append(ScanFrame(int(s), ts, pts, intensity=inten))
    return frames


def write_point_cloud(frame: ScanFrame, path, fmt: Optional[str] = None) -> None:
    """Write the echoes of one frame as CSV or PLY (chosen by suffix if ``fmt`` is None)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "ply":
        cols = [(a, "double", frame.points[:, n]) for n, a in enumerate("xyz")]
        if frame.intensity is not None:
            cols.append(("intensity", "double", frame.intensity))
        _write_ply(path, cols)
    elif fmt == "csv":
        header = "x,y,z" + (",intensity" if frame.intensity is not None else "")
        data = frame.points if frame.intensity is None else \
            np.column_stack([frame.points, frame.intensity])
        np.savetxt(path, data, fmt=_FLOAT_FMT, delimiter=",", header=header, comments="")
    else:
        raise ValueError(f"unknown point-cloud format {fmt!r}")


def write_sequence(frames: Iterable[ScanFrame], directory, fmt: str = "csv") -> None:
    """Write frames plus a timestamp manifest into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for f in frames:
        write_point_cloud(f, directory / f"frame_{f.scan_id:06d}.{fmt}", fmt)
        rows.append((f.scan_id, f.timestamp, *f.sensor_origin))
    with open(directory / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scan_id,timestamp,origin_x,origin_y,origin_z\n")
        for sid, ts, ox, oy, oz in rows:
            fh.write(f"{sid},{ts!r},{ox!r},{oy!r},{oz!r}\n")


# ---------------------------------------------------------------------------
# odometry
# ---------------------------------------------------------------------------

_ODO_HEADER = ["t", "vx", "vy", "vz", "wx", "wy", "wz"]


def read_odometry(path) -> list[OdometrySample]:
    """Read a ``t,vx,vy,vz,wx,wy,wz`` log (s, m/s, rad/s).

    Raises
    ------
    NonMonotonicTimestamps
        Timestamps are not strictly increasing in file order.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(path, "odometry file not found")
    header, body = _read_table(path)
    if header != _ODO_HEADER:
        raise ParseError(path, f"header must be {','.join(_ODO_HEADER)}", line=1)
    data = _parse_numeric(path, body, 7)
    _check_finite(path, data)
    t = data[:, 0]
    back = np.flatnonzero(np.diff(t) <= 0)
    if len(back):
        raise NonMonotonicTimestamps(path, f"timestamp {t[back[0] + 1]!r} does not follow "
                                           f"{t[back[0]]!r}", line=int(back[0]) + 3)
    return [OdometrySample(float(r[0]), tuple(map(float, r[1:4])), tuple(map(float, r[4:7])))
            for r in data]


def write_odometry(samples: Iterable[OdometrySample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_ODO_HEADER) + "\n")
        for s in samples:
            fh.write(",".join(repr(float(v)) for v in (s.timestamp, *s.v, *s.w)) + "\n")


# ---------------------------------------------------------------------------
# labelled output
# ---------------------------------------------------------------------------


def write_labeled_cloud(frame: LabeledFrame, scan: ScanFrame, path, fmt: Optional[str] = None) -> None:
    """Write echoes with their labels.

    CSV gets ``label`` (static|dynamic) and ``flags`` columns. PLY gets
    uchar ``red, green, blue`` (magenta for dynamic, gray for static) and
    uchar ``label, flags`` so the file can be evaluated later.
    """
    if len(frame) != len(scan):
        raise ValueError(f"{len(frame)} labels for {len(scan)} echoes")
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    dyn = frame.dynamic_mask
    if fmt == "ply":
        rgb = np.where(dyn[:, None], DYNAMIC_RGB, STATIC_RGB).astype(np.uint8)
        cols = [(a, "double", scan.points[:, n]) for n, a in enumerate("xyz")]
        if scan.intensity is not None:
            cols.append(("intensity", "double", scan.intensity))
        cols += [("red", "uchar", rgb[:, 0]), ("green", "uchar", rgb[:, 1]),
                 ("blue", "uchar", rgb[:, 2]), ("label", "uchar", frame.labels),
                 ("flags", "uchar", frame.flags)]
        _write_ply(path, cols)
    elif fmt == "csv":
        has_i = scan.intensity is not None
        names = np.where(dyn, "dynamic", "static")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,y,z" + (",intensity" if has_i else "") + ",label,flags\n")
            nums = scan.points if not has_i else np.column_stack([scan.points, scan.intensity])
            num_txt = np.char.mod(_FLOAT_FMT, nums)
            lines = [",".join(r) for r in num_txt]
            fh.writelines(f"{ln},{lab},{fl}\n" for ln, lab, fl in zip(lines, names, frame.flags))
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def read_labeled_cloud(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back (points, labels, flags) written by ``write_labeled_cloud``."""
    path = Path(path)
    if path.suffix.lower() == ".ply":
        v = _read_ply_vertices(path)
        pts = np.column_stack([v["x"], v["y"], v["z"]]).astype(np.float64)
        if "label" in v.dtype.names:
            labels = v["label"].astype(np.uint8)
        else:
            rgb = np.column_stack([v["red"], v["green"], v["blue"]])
            labels = np.all(rgb == DYNAMIC_RGB, axis=1).astype(np.uint8)
        flags = v["flags"].astype(np.uint8) if "flags" in v.dtype.names \
            else np.zeros(len(v), np.uint8)
        return pts, labels, flags
    header, body = _read_table(path)
    if header[:3] != ["x", "y", "z"] or header[-2:] != ["label", "flags"]:
        raise ParseError(path, "header must be x,y,z[,intensity],label,flags", line=1)
    lines = body.splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        return np.empty((0, 3)), np.empty(0, np.uint8), np.empty(0, np.uint8)
    nnum = len(header) - 2
    try:
        txt = np.array([ln.split(",") for ln in lines])
    except ValueError:
        txt = None
    if txt is None or txt.ndim != 2 or txt.shape[1] != len(header):
        for n, ln in enumerate(lines, start=2):
            if len(ln.split(",")) != len(header):
                raise ParseError(path, f"expected {len(header)} fields", line=n)
    lab_txt = np.char.strip(txt[:, nnum])
    bad = ~np.isin(lab_txt, ["static", "dynamic"])
    if bad.any():
        raise ParseError(path, f"label must be static or dynamic, got {lab_txt[bad][0]!r}",
                         line=int(np.argmax(bad)) + 2)
    try:
        pts = txt[:, :3].astype(np.float64)
        flags = txt[:, nnum + 1].astype(np.uint8)
    except ValueError as exc:
        raise ParseError(path, f"bad numeric field ({exc})") from None
    return pts, (lab_txt == "dynamic").astype(np.uint8), flags


def read_label_sequence(directory) -> list[np.ndarray]:
    """Per-frame label arrays of a ``run`` output directory, in scan order."""
    return [read_labeled_cloud(p)[1] for _, p in frame_files(Path(directory))]


# ---------------------------------------------------------------------------
# ground truth and statistics
# ---------------------------------------------------------------------------


def write_truth(truth: GroundTruth, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, (dyn, aid) in enumerate(zip(truth.is_dynamic, truth.actor_id)):
        np.savetxt(directory / f"truth_{k:06d}.csv",
                   np.column_stack([np.asarray(dyn, dtype=np.int64), aid]).reshape(-1, 2),
                   fmt="%d", delimiter=",", header="is_dynamic,actor_id", comments="")


def read_truth(directory) -> GroundTruth:
    """Load truth files; ``directory`` may also be a sequence dir holding ``truth/``."""
    directory = Path(directory)
    if (directory / TRUTH_DIR).is_dir():
        directory = directory / TRUTH_DIR
    if not directory.is_dir():
        raise ParseError(directory, "truth directory not found")
    dyn, ids = [], []
    for _, p in frame_files(directory):
        header, body = _read_table(p)
        if header != ["is_dynamic", "actor_id"]:
            raise ParseError(p, "header must be is_dynamic,actor_id", line=1)
        data = _parse_numeric(p, body, 2)
        dyn.append(data[:, 0] != 0)
        ids.append(data[:, 1].astype(np.int64))
    return GroundTruth(dyn, ids)


def write_stats(frames: Iterable[LabeledFrame], path) -> None:
    """One JSON record per frame."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lf in frames:
            fh.write(json.dumps({"scan_id": lf.scan_id, **lf.stats.as_dict()}) + "\n")
