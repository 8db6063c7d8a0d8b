"""Synthetic LiDAR sequences with per-echo ground truth, and scoring.

Scenes are a ground plane plus axis-aligned boxes. Static boxes never move;
actors translate with a (piecewise) constant velocity per frame. The sensor
rides on an ego vehicle whose pose is integrated from the same odometry that
is handed to the pipeline, so compensation can be exact.

Every ray returns its nearest intersection only, which is what produces the
occlusion and shadow situations the grids have to cope with.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ego_motion import OdometrySample, Transform, ego_displacement
from .errors import InvalidSpec, LengthMismatch
from .frames import Label, LabeledFrame, ScanFrame

KMH = 1 / 3.6


@dataclass
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        self.lo = tuple(float(v) for v in self.lo)
        self.hi = tuple(float(v) for v in self.hi)
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise InvalidSpec("box corners need three coordinates")
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise InvalidSpec(f"box {self.lo}..{self.hi} has a non-positive extent")

    def moved(self, offset) -> "Box":
        return Box(tuple(np.add(self.lo, offset)), tuple(np.add(self.hi, offset)))


@dataclass
class Actor:
    """A moving box. ``velocity`` is one m/s vector, or one per frame."""

    box: Box
    velocity: list

    def __post_init__(self):
        if isinstance(self.box, dict):
            self.box = Box(**self.box)
        v = np.asarray(self.velocity, dtype=np.float64)
        if v.shape == (3,):
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidSpec("actor velocity must be a 3-vector or a list of them")
        self.velocity = [tuple(map(float, r)) for r in v]

    def velocity_at(self, frame: int) -> np.ndarray:
        return np.array(self.velocity[min(frame, len(self.velocity) - 1)])


@dataclass
class SensorSpec:
    azimuth_count: int = 2500
    elevation_count: int = 64
    azimuth_min_deg: float = -90.0
    azimuth_max_deg: float = 90.0
    elevation_min_deg: float = -25.0
    elevation_max_deg: float = 3.0
    max_range: float = 100.0
    origin: tuple = (0.0, 0.0, 0.0)  # mount point in the ego frame

    def directions(self) -> np.ndarray:
        """Unit ray directions in the ego frame, elevation-major."""
        az = np.deg2rad(np.linspace(self.azimuth_min_deg, self.azimuth_max_deg, self.azimuth_count,
                                    endpoint=self.azimuth_max_deg - self.azimuth_min_deg < 360))
        el = np.deg2rad(np.linspace(self.elevation_min_deg, self.elevation_max_deg, self.elevation_count))
        e, a = np.meshgrid(el, az, indexing="ij")
        return np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1).reshape(-1, 3)


@dataclass
class SceneSpec:
    duration_frames: int = 10
    frame_rate: float = 10.0
    ground_z: float = -1.75
    static_boxes: list = field(default_factory=list)
    actors: list = field(default_factory=list)
    ego_trajectory: list = field(default_factory=list)  # OdometrySample per frame
    sensor: SensorSpec = field(default_factory=SensorSpec)
    noise_sigma: float = 0.0
    noise_clip: Optional[float] = None  # truncate noise at this many sigmas

    def __post_init__(self):
        self.static_boxes = [b if isinstance(b, Box) else Box(**b) for b in self.static_boxes]
        self.actors = [a if isinstance(a, Actor) else Actor(**a) for a in self.actors]
        self.ego_trajectory = [o if isinstance(o, OdometrySample) else OdometrySample(**o)
                               for o in self.ego_trajectory]
        if isinstance(self.sensor, dict):
            self.sensor = SensorSpec(**self.sensor)
        self.validate()

    def validate(self) -> None:
        if self.duration_frames < 0:
            raise InvalidSpec("duration_frames must be >= 0")
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise InvalidSpec("frame_rate must be positive")
        if self.noise_sigma < 0 or (self.noise_clip is not None and self.noise_clip <= 0):
            raise InvalidSpec("noise_sigma must be >= 0 and noise_clip > 0")
        s = self.sensor
        if s.azimuth_count < 1 or s.elevation_count < 1 or s.max_range <= 0:
            raise InvalidSpec("sensor needs at least one ray and a positive max range")
        if self.ego_trajectory and len(self.ego_trajectory) < self.duration_frames:
            raise InvalidSpec("ego_trajectory must list one odometry sample per frame")

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        try:
            d = dict(d)
            ego = d.pop("ego", None)
            spec = cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from exc
        if ego is not None:
            spec.ego_trajectory = constant_ego(spec.duration_frames, spec.frame_rate,
                                               ego.get("v", (0, 0, 0)), ego.get("w", (0, 0, 0)))
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ego_trajectory"] = [asdict(o) for o in self.ego_trajectory]
        return d


def constant_ego(frames: int, rate: float, v=(0.0, 0.0, 0.0), w=(0.0, 0.0, 0.0)) -> list:
    return [OdometrySample(k / rate, tuple(map(float, v)), tuple(map(float, w)))
            for k in range(frames)]


@dataclass
class GroundTruth:
    is_dynamic: list  # per frame, bool array aligned with echoes
    actor_id: list  # per frame, int array; -1 for ground/static

    def __len__(self) -> int:
        return len(self.is_dynamic)


def _ray_cast(origin: np.ndarray, dirs: np.ndarray, boxes: Sequence[Box], ground_z: float,
              max_range: float):
    """Nearest hit distance per ray and the index of the surface hit.

    Surface index -1 is the ground, ``len(boxes)`` or more never occurs;
    rays without a hit within ``max_range`` get distance inf.
    """
    n = len(dirs)
    best = np.full(n, np.inf)
    which = np.full(n, -2, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        dz = dirs[:, 2]
        tg = np.where(dz < 0, (ground_z - origin[2]) / dz, np.inf)
        tg[~(tg > 0)] = np.inf
        hit = tg < best
        best[hit] = tg[hit]
        which[hit] = -1
        inv = 1.0 / dirs
        for b, box in enumerate(boxes):
            lo = np.asarray(box.lo)
            hi = np.asarray(box.hi)
            t1 = (lo - origin) * inv
            t2 = (hi - origin) * inv
            # an axis-parallel ray inside the slab gives nan; treat as unbounded
            tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
            tmax = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
            near = tmin.max(axis=1)
            far = tmax.min(axis=1)
            ok = (near <= far) & (near > 0) & (near < best)
            best[ok] = near[ok]
            which[ok] = b
    best[best > max_range] = np.inf
    return best, which


def ego_poses(spec: SceneSpec) -> list[Transform]:
    """World pose of the ego frame at every frame (frame 0 is the world)."""
    poses = [Transform.identity()]
    for k in range(1, spec.duration_frames):
        odo = spec.ego_trajectory[k] if spec.ego_trajectory else OdometrySample(k * spec.dt)
        poses.append(poses[-1].compose(ego_displacement(odo, spec.dt)))
    return poses[: spec.duration_frames]


def actor_offsets(actor: Actor, frames: int, dt: float) -> np.ndarray:
    """Cumulative displacement of an actor at each frame."""
    off = np.zeros((max(frames, 1), 3))
    for k in range(1, frames):
        off[k] = off[k - 1] + actor.velocity_at(k) * dt
    return off[:frames]


def generate_scene(spec: SceneSpec, seed: int = 0):
    """Render a sequence.

    Returns
    -------
    frames : list of ScanFrame
        Echoes in the ego frame of their sweep.
    truth : GroundTruth
    odometry : list of OdometrySample
        One per frame, stamped with the frame time; sample k describes the
        motion from frame k-1 to k.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    dirs_ego = spec.sensor.directions()
    mount = np.asarray(spec.sensor.origin, dtype=np.float64)
    poses = ego_poses(spec)
    offsets = [actor_offsets(a, spec.duration_frames, spec.dt) for a in spec.actors]
    nstatic = len(spec.static_boxes)

    frames, dyn, ids = [], [], []
    for k in range(spec.duration_frames):
        pose = poses[k]
        origin = pose.r @ mount + pose.t
        dirs = dirs_ego @ pose.r.T
        boxes = list(spec.static_boxes) + [a.box.moved(offsets[i][k]) for i, a in enumerate(spec.actors)]
        dist, which = _ray_cast(origin, dirs, boxes, spec.ground_z, spec.sensor.max_range)
        keep = np.isfinite(dist)
        world = origin + dirs[keep] * dist[keep, None]
        local = (world - pose.t) @ pose.r  # inverse pose: r^T (p - t)
        if spec.noise_sigma > 0:
            noise = rng.normal(0.0, spec.noise_sigma, size=local.shape)
            if spec.noise_clip is not None:
                lim = spec.noise_clip * spec.noise_sigma
                noise = np.clip(noise, -lim, lim)
            local = local + noise
        w = which[keep]
        actor = np.where(w >= nstatic, w - nstatic, -1)
        frames.append(ScanFrame(k, k * spec.dt, local, tuple(mount)))
        dyn.append(actor >= 0)
        ids.append(actor)

    if spec.ego_trajectory:
        odometry = [OdometrySample(k * spec.dt, spec.ego_trajectory[k].v, spec.ego_trajectory[k].w)
                    for k in range(spec.duration_frames)]
    else:
        odometry = constant_ego(spec.duration_frames, spec.frame_rate)
    return frames, GroundTruth(dyn, ids), odometry


@dataclass
class Metrics:
    precision: float
    recall: float
    iou: float
    tp: int
    fp: int
    fn: int
    tn: int
    zero_tp: bool

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(labels: Sequence, truth: GroundTruth, warmup_frames: int = 2) -> Metrics:
    """Dynamic-class precision, recall and IoU over frames after the warmup.

    ``labels`` holds LabeledFrames or plain per-echo label arrays. With no
    true positives every ratio is reported as 0 and ``zero_tp`` is set.
    """
    if len(labels) != len(truth):
        raise LengthMismatch(f"{len(labels)} labelled frames vs {len(truth)} truth frames")
    tp = fp = fn = tn = 0
    for k in range(warmup_frames, len(labels)):
        lab = labels[k].labels if isinstance(labels[k], LabeledFrame) else np.asarray(labels[k])
        pred = lab == Label.DYNAMIC
        gt = np.asarray(truth.is_dynamic[k], dtype=bool)
        if pred.shape != gt.shape:
            raise LengthMismatch(f"frame {k}: {len(pred)} labels vs {len(gt)} truth echoes")
        tp += int(np.count_nonzero(pred & gt))
        fp += int(np.count_nonzero(pred & ~gt))
        fn += int(np.count_nonzero(~pred & gt))
        tn += int(np.count_nonzero(~pred & ~gt))
    if tp == 0:
        return Metrics(0.0, 0.0, 0.0, tp, fp, fn, tn, True)
    return Metrics(tp / (tp + fp), tp / (tp + fn), tp / (tp + fp + fn), tp, fp, fn, tn, False)


# ---------------------------------------------------------------------------
# ready-made scenes
# ---------------------------------------------------------------------------


def street_scene(frames: int = 20, actors: int = 5, noise_sigma: float = 0.02,
                 azimuth_count: int = 2500, elevation_count: int = 64,
                 ego_speed: float = 0.0, seed: int = 0) -> SceneSpec:
    """Straight road with buildings, parked cars, poles and moving traffic.

    Actors drive along x in lanes either side of the ego at 30-60 km/h,
    alternating towards and away from the sensor; ``seed`` only varies their
    speeds and start positions.
    """
    rng = np.random.default_rng(seed)
    g = -1.75
    static = [
        Box((-200, 12.0, g), (200, 14.0, g + 8.0)),  # building rows
        Box((-200, -14.0, g), (200, -12.0, g + 8.0)),
        Box((68.0, -12.0, g), (70.0, 12.0, g + 6.0)),  # far wall
        Box((15.0, 9.0, g), (19.5, 10.8, g + 1.5)),  # parked cars
        Box((32.0, -10.8, g), (36.5, -9.0, g + 1.5)),
        Box((48.0, 9.2, g), (52.5, 11.0, g + 1.6)),
    ]
    static += [Box((x, 8.2, g), (x + 0.3, 8.5, g + 4.0)) for x in (10.0, 25.0, 40.0, 55.0)]
    lanes = [-7.0, -3.5, 3.5, 7.0]
    movers = []
    for a in range(actors):
        lane = lanes[a % len(lanes)]
        speed = rng.uniform(30.0, 60.0) * KMH
        length, width, height = rng.uniform(4.0, 5.0), 1.8, rng.uniform(1.4, 1.9)
        towards = a % 2 == 0
        x0 = rng.uniform(30.0, 55.0) if towards else rng.uniform(8.0, 25.0)
        x0 += (a // len(lanes)) * 12.0
        box = Box((x0, lane - width / 2, g), (x0 + length, lane + width / 2, g + height))
        movers.append(Actor(box, [(-speed if towards else speed, 0.0, 0.0)]))
    return SceneSpec(
        duration_frames=frames,
        frame_rate=10.0,
        ground_z=g,
        static_boxes=static,
        actors=movers,
        ego_trajectory=constant_ego(frames, 10.0, (ego_speed, 0.0, 0.0)) if ego_speed else [],
        sensor=SensorSpec(azimuth_count=azimuth_count, elevation_count=elevation_count),
        noise_sigma=noise_sigma,
    )
