"""Scenario builders shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from voxmotion.frames import ScanFrame
from voxmotion.geometry import GridConfig
from voxmotion.synth import Actor, Box, SceneSpec, SensorSpec, generate_scene

G = -1.75  # ground height used throughout


def narrow_sensor(az=(-20.0, 20.0), el=(-12.0, 6.0), naz=400, nel=80):
    return SensorSpec(azimuth_count=naz, elevation_count=nel, azimuth_min_deg=az[0],
                      azimuth_max_deg=az[1], elevation_min_deg=el[0], elevation_max_deg=el[1])


def hop(frames, moves):
    """Per-frame velocities (m/s at 10 Hz) that stay put except for jumps.

    ``moves`` maps frame index to the displacement applied on arrival there.
    """
    return [tuple(np.asarray(moves.get(k, (0.0, 0.0, 0.0))) * 10.0) for k in range(frames)]


def occluder_scene(frames=14, noise_sigma=0.0):
    """A static wall at x=30 with a box crossing in front of it along y.

    The wall face sits 1 um behind the x=30 cell boundary, so a ray hitting
    the face ends right after entering the face column instead of grazing
    neighbouring face cells. The occluder walks from y=-6 to y=+6 at x=15,
    hiding different wall columns over time.
    """
    wall = Box((30.0 + 1e-6, -4.9, G), (31.0, 5.0, 2.0))  # y and top on cell boundaries
    occ = Actor(Box((15.0, -6.5, G), (16.0, -5.5, 0.25)), [(0.0, 10.0, 0.0)])
    return SceneSpec(duration_frames=frames, ground_z=G, static_boxes=[wall], actors=[occ],
                     sensor=narrow_sensor(), noise_sigma=noise_sigma)


def deshadow_scene():
    """Object A sits at x~20, leaves at frame 3; B appears in the same spot at frame 5.

    A wall at x=40 keeps rays flying through A's former cells once it is gone.
    """
    wall = Box((40.0, -8.0, G), (41.0, 8.0, 3.0))
    body = Box((20.05, -0.95, G), (21.05, 0.95, 0.0))
    away = (0.0, 60.0, 0.0)
    a = Actor(body, hop(8, {3: away}))
    b = Actor(body.moved((0.0, -60.0, 0.0)), hop(8, {5: (0.0, 60.0, 0.0)}))
    return SceneSpec(duration_frames=8, ground_z=G, static_boxes=[wall], actors=[a, b],
                     sensor=narrow_sensor())


def resize_scene():
    """A truck (top at z=0.5) leaves at frame 3; a pedestrian (top -0.2) enters at frame 5
    in the truck's front-face cells."""
    wall = Box((40.0, -10.0, G), (41.0, 10.0, 3.0))
    truck = Actor(Box((20.0, -1.0, G), (25.0, 1.0, 0.5)), hop(8, {3: (0.0, 60.0, 0.0)}))
    ped = Actor(Box((20.0, -60.25, G), (20.5, -59.75, -0.2)), hop(8, {5: (0.0, 60.0, 0.0)}))
    return SceneSpec(duration_frames=8, ground_z=G, static_boxes=[wall], actors=[truck, ped],
                     sensor=narrow_sensor(naz=500, nel=120))


def static_scene_frames(frames=6, sigma=0.01, clip=2.5, side=0.15, ground_z=-1.675,
                        cfg: GridConfig | None = None):
    """Static street scene whose noise never moves an echo across a cell boundary.

    Noise is truncated at ``clip`` sigmas and every echo whose noise-free
    position lies within that margin of a cell boundary (x, y and z) is
    dropped in every frame. The ground sits mid-cell. This realises the
    precondition under which a static scene must produce no dynamic labels.
    """
    cfg = cfg or GridConfig(side_length=side)
    boxes = [
        Box((-50, 12.03, ground_z), (80, 14.0, 6.0)),
        Box((-50, -14.0, ground_z), (80, -12.03, 6.0)),
        Box((40.02, -4.02, ground_z), (42.0, 4.02, 1.2)),
        Box((18.04, 5.02, ground_z), (22.5, 7.0, -0.2)),
    ]
    sensor = SensorSpec(azimuth_count=900, elevation_count=48)
    base = SceneSpec(duration_frames=frames, ground_z=ground_z, static_boxes=boxes,
                     sensor=sensor, noise_sigma=0.0)
    clean, _, _ = generate_scene(base, seed=0)
    noisy_spec = SceneSpec(duration_frames=frames, ground_z=ground_z, static_boxes=boxes,
                           sensor=sensor, noise_sigma=sigma, noise_clip=clip)
    noisy, _, _ = generate_scene(noisy_spec, seed=7)
    margin = sigma * clip
    p = clean[0].points
    lo = cfg.lower
    frac = (p - lo) / cfg.side_length
    dist = np.abs(frac - np.round(frac)) * cfg.side_length
    keep = np.all(dist > margin + 1e-9, axis=1)
    out = [ScanFrame(f.scan_id, f.timestamp, f.points[keep], f.sensor_origin) for f in noisy]
    return out, keep


def ego_point_frames(frames=10, aligned=True, side=0.15, count=20000, seed=0):
    """World-fixed static points seen in full by an ego advancing one cell per frame.

    ``aligned`` puts every point on a cell center of the grid at frame 0;
    otherwise points are uniform inside their cells. Returns frames in the
    ego frame plus odometry (forward speed ``side`` per 0.1 s).
    """
    from voxmotion.ego_motion import OdometrySample

    rng = np.random.default_rng(seed)
    cells = np.column_stack([rng.integers(40, 200, count), rng.integers(100, 234, count),
                             rng.integers(5, 30, count)])
    cells = np.unique(cells, axis=0)
    lo = np.array([0.0, -25.0, -2.5])
    off = 0.5 if aligned else rng.uniform(0.0, 1.0, cells.shape)
    world = lo + (cells + off) * side
    speed = side * 10.0
    out, odo = [], []
    for k in range(frames):
        local = world - np.array([k * side, 0.0, 0.0])
        out.append(ScanFrame(k, k * 0.1, local))
        odo.append(OdometrySample(k * 0.1, (speed, 0.0, 0.0), (0.0, 0.0, 0.0)))
    return out, odo
