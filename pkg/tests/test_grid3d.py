import numpy as np
import pytest

from oracles import BruteGrid3D
from voxmotion.errors import InvalidConfig, ScanOrderError
from voxmotion.frames import OUT_OF_RANGE, Label, ScanFrame
from voxmotion.geometry import GridConfig, cell_center, linear_index
from voxmotion.grid3d import OccupancyGrid3D, ingest_scan_3d

UNIT = GridConfig(0, 6, 0, 6, 0, 3, 1.0)


def frame(scan_id, pts, origin=(0.0, 0.0, 0.0)):
    return ScanFrame(scan_id, 0.1 * scan_id, np.asarray(pts, dtype=float).reshape(-1, 3), origin)


def centers(*cells, cfg=UNIT):
    return [cell_center(c, cfg) for c in cells]


@pytest.fixture(params=["sparse", "dense"])
def grid(request):
    return OccupancyGrid3D(UNIT, storage=request.param)


def test_first_scan_is_static(grid):
    lf = grid.ingest(frame(0, centers((1, 1, 0), (2, 3, 1))))
    assert list(lf.labels) == [Label.STATIC, Label.STATIC]
    assert lf.stats.static_count == 2 and lf.stats.dynamic_count == 0


def test_repeated_scan_is_static(grid):
    pts = centers((1, 1, 0), (2, 3, 1), (5, 5, 2))
    grid.ingest(frame(0, pts))
    assert not grid.ingest(frame(1, pts)).labels.any()


def test_new_detection_two_objects_move():
    # objects sit in (0/2) and (2/1) at t_n and move into (0/1) and (2/0) at t_n+1
    g = OccupancyGrid3D(UNIT)
    origin = (0.5, 5.5, 0.5)
    g.ingest(frame(0, centers((0, 2, 0), (2, 1, 0), (4, 4, 0)), origin))
    lf = g.ingest(frame(1, centers((0, 1, 0), (2, 0, 0), (4, 4, 0)), origin))
    assert list(lf.labels) == [1, 1, 0]


def test_all_echoes_of_dynamic_cell_share_label():
    g = OccupancyGrid3D(UNIT)
    g.ingest(frame(0, centers((5, 5, 0))))
    c = np.array(cell_center((3, 3, 1), UNIT))
    lf = g.ingest(frame(1, [c, c + 0.2, c - 0.3, cell_center((5, 5, 0), UNIT)]))
    assert list(lf.labels) == [1, 1, 1, 0]


def test_out_of_bounds_echoes_static_and_flagged(grid):
    grid.ingest(frame(0, centers((1, 1, 1))))
    lf = grid.ingest(frame(1, [(7.0, 1.0, 1.0), (1.5, 1.5, 1.5), (1.0, 1.0, 3.0)]))
    assert list(lf.labels) == [0, 0, 0]
    assert list(lf.flags) == [OUT_OF_RANGE, 0, OUT_OF_RANGE]


def test_scan_order_enforced(grid):
    grid.ingest(frame(3, centers((1, 1, 1))))
    with pytest.raises(ScanOrderError):
        grid.ingest(frame(3, centers((1, 1, 1))))
    with pytest.raises(ScanOrderError):
        grid.ingest(frame(2, centers((1, 1, 1))))


def test_unknown_storage():
    with pytest.raises(InvalidConfig):
        OccupancyGrid3D(UNIT, storage="hash")


def test_empty_frames(grid):
    grid.ingest(frame(0, centers((1, 1, 1))))
    lf = grid.ingest(frame(1, np.empty((0, 3))))
    assert len(lf) == 0 and lf.stats.shadowed_cell_count == 1


# -- shadowing ---------------------------------------------------------------

# sensor at the left of the x axis; an occluder cell at x=1 hides the wall cell at x=4
ORIGIN = (0.5, 2.5, 0.5)
WALL = (4, 2, 0)
OCCLUDER = (1, 2, 0)


def test_shadowed_wall_reappears_static(grid):
    grid.ingest(frame(0, centers(WALL), ORIGIN))
    lf = grid.ingest(frame(1, centers(OCCLUDER), ORIGIN))  # occluder enters, wall hidden
    assert list(lf.labels) == [1]
    assert lf.stats.shadowed_cell_count == 1
    assert grid.cell(WALL).shadowed and not grid.cell(WALL).occupied_curr
    lf = grid.ingest(frame(2, centers(WALL), ORIGIN))  # occluder gone
    assert list(lf.labels) == [0]
    assert not grid.cell(WALL).shadowed


def test_never_occupied_never_shadowed(grid):
    grid.ingest(frame(0, centers((1, 1, 1)), ORIGIN))
    grid.ingest(frame(1, centers((1, 1, 1)), ORIGIN))
    assert grid.shadowed_cells() == []
    assert not grid.cell((3, 3, 2)).shadowed


def test_shadow_persists_across_long_occlusion(grid):
    for s in range(1, 6):
        grid.ingest(frame(s, centers(WALL, OCCLUDER), ORIGIN))
    for s in range(6, 21):
        grid.ingest(frame(s, centers(OCCLUDER), ORIGIN))
        assert grid.cell(WALL).shadowed
        assert grid.cell(WALL).last_seen_scan == 5
    lf = grid.ingest(frame(21, centers(WALL, OCCLUDER), ORIGIN))
    assert list(lf.labels) == [0, 0]


def test_cell_invariants_after_ingest(grid):
    grid.ingest(frame(0, centers(WALL, (2, 4, 1)), ORIGIN))
    grid.ingest(frame(1, centers(OCCLUDER, (2, 4, 1)), ORIGIN))
    for c in [WALL, OCCLUDER, (2, 4, 1), (0, 0, 0)]:
        st = grid.cell(c)
        if st.shadowed:
            assert not st.occupied_curr and st.last_seen_scan is not None
    assert grid.cell(OCCLUDER).occupied_curr


# -- de-shadowing ------------------------------------------------------------


def test_deshadow_lets_new_object_be_detected(grid):
    box, back = (2, 2, 0), (5, 2, 0)
    grid.ingest(frame(0, centers(box), ORIGIN))  # box hides the back wall
    lf = grid.ingest(frame(1, centers(back), ORIGIN))  # box gone, ray pierces its cell
    assert lf.stats.shadowed_cell_count == 1 and lf.stats.deshadowed_cell_count == 1
    assert not grid.cell(box).shadowed and not grid.cell(box).occupied_prev
    lf = grid.ingest(frame(2, centers(box, back), ORIGIN))
    assert list(lf.labels) == [1, 0]


def test_without_see_through_ray_shadow_hides_new_object(grid):
    box = (2, 2, 0)
    grid.ingest(frame(0, centers(box), ORIGIN))
    lf = grid.ingest(frame(1, centers((2, 5, 2)), ORIGIN))  # ray elsewhere
    assert lf.stats.deshadowed_cell_count == 0
    assert grid.cell(box).shadowed
    assert list(grid.ingest(frame(2, centers(box), ORIGIN)).labels) == [0]


def test_deshadow_stops_before_echo_cell(grid):
    # a shadowed cell that now holds the echo itself is re-observed, not pierced
    c = (3, 2, 0)
    grid.ingest(frame(0, centers(c, (1, 2, 0)), ORIGIN))
    grid.ingest(frame(1, centers((1, 2, 0)), ORIGIN))
    assert grid.cell(c).shadowed
    lf = grid.ingest(frame(2, centers(c), ORIGIN))
    assert lf.stats.deshadowed_cell_count == 1  # only the vacated (1,2,0)
    assert list(lf.labels) == [0]


def test_no_shadows_no_deshadow(grid):
    grid.ingest(frame(0, centers((3, 3, 1)), ORIGIN))
    before = grid.state()
    lf = grid.ingest(frame(1, centers((3, 3, 1)), ORIGIN))
    assert lf.stats.deshadowed_cell_count == 0
    after = grid.state()
    assert all(np.array_equal(a, b) for a, b in zip(before[:2], after[:2]))


def test_update_shadows_requires_binned_scan():
    g = OccupancyGrid3D(UNIT)
    with pytest.raises(RuntimeError):
        g.update_shadows()


# -- oracle comparison -------------------------------------------------------


def _scripted_scans(rng, n_scans, shape):
    """Random objects that persist, vanish and reappear, sampled as echoes."""
    cells = rng.integers(0, shape, size=(40, 3))
    alive = rng.random(40) < 0.6
    scans = []
    for _ in range(n_scans):
        alive ^= rng.random(40) < 0.25
        pts = []
        for c in cells[alive]:
            k = rng.integers(1, 4)
            pts.append(c + rng.uniform(0.02, 0.98, size=(k, 3)))
        pts.append(rng.uniform(-3, np.array(shape) + 3, size=(4, 3)))  # some outside
        scans.append(np.concatenate(pts))
    return scans


@pytest.mark.parametrize("seed", range(4))
def test_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    shape = (20, 20, 20)
    cfg = GridConfig(0, 20, 0, 20, 0, 20, 1.0)
    origin = (10.3, 10.6, 9.7) if seed % 2 else (-2.0, 7.3, 5.1)
    oracle = BruteGrid3D((0.0, 0.0, 0.0), 1.0, shape)
    grid = OccupancyGrid3D(cfg, storage="dense" if seed < 2 else "sparse")
    for s, pts in enumerate(_scripted_scans(rng, 8, shape)):
        lf = grid.ingest(frame(s, pts, origin))
        labels, occ, shadowed = oracle.ingest(pts, origin)
        assert list(lf.labels) == labels, f"scan {s}"
        got_shadow = {tuple(c) for c in grid.shadowed_cells()}
        got_prev = {tuple(c) for c in grid.occupied_cells()}
        assert got_shadow == shadowed, f"scan {s}"
        assert got_prev == occ | shadowed, f"scan {s}"


def test_sparse_and_dense_agree_and_are_deterministic():
    rng = np.random.default_rng(5)
    cfg = GridConfig(0, 20, 0, 20, 0, 20, 0.5)
    scans = _scripted_scans(rng, 6, (20, 20, 20))
    runs = []
    for storage in ("sparse", "dense", "sparse"):
        g = OccupancyGrid3D(cfg, storage=storage)
        runs.append([ingest_scan_3d(g, frame(s, p, (10, 10, 10))).labels for s, p in enumerate(scans)])
    for other in runs[1:]:
        assert all(np.array_equal(a, b) for a, b in zip(runs[0], other))


def test_replace_state_validates():
    g = OccupancyGrid3D(UNIT)
    lin = linear_index(np.array([[1, 1, 1], [2, 2, 2]]), UNIT)
    g.replace_state(lin[::-1], np.array([1, 3], np.uint8), np.array([0, 0]))
    assert len(g) == 2 and g.cell((1, 1, 1)).shadowed
    with pytest.raises(ValueError):
        g.replace_state(np.array([1, 1]), np.array([1, 1], np.uint8), np.array([0, 0]))
    with pytest.raises(ValueError):
        g.replace_state(np.array([UNIT.num_cells]), np.array([1], np.uint8), np.array([0]))
