import numpy as np
import pytest

from voxmotion.errors import ScanOrderError
from voxmotion.frames import Label, ScanFrame
from voxmotion.geometry import GridConfig
from voxmotion.grid2d import (
    DEFAULT_EPS,
    Cell2D,
    RangeGrid2D,
    ZRange,
    classify_echo_by_range,
    ingest_scan_2d,
)

G = -1.75


def frame(scan_id, pts, origin=(0.0, 0.0, 0.0)):
    return ScanFrame(scan_id, 0.1 * scan_id, np.asarray(pts, dtype=float).reshape(-1, 3), origin)


# -- ZRange and per-echo classification --------------------------------------


def test_zrange_contains_and_union():
    r = ZRange(-1.75, -1.75)
    assert r.contains(-1.75) and r.contains(-1.72, 0.05) and not r.contains(-1.6, 0.05)
    assert r.union(ZRange(0.0, 2.0)) == ZRange(-1.75, 2.0)
    assert r.union(None) is r
    with pytest.raises(ValueError):
        ZRange(1.0, 0.0)


def _cell(rng):
    return Cell2D(rng, None, rng is not None, False)


def test_classify_ground_echo_static():
    assert classify_echo_by_range(_cell(ZRange(G, G)), -1.75) is Label.STATIC


def test_classify_range_extension_dynamic():
    assert classify_echo_by_range(_cell(ZRange(G, G)), 0.5) is Label.DYNAMIC


def test_classify_new_detection_dynamic():
    for z in (-1.75, 0.0, 3.0):
        assert classify_echo_by_range(_cell(None), z) is Label.DYNAMIC


def test_classify_eps_boundary():
    c = _cell(ZRange(-1.0, 1.0))
    assert classify_echo_by_range(c, 1.0 + DEFAULT_EPS) is Label.STATIC
    assert classify_echo_by_range(c, 1.0 + DEFAULT_EPS + 1e-9) is Label.DYNAMIC
    assert classify_echo_by_range(c, 1.2, eps=0.25) is Label.STATIC


def test_invalid_eps():
    with pytest.raises(ValueError):
        RangeGrid2D(GridConfig(), eps=-0.1)


# -- ranging ------------------------------------------------------------------

FIG6 = GridConfig(0, 3, 0, 3, -2.5, 4.5, 1.0, "2d")


def ground(cells, per=4):
    offs = np.array([[0.2, 0.2], [0.7, 0.3], [0.4, 0.8], [0.8, 0.7]])[:per]
    return np.array([[i + a, j + b, G] for i, j in cells for a, b in offs])


ALL9 = [(i, j) for i in range(3) for j in range(3)]


def column(i, j, zs):
    return np.array([[i + 0.5, j + 0.5, z] for z in zs])


def test_fig6_ranging():
    g = RangeGrid2D(FIG6)
    origin = (-2.0, 1.5, 0.0)
    g.ingest(frame(0, ground(ALL9), origin))
    g.ingest(frame(1, ground(ALL9), origin))
    for c in ALL9:
        assert g.cell(c).committed_range == ZRange(G, G)
    objs = np.vstack([column(2, 1, [-1.75, -1.0, 0.0, 1.0, 2.0]),
                      column(1, 2, [-1.75, -0.5, 0.5, 2.0])])
    pts = np.vstack([ground(ALL9), objs])
    lf = g.ingest(frame(2, pts, origin))
    n_ground = len(ground(ALL9))
    assert not lf.labels[:n_ground].any()
    above = objs[:, 2] > G + DEFAULT_EPS
    assert lf.labels[n_ground:][above].all()
    assert not lf.labels[n_ground:][~above].any()
    assert g.cell((2, 1)).committed_range == ZRange(G, 2.0)
    assert g.cell((1, 2)).committed_range == ZRange(G, 2.0)
    assert g.cell((0, 0)).committed_range == ZRange(G, G)


def test_repeated_scan_static_and_ranges_fixed():
    g = RangeGrid2D(FIG6)
    pts = np.vstack([ground(ALL9), column(1, 1, [-1.0, 0.3])])
    g.ingest(frame(0, pts))
    before = [g.cell(c).committed_range for c in ALL9]
    lf = g.ingest(frame(1, pts))
    assert not lf.labels.any()
    assert [g.cell(c).committed_range for c in ALL9] == before


def test_first_scan_static():
    g = RangeGrid2D(FIG6)
    assert not g.ingest(frame(0, column(1, 1, [-1.0, 2.0]))).labels.any()


def test_cell_without_range_is_new_detection():
    g = RangeGrid2D(FIG6)
    g.ingest(frame(0, ground([(0, 0)])))
    lf = g.ingest(frame(1, np.vstack([ground([(0, 0)]), ground([(2, 2)])])))
    assert list(lf.labels) == [0] * 4 + [1] * 4


def test_scan_order_and_out_of_range():
    g = RangeGrid2D(FIG6)
    g.ingest(frame(1, ground([(0, 0)])))
    lf = g.ingest(frame(2, [(5.0, 1.0, 0.0), (1.5, 1.5, 99.0)]))
    assert list(lf.flags) == [1, 0] and list(lf.labels) == [0, 1]
    with pytest.raises(ScanOrderError):
        ingest_scan_2d(g, frame(2, ground([(0, 0)])))


def test_committed_range_grows_without_resets():
    g = RangeGrid2D(FIG6, resize=False)
    rng = np.random.default_rng(0)
    prev = None
    for s in range(8):
        lf = g.ingest(frame(s, column(1, 1, rng.uniform(-2, 3, 5))))
        cur = g.cell((1, 1)).committed_range
        if prev is not None:
            assert cur.z_low <= prev.z_low and cur.z_high >= prev.z_high
        prev = cur
        assert lf.stats.reset_cell_count == 0


# -- shadowing ----------------------------------------------------------------


def test_2d_shadow_keeps_range_for_reappearing_echoes():
    g = RangeGrid2D(FIG6)
    origin = (-2.0, 1.5, 0.0)
    wall = column(2, 1, [-1.5, 0.0, 1.0])
    g.ingest(frame(0, wall, origin))
    lf = g.ingest(frame(1, column(0, 1, [-1.0]), origin))  # occluder in front hides the wall
    assert lf.stats.shadowed_cell_count == 1
    assert g.cell((2, 1)).shadowed and g.cell((2, 1)).committed_range == ZRange(-1.5, 1.0)
    lf = g.ingest(frame(2, wall, origin))
    assert not lf.labels.any()
    assert not g.cell((2, 1)).shadowed


# -- resizing -----------------------------------------------------------------

LANE = GridConfig(0, 10, 0, 3, -2.5, 4.5, 1.0, "2d")
SENSOR = (0.5, 0.5, 0.0)
TRUCK = column(5, 0, [-1.75, -1.0, 0.0, 0.5])
PED = column(5, 0, [-1.75, -1.2, -0.6, -0.2])
ROAD = ground([(i, 0) for i in range(1, 5)])


def _truck_then(ped_frame_extra, resize=True):
    g = RangeGrid2D(LANE, resize=resize)
    g.ingest(frame(0, np.vstack([ROAD, TRUCK]), SENSOR))
    g.ingest(frame(1, np.vstack([ROAD, TRUCK]), SENSOR))
    lf2 = g.ingest(frame(2, np.vstack([ROAD, ground([(5, 0)]), ped_frame_extra]), SENSOR))
    lf3 = g.ingest(frame(3, np.vstack([ROAD, PED]), SENSOR))
    return g, lf2, lf3


def test_resize_lets_short_object_be_detected():
    wall = np.array([[9.5, 0.5, 0.0]])  # ray crosses the truck cell at z = 0
    _, lf2, lf3 = _truck_then(wall)
    assert lf2.stats.reset_cell_count == 1
    ped = lf3.labels[len(ROAD):]
    assert list(ped) == [0, 1, 1, 1]  # the echo at ground level stays static


def test_without_resize_short_object_hides_in_old_range():
    wall = np.array([[9.5, 0.5, 0.0]])
    _, lf2, lf3 = _truck_then(wall, resize=False)
    assert lf2.stats.reset_cell_count == 0
    assert not lf3.labels[len(ROAD):].any()


def test_ray_above_range_does_not_reset():
    wall = np.array([[9.5, 0.5, 3.0]])  # crosses the truck cell at z > 1.5
    g, lf2, lf3 = _truck_then(wall)
    assert lf2.stats.reset_cell_count == 0
    assert g.cell((5, 0)).committed_range == ZRange(G, 0.5)


def test_no_ray_through_cell_no_reset():
    wall = np.array([[9.5, 2.5, 0.0]])  # passes beside the truck cell
    _, lf2, _ = _truck_then(wall)
    assert lf2.stats.reset_cell_count == 0


def test_reset_keeps_current_ground_evidence():
    wall = np.array([[9.5, 0.5, 0.0]])
    g, _, _ = _truck_then(wall)
    # after the reset at scan 2 the cell held ground only, then the pedestrian arrived
    assert g.cell((5, 0)).committed_range == ZRange(G, -0.2)


def test_resize_clears_shadow_of_empty_cell():
    g = RangeGrid2D(LANE)
    g.ingest(frame(0, np.vstack([ROAD, TRUCK]), SENSOR))
    lf = g.ingest(frame(1, np.vstack([ROAD, [[9.5, 0.5, 0.0]]]), SENSOR))
    assert lf.stats.shadowed_cell_count == 1 and lf.stats.reset_cell_count == 1
    st = g.cell((5, 0))
    assert st.committed_range is None and not st.shadowed


def test_grazing_ground_rays_do_not_reset_ground():
    g = RangeGrid2D(LANE)
    road = ground([(i, 0) for i in range(1, 10)])
    noisy = road + np.array([0, 0, 1]) * np.random.default_rng(0).uniform(-0.02, 0.02, (len(road), 1))
    g.ingest(frame(0, road, SENSOR))
    for s in range(1, 5):
        lf = g.ingest(frame(s, noisy, SENSOR))
        assert lf.stats.reset_cell_count == 0
        assert not lf.labels.any()
