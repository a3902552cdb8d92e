import pytest
from hypothesis import given
from hypothesis import strategies as st

from icsim.geometry import (
    ALL_ROUTES,
    GeometryError,
    IntersectionGeometry,
    Route,
    col_entrance,
    collision_area,
    subsections_of,
)

routes = st.sampled_from(ALL_ROUTES)
GEOM = IntersectionGeometry()


def test_twelve_routes_and_no_u_turns():
    assert len(set(ALL_ROUTES)) == 12
    with pytest.raises(GeometryError):
        Route("H1R", "H1L")
    with pytest.raises(GeometryError):
        Route("H1L", "H2L")


def test_cell_counts_by_turn():
    assert subsections_of(Route.from_turn(1, "right")) == ("S1",)
    assert subsections_of(Route.from_turn(1, "straight")) == ("S1", "S2")
    assert subsections_of(Route.from_turn(1, "left")) == ("S1", "S2", "S3")


def test_straight_paths_are_in_line_with_the_approach():
    # a straight crossing stays in one column/row of the 2x2 grid: its two
    # cells share the edge facing the approach
    col = {"S1": (1, 0), "S2": (1, 1), "S3": (0, 1), "S4": (0, 0)}
    for j in (1, 2, 3, 4):
        a, b = subsections_of(Route.from_turn(j, "straight"))
        (ax, ay), (bx, by) = col[a], col[b]
        assert abs(ax - bx) + abs(ay - by) == 1


def test_left_turn_enters_at_own_corner_and_leaves_by_the_exit_corner():
    for j in (1, 2, 3, 4):
        left = subsections_of(Route.from_turn(j, "left"))
        right_of_exit_lane = subsections_of(Route.from_turn(j, "right"))[0]
        assert left[0] == right_of_exit_lane
        # last cell is the one an oncoming right-turner from the exit arm's left would never touch
        assert len(set(left)) == 3


def test_collision_area_examples():
    assert collision_area(Route.from_turn(1, "right"), Route.from_turn(2, "right")) == frozenset()
    r = Route.from_turn(3, "left")
    assert collision_area(r, r) == frozenset(subsections_of(r))
    assert len(collision_area(Route.from_turn(1, "straight"), Route.from_turn(2, "straight"))) == 1


def test_col_entrance_examples():
    r = Route.from_turn(1, "straight")
    assert col_entrance({"S1"}, r, GEOM) == GEOM.box_entry
    assert col_entrance({"S2"}, r, GEOM) == GEOM.box_entry + GEOM.subsection_width
    with pytest.raises(GeometryError):
        col_entrance(set(), r, GEOM)
    with pytest.raises(GeometryError):
        col_entrance({"S4"}, r, GEOM)


@given(routes, routes)
def test_collision_area_symmetric_and_subset(r1, r2):
    c = collision_area(r1, r2)
    assert c == collision_area(r2, r1)
    assert c <= set(subsections_of(r1))
    if c:
        assert col_entrance(c, r1, GEOM) >= GEOM.box_entry


@given(st.floats(0.0, 60.0))
def test_capture_area_starts_before_centre(v):
    start, end = GEOM.capture_area(v)
    assert start < end == GEOM.x_s


def test_cells_tile_the_box():
    # every route's cells are contiguous and within [box_entry, box_entry + 3w]
    for r in ALL_ROUTES:
        spans = [GEOM.cell_span(r, c) for c in subsections_of(r)]
        for (a0, b0), (a1, _) in zip(spans, spans[1:]):
            assert b0 == a1
        assert spans[0][0] == GEOM.box_entry
        assert GEOM.exit_boundary(r) == spans[-1][1] + GEOM.car_length
    assert {c for r in ALL_ROUTES for c in subsections_of(r)} == {"S1", "S2", "S3", "S4"}


def test_invalid_geometry():
    with pytest.raises(GeometryError):
        IntersectionGeometry(subsection_width=0)


def test_position_2d_continuous_at_box_edges():
    for r in ALL_ROUTES:
        for x in (GEOM.box_entry, GEOM.route_end(r)):
            a = GEOM.position_2d(r, x - 1e-9)
            b = GEOM.position_2d(r, x + 1e-9)
            assert abs(a[0] - b[0]) < 1e-6 and abs(a[1] - b[1]) < 1e-6
