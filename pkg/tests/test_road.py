"""Lane graph templates, coordinate conversions and lane relations."""

import math

import pytest
from hypothesis import given, strategies as st

from conflictfuzz import road


class TestTemplates:
    def test_all_templates_build(self):
        for tid in road.TEMPLATE_IDS:
            graph = road.build_template(tid, 200.0, 20.0)
            assert graph.template_id == tid
            assert graph.speed_limit == 20.0
            assert graph.lanes

    def test_unknown_template_rejected(self):
        with pytest.raises(road.RoadError):
            road.build_template("roundabout", 200.0, 20.0)

    def test_too_short_rejected(self):
        with pytest.raises(road.RoadError):
            road.build_template("straight3", 50.0, 20.0)

    def test_straight3_geometry(self, straight_graph):
        assert set(straight_graph.lanes) == {"L0", "L1", "L2"}
        for i, lid in enumerate(("L0", "L1", "L2")):
            lane = straight_graph.lane(lid)
            assert lane.centerline[0][1] == pytest.approx(i * road.LANE_WIDTH)
            assert lane.length == pytest.approx(200.0)
        assert straight_graph.lane("L0").left_neighbor == "L1"
        assert straight_graph.lane("L1").right_neighbor == "L0"
        assert straight_graph.lane("L2").left_neighbor is None

    def test_twoway2_is_opposed(self, twoway_graph):
        he = twoway_graph.lane("E").point_heading(10.0)[1]
        hw = twoway_graph.lane("W").point_heading(10.0)[1]
        assert abs(road._wrap_angle(he - hw)) == pytest.approx(math.pi)
        assert twoway_graph.lane("E").oncoming_group == "corridor0"

    def test_merge_ramp_arrives_tangentially(self, merge_graph):
        ramp = merge_graph.lane("R")
        heading_at_end = ramp.point_heading(ramp.length)[1]
        assert abs(heading_at_end) < math.radians(3)
        # ramp end coincides with the mainline junction
        assert ramp.centerline[-1] == merge_graph.lane("S").centerline[0]

    def test_cross_intersection_point(self, cross_graph):
        hit = road.centerline_intersection(cross_graph.lane("A"),
                                           cross_graph.lane("B"))
        assert hit is not None
        (x, y), angle = hit
        assert (x, y) == pytest.approx((100.0, 0.0))
        assert angle == pytest.approx(math.pi / 2)

    def test_dangling_reference_rejected(self):
        with pytest.raises(road.RoadError):
            road.LaneGraph(
                lanes={"A": road.Lane(id="A", centerline=((0, 0), (10, 0)),
                                      successors=("missing",))},
                template_id="straight3", length=10.0, speed_limit=10.0)

    def test_asymmetric_neighbors_rejected(self):
        a = road.Lane(id="A", centerline=((0, 0), (10, 0)), left_neighbor="B")
        b = road.Lane(id="B", centerline=((0, 3.5), (10, 3.5)))
        with pytest.raises(road.RoadError):
            road.LaneGraph(lanes={"A": a, "B": b}, template_id="straight3",
                           length=10.0, speed_limit=10.0)


class TestLaneOps:
    def test_point_heading_bounds(self, straight_graph):
        lane = straight_graph.lane("L0")
        with pytest.raises(road.RoadError):
            lane.point_heading(-1.0)
        with pytest.raises(road.RoadError):
            lane.point_heading(lane.length + 1.0)

    def test_degenerate_centerline_rejected(self):
        with pytest.raises(road.RoadError):
            road.Lane(id="X", centerline=((0, 0),))
        with pytest.raises(road.RoadError):
            road.Lane(id="X", centerline=((0, 0), (0, 0)))

    def test_unknown_lane_id(self, straight_graph):
        with pytest.raises(road.RoadError):
            straight_graph.lane("L9")

    @given(s=st.floats(0.0, 200.0), d=st.floats(-1.7, 1.7))
    def test_world_roundtrip_straight(self, s, d):
        graph = road.build_template("straight3", 200.0, 20.0)
        xy, _heading = road.to_world(graph, "L1", s, d)
        s_back, d_back = road.project_to_lane(graph, "L1", xy)
        assert s_back == pytest.approx(s, abs=1e-9)
        assert d_back == pytest.approx(d, abs=1e-9)

    def test_world_roundtrip_ramp(self, merge_graph):
        ramp = merge_graph.lane("R")
        for s in (0.0, 20.0, ramp.length / 2, ramp.length):
            xy, _ = road.to_world(merge_graph, "R", s, 0.5)
            s_back, d_back = road.project_to_lane(merge_graph, "R", xy)
            assert s_back == pytest.approx(s, abs=0.05)
            assert d_back == pytest.approx(0.5, abs=0.05)


class TestLaneRelation:
    def test_straight3_matrix(self, straight_graph):
        rel = lambda a, b: road.lane_relation(straight_graph, a, b)
        assert rel("L1", "L1") == road.SAME
        assert rel("L0", "L1") == road.ADJACENT_SAME_DIR
        assert rel("L1", "L0") == road.ADJACENT_SAME_DIR
        # two lanes apart: convergence only via successive lane changes
        assert rel("L0", "L2") == road.MERGING

    def test_twoway2(self, twoway_graph):
        assert road.lane_relation(twoway_graph, "E", "W") == \
            road.OPPOSING_CONSTRAINED

    def test_opposing_unconstrained_without_group(self):
        a = road.Lane(id="A", centerline=((0.0, 0.0), (100.0, 0.0)))
        b = road.Lane(id="B", centerline=((100.0, 3.5), (0.0, 3.5)))
        graph = road.LaneGraph(lanes={"A": a, "B": b}, template_id="twoway2",
                               length=100.0, speed_limit=20.0)
        assert road.lane_relation(graph, "A", "B") == \
            road.OPPOSING_UNCONSTRAINED

    def test_merge_template(self, merge_graph):
        rel = lambda a, b: road.lane_relation(merge_graph, a, b)
        assert rel("M", "R") == road.MERGING
        assert rel("M", "S") == road.SAME  # successor-connected
        assert rel("R", "S") == road.SAME

    def test_cross_template(self, cross_graph):
        assert road.lane_relation(cross_graph, "A", "B") == road.CROSSING

    def test_symmetry(self):
        for tid in road.TEMPLATE_IDS:
            graph = road.build_template(tid, 200.0, 20.0)
            ids = sorted(graph.lanes)
            for a in ids:
                for b in ids:
                    assert road.lane_relation(graph, a, b) == \
                        road.lane_relation(graph, b, a)


class TestOverlapRegion:
    def test_cross_overlap(self, cross_graph):
        assert road.overlap_region(cross_graph) == pytest.approx((100.0, 0.0))

    def test_merge_overlap(self, merge_graph):
        assert road.overlap_region(merge_graph) == (0.6 * 300.0, 0.0)

    def test_straight_has_none(self, straight_graph):
        assert road.overlap_region(straight_graph) is None
