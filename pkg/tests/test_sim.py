"""Kinematic simulator: vehicle motion, collision detection, ego controller."""

import math

import pytest

from conflictfuzz import genome as gn
from conflictfuzz import road, sim


def make_genome(npc_specs, ego_start=("L1", 10.0),
                template_id="straight3", ego_route=("L1",)):
    npcs = tuple(
        gn.NpcChromosome(npc_id=f"npc{i}", start=start,
                         SP=tuple(sp), AC=tuple(ac))
        for i, (start, sp, ac) in enumerate(npc_specs))
    T = npcs[0].T
    return gn.ScenarioGenome(scenario_id="s", template_id=template_id, T=T,
                             ego_start=ego_start, ego_route=ego_route,
                             npcs=npcs)


def const(v, T=20):
    return [v] * T


def straight(T=20):
    return [gn.STRAIGHT] * T


def state(x, y, heading=0.0, speed=0.0, vid="v", lane="L1"):
    return sim.VehicleState(vehicle_id=vid, lane=lane, s=x, xy=(x, y),
                            heading=heading, speed=speed)


class TestCollisionDetection:
    def test_separated(self):
        assert sim.detect_collision(state(0, 0), state(10, 0)) is None
        assert sim.detect_collision(state(0, 0), state(0, 2.5)) is None

    def test_overlapping(self):
        hit = sim.detect_collision(state(0, 0), state(4.0, 0))
        assert hit is not None
        # contact centroid sits in the overlap strip between the two
        assert 1.75 <= hit["point"][0] <= 2.25
        assert hit["point"][1] == pytest.approx(0.0)
        assert hit["normal"][0] > 0  # oriented from a toward b

    def test_rotated_footprints(self):
        a = state(0, 0)
        b = state(2.5, 2.0, heading=math.pi / 2)
        # diagonal separation that an AABB test would miss
        assert sim.detect_collision(a, state(3.2, 2.3, heading=math.pi / 4)) \
            is not None
        assert sim.detect_collision(a, b) is not None
        assert sim.detect_collision(a, state(2.5, 4.0, heading=math.pi / 2)) \
            is None

    def test_footprint_dimensions(self):
        corners = sim.footprint_corners(state(0, 0))
        xs = [c[0] for c in corners]
        ys = [c[1] for c in corners]
        assert max(xs) - min(xs) == pytest.approx(road.VEHICLE_LENGTH)
        assert max(ys) - min(ys) == pytest.approx(road.VEHICLE_WIDTH)


class TestVehicleKinematics:
    def test_npc_tracks_constant_speed(self, straight_graph):
        g = make_genome([(("L0", 50.0), const(8.0), straight())])
        trace = sim.simulate(g, straight_graph)
        npc = [s for s in trace.steps[50] if s.vehicle_id == "npc0"][0]
        assert npc.speed == pytest.approx(8.0)
        assert npc.s == pytest.approx(50.0 + 8.0 * 5.0, abs=1e-6)

    def test_npc_accel_rate_limited(self):
        graph = road.build_template("straight3", 600.0, 20.0)
        sp = [0.0] * 20
        sp[1:] = [20.0] * 19  # step change larger than the 6 m/s^2 cap allows
        g = make_genome([(("L0", 50.0), sp, straight())])
        trace = sim.simulate(g, graph)
        speeds = [s.speed for step in trace.steps
                  for s in step if s.vehicle_id == "npc0"]
        for v0, v1 in zip(speeds, speeds[1:]):
            assert abs(v1 - v0) <= sim.NPC_ACCEL_CAP * trace.dt + 1e-9

    def test_lane_change_completes(self, straight_graph):
        ac = straight()
        ac[0] = gn.LANE_LEFT
        g = make_genome([(("L0", 50.0), const(5.0), ac)])
        trace = sim.simulate(g, straight_graph)
        npc0 = trace.steps[0][1]
        npc_end = trace.steps[25][1]
        assert npc0.lane == "L0"
        assert npc_end.lane == "L1"
        assert npc_end.maneuver == sim.KEEP_LANE
        assert npc_end.xy[1] == pytest.approx(road.LANE_WIDTH)
        # mid-change the footprint is between the two centerlines
        mid = trace.steps[10][1]
        assert 0.0 < mid.xy[1] < road.LANE_WIDTH

    def test_illegal_lane_change_rejected(self, straight_graph):
        ac = straight()
        ac[0] = gn.LANE_LEFT  # L2 has no left neighbor
        g = make_genome([(("L2", 50.0), const(5.0), ac)])
        trace = sim.simulate(g, straight_graph)
        for step in trace.steps:
            npc = step[1]
            assert npc.lane == "L2"
            assert npc.maneuver == sim.KEEP_LANE

    def test_end_of_lane_stops(self, cross_graph):
        g = make_genome([(("B", 190.0), const(15.0), straight())],
                        ego_start=("A", 10.0), template_id="cross",
                        ego_route=("A",))
        trace = sim.simulate(g, cross_graph)
        npc = trace.steps[-1][1]
        assert npc.speed == 0.0
        assert npc.s == pytest.approx(cross_graph.lane("B").length)

    def test_successor_following(self, merge_graph):
        g = make_genome([(("R", 100.0), const(15.0), straight())],
                        ego_start=("M", 10.0), template_id="merge",
                        ego_route=("M", "S"))
        trace = sim.simulate(g, merge_graph)
        lanes = {step[1].lane for step in trace.steps}
        assert "S" in lanes  # ramp vehicle continued onto the shared lane

    def test_determinism(self, straight_graph, small_genome):
        t1 = sim.simulate(small_genome, straight_graph)
        t2 = sim.simulate(small_genome, straight_graph)
        assert sim.trace_to_jsonl(t1) == sim.trace_to_jsonl(t2)

    def test_template_mismatch(self, cross_graph, small_genome):
        with pytest.raises(sim.SimulationError):
            sim.simulate(small_genome, cross_graph)


class TestBaselineEgo:
    def test_free_road_accelerates_to_limit(self):
        graph = road.build_template("straight3", 600.0, 20.0)
        g = make_genome([(("L0", 150.0), const(0.0, 30), straight(30))])
        trace = sim.simulate(g, graph)
        ev = trace.steps[-1][0]
        assert ev.speed == pytest.approx(graph.speed_limit, abs=1.0)

    def test_brakes_for_same_lane_leader(self, straight_graph):
        g = make_genome([(("L1", 40.0), const(2.0), straight())])
        trace = sim.simulate(g, straight_graph)
        assert trace.collision is None
        ev_speeds = [step[0].speed for step in trace.steps]
        assert max(ev_speeds) < straight_graph.speed_limit * 0.8

    def test_w1_ignores_adjacent_lane(self, straight_graph):
        # same longitudinal setup but the slow leader is one lane over:
        # the ego keeps accelerating as if the road were free
        g = make_genome([(("L0", 40.0), const(2.0, 12), straight(12))])
        trace = sim.simulate(g, straight_graph)
        ev_end = trace.steps[-1][0]
        assert ev_end.speed > 12.0

    def test_w2_ignores_oncoming(self, twoway_graph):
        g = make_genome([(("W", 150.0), const(10.0, 12), straight(12))],
                        ego_start=("E", 10.0), template_id="twoway2",
                        ego_route=("E",))
        trace = sim.simulate(g, twoway_graph)
        # oncoming traffic in the opposite lane never slows the ego
        ev_speeds = [step[0].speed for step in trace.steps]
        assert all(v1 >= v0 - 1e-9 for v0, v1 in zip(ev_speeds, ev_speeds[1:]))

    def test_w3_speed_perception_delayed(self, straight_graph):
        ego = sim.BaselineEgo(straight_graph)
        lead = state(30.0, road.LANE_WIDTH, speed=10.0, vid="npc0", lane="L1")
        obs = sim.Observation(
            ev=state(0.0, road.LANE_WIDTH, speed=10.0, vid="ego", lane="L1"),
            npcs=[lead], speed_limit=20.0)
        a_first, _ = ego.step(obs)
        # the leader brakes hard; the delayed controller still reacts to the
        # old speed for delay_steps decisions
        stopped = sim.VehicleState(vehicle_id="npc0", lane="L1", s=30.0,
                                   xy=(30.0, road.LANE_WIDTH), heading=0.0,
                                   speed=0.0)
        reactions = []
        for _ in range(ego.delay_steps + 1):
            obs = sim.Observation(ev=obs.ev, npcs=[stopped], speed_limit=20.0)
            a, _ = ego.step(obs)
            reactions.append(a)
        assert reactions[0] == pytest.approx(a_first)  # still sees 10 m/s
        assert reactions[-1] < reactions[0]  # finally sees the stop

    def test_unknown_controller_rejected(self, straight_graph):
        with pytest.raises(sim.SimulationError):
            sim.make_ego(sim.EgoControllerSpec(name="mpc"), straight_graph)


class TestFaultAttribution:
    def test_rear_end_by_npc_is_npc_fault(self, straight_graph):
        # fast NPC starting behind the ego in its lane rams it from behind
        g = make_genome([(("L1", 1.0), const(20.0), straight())])
        trace = sim.simulate(g, straight_graph)
        assert trace.collision is not None
        assert sim.ev_fault(trace) is False

    def test_ev_rear_ending_slow_leader_is_ev_fault(self, straight_graph):
        # leader far ahead decelerates to a stop; delayed/IDM ego plows in
        sp = [15.0, 15.0] + [0.0] * 18
        g = make_genome([(("L1", 30.0), sp, straight())])
        trace = sim.simulate(g, straight_graph)
        if trace.collision is not None:
            assert sim.ev_fault(trace) is True

    def test_requires_collision(self, straight_graph, small_genome):
        trace = sim.Trace(dt=0.1, steps=[[state(0, 0, vid="ego")]],
                          collision=None, terminated_reason="duration_expired")
        with pytest.raises(sim.SimulationError):
            sim.ev_fault(trace)


class TestTraceSerialization:
    def test_roundtrip_states(self, straight_graph, small_genome):
        trace = sim.simulate(small_genome, straight_graph)
        back = sim.trace_from_jsonl(sim.trace_to_jsonl(trace))
        assert back.dt == trace.dt
        assert len(back.steps) == len(trace.steps)
        assert back.terminated_reason == trace.terminated_reason
        if trace.collision is not None:
            assert back.collision["step"] == trace.collision["step"]
        for orig, rest in zip(trace.steps, back.steps):
            for a, b in zip(orig, rest):
                assert a.vehicle_id == b.vehicle_id
                assert a.xy == pytest.approx(b.xy)
                assert a.speed == pytest.approx(b.speed)

    def test_missing_footer_rejected(self):
        with pytest.raises(sim.SimulationError):
            sim.trace_from_jsonl('{"t": 0, "vehicle_id": "ego", "x": 0, '
                                 '"y": 0, "heading": 0, "speed": 0, '
                                 '"lane": "L1", "maneuver": "KeepLane"}\n')
