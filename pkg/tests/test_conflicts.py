"""Occupancy rasterization, conflict clustering and type classification."""

import math

import pytest

from conflictfuzz import conflicts as ca
from conflictfuzz import genome as gn
from conflictfuzz import oracle, road, sim
from conflictfuzz.sim import VehicleState


def linear_trace(motions, duration=10.0, dt=0.1):
    """Trace from straight-line motions: vid -> (lane, x0, y0, heading, speed)."""
    steps = []
    n = int(round(duration / dt))
    for i in range(n + 1):
        t = i * dt
        row = []
        for vid, (lane, x0, y0, heading, speed) in motions.items():
            x = x0 + speed * t * math.cos(heading)
            y = y0 + speed * t * math.sin(heading)
            row.append(VehicleState(vehicle_id=vid, lane=lane, s=x, xy=(x, y),
                                    heading=heading, speed=speed))
        steps.append(row)
    return sim.Trace(dt=dt, steps=steps, collision=None,
                     terminated_reason="duration_expired")


class TestRasterize:
    def test_empty_trace_rejected(self):
        trace = sim.Trace(dt=0.1, steps=[], collision=None,
                          terminated_reason="duration_expired")
        with pytest.raises(ValueError):
            ca.rasterize(trace)

    def test_stationary_vehicle_cells(self):
        trace = linear_trace({"ego": ("L0", 6.25, 1.25, 0.0, 0.0)},
                             duration=1.0)
        grid = ca.rasterize(trace)
        cells = set(grid.intervals["ego"])
        # footprint x in [4.0, 8.5], y in [0.25, 2.25]: cells columns 1..3, row 0
        assert cells == {(1, 0), (2, 0), (3, 0)}
        for ivs in grid.intervals["ego"].values():
            assert ivs == [(0.0, 1.0)]

    def test_boundary_touch_is_not_occupancy(self):
        # footprint top edge exactly on the row-1 boundary (y = 2.5)
        trace = linear_trace({"ego": ("L0", 6.25, 1.5, 0.0, 0.0)},
                             duration=0.5)
        grid = ca.rasterize(trace)
        rows = {iy for _ix, iy in grid.intervals["ego"]}
        assert rows == {0}

    def test_moving_vehicle_interval_extent(self):
        trace = linear_trace({"ego": ("L0", 0.0, 1.25, 0.0, 10.0)},
                             duration=5.0)
        grid = ca.rasterize(trace)
        cell = (8, 0)  # x in [20, 22.5): front arrives at x=17.75+
        enter, exit_ = grid.intervals["ego"][cell][0]
        # front reaches 20 at t=(20-2.25)/10; rear leaves 22.5 at (22.5+2.25)/10
        assert enter == pytest.approx(1.8, abs=0.11)
        assert exit_ == pytest.approx(2.4, abs=0.11)

    def test_matches_oracle_on_simulated_trace(self, straight_graph,
                                               small_genome):
        trace = sim.simulate(small_genome, straight_graph)
        grid = ca.rasterize(trace)
        brute = oracle._occupancy(trace, ca.CELL_SIZE)
        assert set(grid.intervals) == set(brute)
        for vid in grid.intervals:
            assert grid.intervals[vid].keys() == brute[vid].keys()
            for cell in grid.intervals[vid]:
                got = grid.intervals[vid][cell]
                want = brute[vid][cell]
                assert len(got) == len(want)
                for (e0, x0), (e1, x1) in zip(got, want):
                    assert e0 == pytest.approx(e1, abs=1e-9)
                    assert x0 == pytest.approx(x1, abs=1e-9)


class TestPairGap:
    def test_co_occupancy_discarded(self):
        assert ca._pair_gap((0, 0), "n", (1.0, 3.0), (2.0, 4.0),
                            0.1, 15.0) is None

    def test_ev_first(self):
        hit = ca._pair_gap((0, 0), "n", (0.0, 1.0), (3.0, 4.0), 0.1, 15.0)
        assert hit["gap"] == pytest.approx(2.0)
        assert hit["first"] == "EV"
        assert hit["t_event"] == 3.0

    def test_npc_first(self):
        hit = ca._pair_gap((0, 0), "n", (3.0, 4.0), (0.0, 1.0), 0.1, 15.0)
        assert hit["gap"] == pytest.approx(2.0)
        assert hit["first"] == "NPC"
        assert hit["t_event"] == 3.0

    def test_beyond_horizon_discarded(self):
        assert ca._pair_gap((0, 0), "n", (0.0, 1.0), (17.0, 18.0),
                            0.1, 15.0) is None


class TestFindConflicts:
    def test_follower_gap_classification(self):
        # NPC drives the corridor 2 s ahead of the ego: one merged event
        trace = linear_trace({"ego": ("L0", 0.0, 1.25, 0.0, 10.0),
                              "npc0": ("L0", 20.0, 1.25, 0.0, 10.0)},
                             duration=8.0)
        cset = ca.find_conflicts(ca.rasterize(trace))
        assert len(cset.conflicts) == 1
        assert not cset.spatial
        rec = cset.conflicts[0]
        assert rec.npc_id == "npc0"
        assert rec.first_arriver == "NPC"
        # rear of the NPC to front of the ego: (20 - 4.5) / 10 s
        assert rec.delta_t == pytest.approx(1.55, abs=0.2)
        assert rec.klass == ca.CONFLICT

    def test_larger_gap_is_spatial(self):
        trace = linear_trace({"ego": ("L0", 0.0, 1.25, 0.0, 10.0),
                              "npc0": ("L0", 60.0, 1.25, 0.0, 10.0)},
                             duration=8.0)
        cset = ca.find_conflicts(ca.rasterize(trace))
        assert not cset.conflicts
        assert len(cset.spatial) == 1
        assert cset.spatial[0].delta_t == pytest.approx(5.55, abs=0.2)

    def test_gap_beyond_horizon_ignored(self):
        trace = linear_trace({"ego": ("L0", 0.0, 1.25, 0.0, 1.0),
                              "npc0": ("L0", 25.0, 1.25, 0.0, 1.0)},
                             duration=10.0)
        # arrival gap is (25 - 4.5) / 1 = 20.5 s > t_s
        cset = ca.find_conflicts(ca.rasterize(trace))
        assert not cset.conflicts and not cset.spatial

    def test_distinct_events_not_merged(self):
        # NPC crosses the ego corridor twice, 40 m (4 s) apart
        trace = linear_trace({"ego": ("L0", 0.0, 1.25, 0.0, 10.0)},
                             duration=10.0)
        crossing = linear_trace({"npc0": ("B", 20.0, -30.0, math.pi / 2, 8.0)},
                                duration=10.0)
        second = linear_trace({"npc1": ("B", 60.0, -30.0, math.pi / 2, 8.0)},
                              duration=10.0)
        merged = sim.Trace(
            dt=0.1,
            steps=[a + b + c for a, b, c in zip(trace.steps, crossing.steps,
                                                second.steps)],
            collision=None, terminated_reason="duration_expired")
        cset = ca.find_conflicts(ca.rasterize(merged))
        npcs = {r.npc_id for r in cset.conflicts + cset.spatial}
        assert npcs == {"npc0", "npc1"}

    def test_events_sorted(self, straight_graph, small_genome):
        trace = sim.simulate(small_genome, straight_graph)
        cset = ca.find_conflicts(ca.rasterize(trace))
        for group in (cset.conflicts, cset.spatial):
            keys = [(r.t_event, r.npc_id, min(r.cells)) for r in group]
            assert keys == sorted(keys)

    def test_by_npc_and_count(self):
        trace = linear_trace({"ego": ("L0", 0.0, 1.25, 0.0, 10.0),
                              "npc0": ("L0", 20.0, 1.25, 0.0, 10.0)},
                             duration=8.0)
        cset = ca.find_conflicts(ca.rasterize(trace))
        assert ca.conflict_count(cset) == 1  # spatial events never counted
        assert set(cset.by_npc(ca.CONFLICT)) == {"npc0"}
        assert cset.npc_ids() == {"npc0"}


class TestClassification:
    def two_state_trace(self, ev_lane, npc_lane, ev_heading=0.0,
                        npc_heading=0.0):
        steps = [[
            VehicleState(vehicle_id="ego", lane=ev_lane, s=0.0, xy=(0, 0),
                         heading=ev_heading, speed=5.0),
            VehicleState(vehicle_id="npc0", lane=npc_lane, s=0.0, xy=(30, 0),
                         heading=npc_heading, speed=5.0),
        ]]
        return sim.Trace(dt=0.1, steps=steps, collision=None,
                         terminated_reason="duration_expired")

    def record(self, **kw):
        base = dict(npc_id="npc0", cells=frozenset({(0, 0)}), ev_time=0.0,
                    npc_time=0.0, delta_t=1.0, first_arriver="NPC",
                    klass=ca.CONFLICT)
        base.update(kw)
        return ca.ConflictRecord(**base)

    def test_same_lane_is_op(self, straight_graph):
        trace = self.two_state_trace("L1", "L1")
        assert ca.classify_conflict(self.record(), trace,
                                    straight_graph) == ca.OP

    def test_constrained_head_on(self, twoway_graph):
        trace = self.two_state_trace("E", "W", npc_heading=math.pi)
        assert ca.classify_conflict(self.record(), trace,
                                    twoway_graph) == ca.CHP

    def test_unconstrained_head_on(self):
        a = road.Lane(id="A", centerline=((0.0, 0.0), (100.0, 0.0)))
        b = road.Lane(id="B", centerline=((100.0, 3.5), (0.0, 3.5)))
        graph = road.LaneGraph(lanes={"A": a, "B": b}, template_id="twoway2",
                               length=100.0, speed_limit=20.0)
        trace = self.two_state_trace("A", "B", npc_heading=math.pi)
        assert ca.classify_conflict(self.record(), trace, graph) == ca.UHP

    def test_crossing(self, cross_graph):
        trace = self.two_state_trace("A", "B", npc_heading=math.pi / 2)
        assert ca.classify_conflict(self.record(), trace, cross_graph) == ca.CP

    def test_merging(self, merge_graph):
        trace = self.two_state_trace("M", "R")
        assert ca.classify_conflict(self.record(), trace, merge_graph) == ca.MP

    def test_adjacent_keep_lane_diagnosed(self, straight_graph):
        trace = self.two_state_trace("L0", "L1")
        rec = self.record()
        assert ca.classify_conflict(rec, trace, straight_graph) == ca.MP
        assert rec.diagnostic is not None

    def test_adjacent_mid_change_is_mp(self, straight_graph):
        steps = [[
            VehicleState(vehicle_id="ego", lane="L0", s=0.0, xy=(0, 0),
                         heading=0.0, speed=5.0),
            VehicleState(vehicle_id="npc0", lane="L1", s=0.0, xy=(30, 3.0),
                         heading=0.05, speed=5.0,
                         maneuver=sim.CHANGING_RIGHT, progress=0.4),
        ]]
        trace = sim.Trace(dt=0.1, steps=steps, collision=None,
                          terminated_reason="duration_expired")
        rec = self.record()
        assert ca.classify_conflict(rec, trace, straight_graph) == ca.MP
        assert rec.diagnostic is None

    def test_classify_all_sets_types(self, straight_graph, small_genome):
        trace = sim.simulate(small_genome, straight_graph)
        cset = ca.classify_all(ca.find_conflicts(ca.rasterize(trace)),
                               trace, straight_graph)
        for rec in cset.conflicts + cset.spatial:
            assert rec.ctype in (ca.MP, ca.CP, ca.OP, ca.UHP, ca.CHP)
