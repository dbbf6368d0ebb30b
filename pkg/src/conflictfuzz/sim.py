"""Deterministic fixed-step kinematic simulator.

NPCs track their chromosomes (rate-limited speed tracking, 2 s lane changes,
illegal actions rejected); the ego vehicle is driven by a pluggable
controller. The built-in baseline controller is an IDM lane-keeper with
deliberate, documented weaknesses so the search has faults to find.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import road
from .genome import LANE_LEFT, LANE_RIGHT, ScenarioGenome, STRAIGHT
from .road import LaneGraph, VEHICLE_LENGTH, VEHICLE_WIDTH

KEEP_LANE = "KeepLane"
CHANGING_LEFT = "ChangingLeft"
CHANGING_RIGHT = "ChangingRight"

LANE_CHANGE_DURATION = 2.0
NPC_ACCEL_CAP = 6.0
EGO_ID = "ego"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleState:
    vehicle_id: str
    lane: str
    s: float
    xy: tuple
    heading: float
    speed: float
    maneuver: str = KEEP_LANE
    progress: float = 0.0  # lane-change progress in [0, 1]


@dataclass
class Trace:
    dt: float
    steps: list  # per-step list of VehicleState, EV at index 0
    collision: dict | None  # {step, ev_contact_point, npc_id, relative_heading}
    terminated_reason: str  # "collision" | "duration_expired"

    @property
    def duration(self) -> float:
        return (len(self.steps) - 1) * self.dt


@dataclass(frozen=True)
class EgoControllerSpec:
    name: str = "baseline"
    parameters: dict = field(default_factory=dict)
    deterministic: bool = True


# -- oriented-rectangle collision test ---------------------------------------

def footprint_corners(state: VehicleState,
                      length: float = VEHICLE_LENGTH,
                      width: float = VEHICLE_WIDTH):
    c, s = math.cos(state.heading), math.sin(state.heading)
    hl, hw = length / 2.0, width / 2.0
    x, y = state.xy
    return [(x + dx * c - dy * s, y + dx * s + dy * c)
            for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))]


def _project(corners, ax):
    dots = [cx * ax[0] + cy * ax[1] for cx, cy in corners]
    return min(dots), max(dots)


def _clip_polygon(subject, clip):
    """Sutherland-Hodgman clip of convex polygon `subject` by convex `clip`."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        (ax, ay), (bx, by) = clip[i], clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp, out = out, []
        if not inp:
            break
        for j in range(len(inp)):
            cur, nxt = inp[j], inp[(j + 1) % len(inp)]
            cur_in = ex * (cur[1] - ay) - ey * (cur[0] - ax) <= 1e-12
            nxt_in = ex * (nxt[1] - ay) - ey * (nxt[0] - ax) <= 1e-12
            if cur_in:
                out.append(cur)
            if cur_in != nxt_in:
                dx, dy = nxt[0] - cur[0], nxt[1] - cur[1]
                den = ex * dy - ey * dx
                if abs(den) > 1e-15:
                    t = (ey * (cur[0] - ax) - ex * (cur[1] - ay)) / den
                    out.append((cur[0] + t * dx, cur[1] + t * dy))
    return out


def detect_collision(state_a: VehicleState, state_b: VehicleState):
    """Separating-axis test on the two footprints.

    Returns {point, normal} on overlap (point = centroid of the overlap
    polygon), else None.
    """
    # cheap circle prune
    r = math.hypot(VEHICLE_LENGTH, VEHICLE_WIDTH)
    if math.dist(state_a.xy, state_b.xy) > r:
        return None
    ca = footprint_corners(state_a)
    cb = footprint_corners(state_b)
    best_axis, best_overlap = None, math.inf
    for heading in (state_a.heading, state_b.heading):
        for ax in ((math.cos(heading), math.sin(heading)),
                   (-math.sin(heading), math.cos(heading))):
            lo_a, hi_a = _project(ca, ax)
            lo_b, hi_b = _project(cb, ax)
            overlap = min(hi_a, hi_b) - max(lo_a, lo_b)
            if overlap < 0:
                return None
            if overlap < best_overlap:
                best_overlap = overlap
                best_axis = ax
    poly = _clip_polygon(ca, cb)
    if poly:
        point = (sum(p[0] for p in poly) / len(poly),
                 sum(p[1] for p in poly) / len(poly))
    else:
        point = ((state_a.xy[0] + state_b.xy[0]) / 2.0,
                 (state_a.xy[1] + state_b.xy[1]) / 2.0)
    # normal oriented from a toward b
    dx = state_b.xy[0] - state_a.xy[0]
    dy = state_b.xy[1] - state_a.xy[1]
    if best_axis[0] * dx + best_axis[1] * dy < 0:
        best_axis = (-best_axis[0], -best_axis[1])
    return {"point": point, "normal": best_axis}


# -- baseline ego controller -------------------------------------------------

@dataclass
class Observation:
    ev: VehicleState
    npcs: list  # VehicleStates within perception range
    speed_limit: float


class BaselineEgo:
    """IDM lane-keeper with enumerated weaknesses.

    W1: ignores vehicles whose footprint center is outside the lateral
        boundaries of the EV's lane (late reaction to cut-ins).
    W2: ignores oncoming traffic (relative heading beyond 90 degrees).
    W3: perceives other vehicles' speeds with a 0.5 s decision delay.
    """

    PERCEPTION_RANGE = 60.0

    def __init__(self, graph: LaneGraph, spec: EgoControllerSpec | None = None):
        self.graph = graph
        p = dict(spec.parameters) if spec else {}
        self.headway = p.get("headway", 1.5)
        self.comfortable_decel = p.get("comfortable_decel", 3.0)
        self.max_decel = p.get("max_decel", 6.0)
        self.max_accel = p.get("max_accel", 2.5)
        self.min_gap = p.get("min_gap", 2.0)
        self.delay_steps = p.get("delay_steps", 5)  # W3: 0.5 s at dt = 0.1
        self._speed_hist = {}

    def step(self, obs: Observation):
        """One control decision: (longitudinal accel m/s^2, lane change request)."""
        ev = obs.ev
        lane = self.graph.lane(ev.lane)
        # W3: record speeds, perceive them delayed
        for npc in obs.npcs:
            hist = self._speed_hist.setdefault(npc.vehicle_id, [])
            hist.append(npc.speed)
            if len(hist) > self.delay_steps + 1:
                del hist[0]
        leader_gap, leader_speed = None, 0.0
        for npc in obs.npcs:
            diff = _wrap(npc.heading - ev.heading)
            if abs(diff) > math.pi / 2:
                continue  # W2
            s_npc, d_npc = road.project_to_lane(self.graph, ev.lane, npc.xy)
            if abs(d_npc) > lane.width / 2.0:
                continue  # W1
            gap = s_npc - ev.s - VEHICLE_LENGTH
            if gap < -VEHICLE_LENGTH or gap > self.PERCEPTION_RANGE:
                continue
            if leader_gap is None or gap < leader_gap:
                leader_gap = gap
                leader_speed = self._speed_hist[npc.vehicle_id][0]
        accel = self._idm(ev.speed, obs.speed_limit, leader_gap, leader_speed)
        return accel, None

    def _idm(self, v, v0, gap, v_lead):
        free = 1.0 - (v / v0) ** 4 if v0 > 0 else 0.0
        inter = 0.0
        if gap is not None:
            gap = max(gap, 0.1)
            s_star = (self.min_gap + v * self.headway
                      + v * (v - v_lead)
                      / (2.0 * math.sqrt(self.max_accel * self.comfortable_decel)))
            inter = (max(s_star, 0.0) / gap) ** 2
        accel = self.max_accel * (free - inter)
        return min(max(accel, -self.max_decel), self.max_accel)


def ego_baseline_step(controller: BaselineEgo, observation: Observation):
    """Functional facade over the baseline controller's decision step."""
    return controller.step(observation)


def make_ego(spec: EgoControllerSpec, graph: LaneGraph):
    if spec.name != "baseline":
        raise SimulationError(f"unknown ego controller {spec.name!r}")
    return BaselineEgo(graph, spec)


def _wrap(a):
    while a > math.pi:
        a -= 2 * math.pi
    while a < -math.pi:
        a += 2 * math.pi
    return a


# -- vehicle kinematics ------------------------------------------------------

class _Vehicle:
    __slots__ = ("vid", "lane", "s", "speed", "maneuver", "progress",
                 "from_lane", "to_lane", "xy", "heading", "route")

    def __init__(self, vid, lane, s, speed, graph, route=None):
        self.vid = vid
        self.lane = lane
        self.s = s
        self.speed = speed
        self.maneuver = KEEP_LANE
        self.progress = 0.0
        self.from_lane = None
        self.to_lane = None
        self.route = route
        self.xy, self.heading = road.to_world(graph, lane, s, 0.0)

    def state(self):
        return VehicleState(vehicle_id=self.vid, lane=self.lane, s=self.s,
                            xy=self.xy, heading=self.heading, speed=self.speed,
                            maneuver=self.maneuver, progress=self.progress)

    def begin_change(self, direction, graph):
        lane = graph.lane(self.lane)
        target = lane.left_neighbor if direction == LANE_LEFT else lane.right_neighbor
        if target is None or self.maneuver != KEEP_LANE:
            return False  # illegal action rejected; NPC continues straight
        self.maneuver = CHANGING_LEFT if direction == LANE_LEFT else CHANGING_RIGHT
        self.from_lane = self.lane
        self.to_lane = target
        self.progress = 0.0
        return True

    def advance(self, dt, graph):
        prev_xy = self.xy
        self.s += self.speed * dt
        lane = graph.lane(self.lane)
        if self.s > lane.length:
            if lane.successors:
                nxt = lane.successors[0]
                if self.route:
                    for r in self.route:
                        if r in lane.successors:
                            nxt = r
                            break
                self.s -= lane.length
                self.lane = nxt
                if self.maneuver != KEEP_LANE:
                    # abort mid-change at a lane boundary; extremely rare
                    self.maneuver = KEEP_LANE
                    self.progress = 0.0
            else:
                self.s = lane.length
                self.speed = 0.0
        if self.maneuver == KEEP_LANE:
            self.xy, self.heading = road.to_world(graph, self.lane, self.s, 0.0)
        else:
            self.progress = min(self.progress + dt / LANE_CHANGE_DURATION, 1.0)
            blend = 3 * self.progress ** 2 - 2 * self.progress ** 3
            sxy, sh = road.to_world(graph, self.from_lane, self.s, 0.0)
            txy, _ = road.to_world(graph, self.to_lane, self.s, 0.0)
            self.xy = (sxy[0] + blend * (txy[0] - sxy[0]),
                       sxy[1] + blend * (txy[1] - sxy[1]))
            if self.speed > 0.1:
                self.heading = math.atan2(self.xy[1] - prev_xy[1],
                                          self.xy[0] - prev_xy[0])
            else:
                self.heading = sh
            self.lane = self.to_lane if self.progress >= 0.5 else self.from_lane
            if self.progress >= 1.0:
                self.lane = self.to_lane
                self.maneuver = KEEP_LANE
                self.progress = 0.0
                self.from_lane = self.to_lane = None


def simulate(genome: ScenarioGenome, graph: LaneGraph,
             ego: EgoControllerSpec | None = None, dt: float = 0.1) -> Trace:
    """Execute a genome; returns the full Trace.

    Stops at the first EV-involved footprint overlap or after ceil(T/dt)
    steps. Fully deterministic.
    """
    if genome.template_id != graph.template_id:
        raise SimulationError("genome/graph template mismatch")
    ego = ego or EgoControllerSpec()
    controller = make_ego(ego, graph)
    steps_per_sec = round(1.0 / dt)
    n_steps = math.ceil(genome.T / dt)

    ev = _Vehicle(EGO_ID, genome.ego_start[0], genome.ego_start[1], 0.0,
                  graph, route=genome.ego_route)
    npcs = []
    for chrom in genome.npcs:
        v = _Vehicle(chrom.npc_id, chrom.start[0], chrom.start[1],
                     chrom.SP[0], graph)
        npcs.append((v, chrom))

    steps = [[ev.state()] + [v.state() for v, _ in npcs]]
    collision = None
    for i in range(n_steps):
        t = i * dt
        # ego control from the state at time t
        obs_npcs = [v.state() for v, _ in npcs
                    if math.dist(v.xy, ev.xy) <= BaselineEgo.PERCEPTION_RANGE]
        accel, _lc = controller.step(
            Observation(ev=ev.state(), npcs=obs_npcs,
                        speed_limit=graph.speed_limit))
        ev.speed = max(ev.speed + accel * dt, 0.0)
        ev.advance(dt, graph)

        # NPC chromosome tracking
        if i % steps_per_sec == 0:
            sec = i // steps_per_sec
            for v, chrom in npcs:
                if sec < chrom.T and chrom.AC[sec] != STRAIGHT:
                    v.begin_change(chrom.AC[sec], graph)
        for v, chrom in npcs:
            target = _target_speed(chrom, t, dt)
            dv = target - v.speed
            dv = min(max(dv, -NPC_ACCEL_CAP * dt), NPC_ACCEL_CAP * dt)
            v.speed = max(v.speed + dv, 0.0)
            prev = (v.lane, v.s, v.xy, v.heading, v.maneuver, v.progress,
                    v.from_lane, v.to_lane)
            v.advance(dt, graph)
            # anti-overlap clamp among NPCs: wait instead of rear-ending
            for other, _ in npcs:
                if other is v:
                    continue
                if detect_collision(v.state(), other.state()) is not None:
                    (v.lane, v.s, v.xy, v.heading, v.maneuver, v.progress,
                     v.from_lane, v.to_lane) = prev
                    v.speed = 0.0
                    break

        steps.append([ev.state()] + [v.state() for v, _ in npcs])
        for v, _ in npcs:
            contact = detect_collision(ev.state(), v.state())
            if contact is not None:
                collision = {
                    "step": len(steps) - 1,
                    "ev_contact_point": contact["point"],
                    "npc_id": v.vid,
                    "relative_heading": _wrap(v.heading - ev.heading),
                }
                break
        if collision is not None:
            break
    reason = "collision" if collision is not None else "duration_expired"
    return Trace(dt=dt, steps=steps, collision=collision,
                 terminated_reason=reason)


def _target_speed(chrom, t, dt):
    k = int(t + 1e-9)
    if k >= chrom.T - 1:
        return chrom.SP[chrom.T - 1]
    frac = t - k
    return chrom.SP[k] + (chrom.SP[k + 1] - chrom.SP[k]) * frac


def ev_fault(trace: Trace) -> bool:
    """EV-attribution of a collision.

    Attributed to the NPC (not an EV failure) when the contact point lies on
    the EV's rear quarter and the NPC is closing faster than the EV moves.
    """
    if trace.collision is None:
        raise SimulationError("trace has no collision")
    step = trace.collision["step"]
    ev = trace.steps[step][0]
    npc = next(s for s in trace.steps[step]
               if s.vehicle_id == trace.collision["npc_id"])
    px, py = trace.collision["ev_contact_point"]
    c, s_ = math.cos(ev.heading), math.sin(ev.heading)
    local_x = (px - ev.xy[0]) * c + (py - ev.xy[1]) * s_
    rear_quarter = local_x < -VEHICLE_LENGTH / 4.0
    return not (rear_quarter and npc.speed > ev.speed)


# -- trace export ------------------------------------------------------------

def trace_to_jsonl(trace: Trace) -> str:
    lines = []
    for i, states in enumerate(trace.steps):
        t = round(i * trace.dt, 6)
        for st in states:
            lines.append(json.dumps({
                "t": t, "vehicle_id": st.vehicle_id, "x": st.xy[0],
                "y": st.xy[1], "heading": st.heading, "speed": st.speed,
                "lane": st.lane, "maneuver": st.maneuver,
            }))
    footer = {"dt": trace.dt, "terminated_reason": trace.terminated_reason,
              "collision": None}
    if trace.collision is not None:
        footer["collision"] = {
            "step": trace.collision["step"],
            "ev_contact_point": list(trace.collision["ev_contact_point"]),
            "npc_id": trace.collision["npc_id"],
            "relative_heading": trace.collision["relative_heading"],
        }
    lines.append(json.dumps(footer))
    return "\n".join(lines) + "\n"


def trace_from_jsonl(text: str) -> Trace:
    lines = [json.loads(line) for line in text.splitlines() if line.strip()]
    footer = lines[-1]
    if "dt" not in footer:
        raise SimulationError("trace file missing footer record")
    dt = footer["dt"]
    by_step = {}
    for rec in lines[:-1]:
        idx = round(rec["t"] / dt)
        by_step.setdefault(idx, []).append(VehicleState(
            vehicle_id=rec["vehicle_id"], lane=rec["lane"], s=0.0,
            xy=(rec["x"], rec["y"]), heading=rec["heading"],
            speed=rec["speed"], maneuver=rec["maneuver"]))
    steps = [by_step[i] for i in sorted(by_step)]
    collision = footer["collision"]
    if collision is not None:
        collision = {
            "step": collision["step"],
            "ev_contact_point": tuple(collision["ev_contact_point"]),
            "npc_id": collision["npc_id"],
            "relative_heading": collision["relative_heading"],
        }
    return Trace(dt=dt, steps=steps, collision=collision,
                 terminated_reason=footer["terminated_reason"])
