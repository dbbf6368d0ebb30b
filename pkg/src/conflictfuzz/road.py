"""Lane-graph road geometry: synthetic map templates and coordinate conversions.

Maps are desk-scale templates rather than imported map files. Four templates
cover the interaction geometries the conflict classifier needs: parallel
same-direction lanes (straight3), an opposing two-lane corridor (twoway2),
a ramp converging on a mainline (merge) and two transversal roads (cross).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

LANE_WIDTH = 3.5
VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 2.0

TEMPLATE_IDS = ("straight3", "twoway2", "merge", "cross")

# lane_relation outcomes
SAME = "same"
ADJACENT_SAME_DIR = "adjacent_same_dir"
MERGING = "merging"
CROSSING = "crossing"
OPPOSING_CONSTRAINED = "opposing_constrained"
OPPOSING_UNCONSTRAINED = "opposing_unconstrained"


class RoadError(ValueError):
    pass


@dataclass(frozen=True)
class Lane:
    """One lane: polyline centerline plus topology links."""

    id: str
    centerline: tuple  # ((x, y), ...) ordered along travel direction
    width: float = LANE_WIDTH
    left_neighbor: str | None = None
    right_neighbor: str | None = None
    successors: tuple = ()
    oncoming_group: str | None = None
    # cumulative arclength at each centerline point, derived
    _arclength: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.centerline) < 2:
            raise RoadError(f"lane {self.id}: centerline needs >= 2 points")
        if self.width <= 0:
            raise RoadError(f"lane {self.id}: width must be positive")
        acc = [0.0]
        for (x0, y0), (x1, y1) in zip(self.centerline, self.centerline[1:]):
            step = math.hypot(x1 - x0, y1 - y0)
            if step <= 0:
                raise RoadError(f"lane {self.id}: arclength not strictly increasing")
            acc.append(acc[-1] + step)
        object.__setattr__(self, "_arclength", tuple(acc))

    @property
    def length(self) -> float:
        return self._arclength[-1]

    def point_heading(self, s: float) -> tuple:
        """Centerline point and tangent heading at arclength s."""
        if s < -1e-9 or s > self.length + 1e-9:
            raise RoadError(f"lane {self.id}: s={s} outside [0, {self.length}]")
        s = min(max(s, 0.0), self.length)
        arc = self._arclength
        # segment index via scan; centerlines are short polylines
        i = 0
        while i < len(arc) - 2 and arc[i + 1] < s:
            i += 1
        (x0, y0), (x1, y1) = self.centerline[i], self.centerline[i + 1]
        seg = arc[i + 1] - arc[i]
        f = (s - arc[i]) / seg
        return (x0 + f * (x1 - x0), y0 + f * (y1 - y0)), math.atan2(y1 - y0, x1 - x0)


@dataclass(frozen=True)
class LaneGraph:
    lanes: dict  # id -> Lane
    template_id: str
    length: float
    speed_limit: float

    def __post_init__(self):
        for lane in self.lanes.values():
            for ref in (lane.left_neighbor, lane.right_neighbor, *lane.successors):
                if ref is not None and ref not in self.lanes:
                    raise RoadError(f"lane {lane.id}: dangling reference {ref}")
        # neighbor symmetry
        for lane in self.lanes.values():
            if lane.left_neighbor is not None:
                if self.lanes[lane.left_neighbor].right_neighbor != lane.id:
                    raise RoadError(f"asymmetric neighbor link at {lane.id}")
            if lane.right_neighbor is not None:
                if self.lanes[lane.right_neighbor].left_neighbor != lane.id:
                    raise RoadError(f"asymmetric neighbor link at {lane.id}")

    def lane(self, lane_id: str) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise RoadError(f"unknown lane id {lane_id!r}") from None


@dataclass(frozen=True)
class Pose:
    lane: str
    s: float
    d: float
    world_xy: tuple
    heading: float
    speed: float = 0.0


def _ramp_polyline(x_end: float, y_start: float, n: int = 60) -> tuple:
    """Smooth merge-ramp centerline from (0, y_start) converging to (x_end, 0).

    Cubic lateral blend gives tangential arrival at the mainline.
    """
    pts = []
    for i in range(n + 1):
        f = i / n
        x = f * x_end
        y = y_start * (1.0 - (3 * f * f - 2 * f ** 3))
        pts.append((x, y))
    return tuple(pts)


def build_template(template_id: str, length: float, speed_limit: float) -> LaneGraph:
    """Construct one of the four synthetic map templates. Deterministic."""
    if template_id not in TEMPLATE_IDS:
        raise RoadError(f"unknown template id {template_id!r}")
    if length < 100:
        raise RoadError(f"length {length} below minimum 100 m")
    w = LANE_WIDTH
    if template_id == "straight3":
        # three parallel same-direction lanes along +x, L0 rightmost
        lanes = {}
        ids = ["L0", "L1", "L2"]
        for i, lid in enumerate(ids):
            lanes[lid] = Lane(
                id=lid,
                centerline=((0.0, i * w), (length, i * w)),
                left_neighbor=ids[i + 1] if i < 2 else None,
                right_neighbor=ids[i - 1] if i > 0 else None,
            )
    elif template_id == "twoway2":
        lanes = {
            "E": Lane(id="E", centerline=((0.0, 0.0), (length, 0.0)),
                      oncoming_group="corridor0"),
            "W": Lane(id="W", centerline=((length, w), (0.0, w)),
                      oncoming_group="corridor0"),
        }
    elif template_id == "merge":
        x_join = 0.6 * length
        lanes = {
            "M": Lane(id="M", centerline=((0.0, 0.0), (x_join, 0.0)),
                      successors=("S",)),
            "R": Lane(id="R", centerline=_ramp_polyline(x_join, -12.0),
                      successors=("S",)),
            "S": Lane(id="S", centerline=((x_join, 0.0), (length, 0.0))),
        }
    else:  # cross
        half = length / 2.0
        lanes = {
            "A": Lane(id="A", centerline=((0.0, 0.0), (length, 0.0))),
            "B": Lane(id="B", centerline=((half, -half), (half, half))),
        }
    return LaneGraph(lanes=lanes, template_id=template_id,
                     length=float(length), speed_limit=float(speed_limit))


def to_world(graph: LaneGraph, lane_id: str, s: float, d: float) -> tuple:
    """World point at arclength s, offset d to the left of travel direction."""
    lane = graph.lane(lane_id)
    (x, y), heading = lane.point_heading(s)
    nx, ny = -math.sin(heading), math.cos(heading)
    return (x + d * nx, y + d * ny), heading


def project_to_lane(graph: LaneGraph, lane_id: str, xy: tuple) -> tuple:
    """Inverse of to_world: nearest (s, d) on the lane for a world point."""
    lane = graph.lane(lane_id)
    px, py = xy
    best = None
    arc = lane._arclength
    for i in range(len(lane.centerline) - 1):
        (x0, y0), (x1, y1) = lane.centerline[i], lane.centerline[i + 1]
        dx, dy = x1 - x0, y1 - y0
        seg2 = dx * dx + dy * dy
        f = ((px - x0) * dx + (py - y0) * dy) / seg2
        f = min(max(f, 0.0), 1.0)
        cx, cy = x0 + f * dx, y0 + f * dy
        dist = math.hypot(px - cx, py - cy)
        if best is None or dist < best[0]:
            seg = math.sqrt(seg2)
            # signed offset: positive to the left of travel direction
            sign = 1.0 if (dx * (py - cy) - dy * (px - cx)) > 0 else -1.0
            best = (dist, arc[i] + f * seg, sign * dist)
    return best[1], best[2]


def _segments(lane: Lane):
    return list(zip(lane.centerline, lane.centerline[1:]))


def _segment_intersection(a0, a1, b0, b1):
    """Proper intersection point of two segments, or None."""
    ax, ay = a1[0] - a0[0], a1[1] - a0[1]
    bx, by = b1[0] - b0[0], b1[1] - b0[1]
    den = ax * by - ay * bx
    if abs(den) < 1e-12:
        return None
    t = ((b0[0] - a0[0]) * by - (b0[1] - a0[1]) * bx) / den
    u = ((b0[0] - a0[0]) * ay - (b0[1] - a0[1]) * ax) / den
    if -1e-9 <= t <= 1 + 1e-9 and -1e-9 <= u <= 1 + 1e-9:
        return (a0[0] + t * ax, a0[1] + t * ay)
    return None


def centerline_intersection(lane_a: Lane, lane_b: Lane):
    """First transversal intersection point and crossing angle (radians)."""
    for a0, a1 in _segments(lane_a):
        for b0, b1 in _segments(lane_b):
            pt = _segment_intersection(a0, a1, b0, b1)
            if pt is not None:
                ha = math.atan2(a1[1] - a0[1], a1[0] - a0[0])
                hb = math.atan2(b1[1] - b0[1], b1[0] - b0[0])
                ang = abs(_wrap_angle(ha - hb))
                return pt, ang
    return None


def _wrap_angle(a: float) -> float:
    while a > math.pi:
        a -= 2 * math.pi
    while a < -math.pi:
        a += 2 * math.pi
    return a


def _mid_heading(lane: Lane) -> float:
    return lane.point_heading(lane.length / 2.0)[1]


def _successor_connected(graph: LaneGraph, a: str, b: str) -> bool:
    """True if b is reachable from a along successor links (or vice versa)."""

    def reach(src, dst):
        seen, frontier = set(), [src]
        while frontier:
            cur = frontier.pop()
            if cur == dst:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            frontier.extend(graph.lanes[cur].successors)
        return False

    return reach(a, b) or reach(b, a)


def lane_relation(graph: LaneGraph, lane_a: str, lane_b: str) -> str:
    """Geometric relation between two lanes, the substrate for conflict typing."""
    la, lb = graph.lane(lane_a), graph.lane(lane_b)
    if la.id == lb.id or _successor_connected(graph, la.id, lb.id):
        return SAME
    if la.left_neighbor == lb.id or la.right_neighbor == lb.id:
        return ADJACENT_SAME_DIR
    # merging: distinct lanes converging into a shared successor
    sa = set(la.successors)
    for succ in lb.successors:
        if succ in sa or _successor_connected(graph, succ, la.id):
            return MERGING
    for succ in la.successors:
        if _successor_connected(graph, succ, lb.id):
            return MERGING
    hit = centerline_intersection(la, lb)
    if hit is not None and math.radians(45) <= hit[1] <= math.radians(135):
        return CROSSING
    diff = abs(_wrap_angle(_mid_heading(la) - _mid_heading(lb)))
    if diff > math.radians(135):
        if (la.oncoming_group is not None
                and la.oncoming_group == lb.oncoming_group
                and la.left_neighbor is None and la.right_neighbor is None
                and lb.left_neighbor is None and lb.right_neighbor is None):
            return OPPOSING_CONSTRAINED
        return OPPOSING_UNCONSTRAINED
    # remaining same-direction pairs (e.g. two lanes apart) converge only via
    # neighbor-reachable lane changes; treat as merging
    return MERGING


def overlap_region(graph: LaneGraph):
    """Representative convergence/intersection point for templates that have one."""
    if graph.template_id == "cross":
        return centerline_intersection(graph.lane("A"), graph.lane("B"))[0]
    if graph.template_id == "merge":
        return graph.lane("S").centerline[0]
    return None
