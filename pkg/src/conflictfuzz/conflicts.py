"""Conflict analysis: occupancy rasterization, space-sharing event detection
and conflict-type classification.

A conflict is two vehicles reaching the same world-grid cell within a small
arrival-time gap (post-encroachment time). Gaps up to t_c are conflicts,
gaps in (t_c, t_s] are spatial conflicts; both drive the search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import road
from .road import LaneGraph, VEHICLE_LENGTH, VEHICLE_WIDTH
from .sim import EGO_ID, KEEP_LANE, Trace

CELL_SIZE = 2.5
EDGE_EPS = 1e-9  # minimum penetration depth for cell occupancy
DEFAULT_TC = 3.0
DEFAULT_TS = 15.0
CLUSTER_TIME_GAP = 1.0

CONFLICT = "Conflict"
SPATIAL = "SpatialConflict"

# conflict types
MP = "MP"
CP = "CP"
OP = "OP"
UHP = "UHP"
CHP = "CHP"


@dataclass
class OccupancyGrid:
    cell_size: float
    dt: float
    duration: float
    # vehicle_id -> {(ix, iy): [(t_enter, t_exit), ...]}
    intervals: dict


@dataclass
class ConflictRecord:
    npc_id: str
    cells: frozenset
    ev_time: float
    npc_time: float
    delta_t: float
    first_arriver: str  # "EV" | "NPC"
    klass: str  # Conflict | SpatialConflict
    ctype: str | None = None
    t_event: float = 0.0  # second the later vehicle reaches the space
    diagnostic: str | None = None


@dataclass
class ConflictSet:
    conflicts: list = field(default_factory=list)
    spatial: list = field(default_factory=list)

    def by_npc(self, klass: str) -> dict:
        src = self.conflicts if klass == CONFLICT else self.spatial
        out = {}
        for rec in src:
            out.setdefault(rec.npc_id, []).append(rec)
        return out

    def npc_ids(self):
        return {r.npc_id for r in self.conflicts} | {r.npc_id for r in self.spatial}


def rasterize(trace: Trace, cell_size: float = CELL_SIZE) -> OccupancyGrid:
    """Footprint occupancy intervals per (vehicle, cell).

    Vectorized closed-form rectangle/cell separating-axis test over all
    steps and candidate cells at once.
    """
    if not trace.steps:
        raise ValueError("empty trace")
    n = len(trace.steps)
    h = cell_size / 2.0
    hl, hw = VEHICLE_LENGTH / 2.0, VEHICLE_WIDTH / 2.0
    reach = math.hypot(hl, hw) + math.hypot(h, h)
    win = math.ceil(reach / cell_size)
    offs = np.array([(ox, oy) for ox in range(-win, win + 1)
                     for oy in range(-win, win + 1)])  # (K, 2)
    intervals = {}
    n_vehicles = len(trace.steps[0])
    for vi in range(n_vehicles):
        vid = trace.steps[0][vi].vehicle_id
        x = np.array([trace.steps[i][vi].xy[0] for i in range(n)])
        y = np.array([trace.steps[i][vi].xy[1] for i in range(n)])
        th = np.array([trace.steps[i][vi].heading for i in range(n)])
        cth, sth = np.cos(th), np.sin(th)
        base = np.stack([np.floor(x / cell_size), np.floor(y / cell_size)],
                        axis=1).astype(np.int64)  # (N, 2)
        cells = base[:, None, :] + offs[None, :, :]  # (N, K, 2)
        ccx = (cells[:, :, 0] + 0.5) * cell_size
        ccy = (cells[:, :, 1] + 0.5) * cell_size
        dx = ccx - x[:, None]
        dy = ccy - y[:, None]
        ac, as_ = np.abs(cth)[:, None], np.abs(sth)[:, None]
        # a cell counts as occupied only when penetrated by more than
        # EDGE_EPS on every axis; grazing contact is not occupancy
        cell_u = h * (ac + as_)  # cell half-extent on the OBB axes
        hit = (np.abs(dx) < h + hl * ac + hw * as_ - EDGE_EPS)
        hit &= (np.abs(dy) < h + hl * as_ + hw * ac - EDGE_EPS)
        proj_u = dx * cth[:, None] + dy * sth[:, None]
        hit &= (np.abs(proj_u) < hl + cell_u - EDGE_EPS)
        proj_v = -dx * sth[:, None] + dy * cth[:, None]
        hit &= (np.abs(proj_v) < hw + cell_u - EDGE_EPS)
        steps_idx, cell_idx = np.nonzero(hit)
        occ_cells = cells[steps_idx, cell_idx]  # (M, 2)
        order = np.lexsort((steps_idx, occ_cells[:, 1], occ_cells[:, 0]))
        cur_key, run_start, run_prev = None, 0, 0
        by_vehicle = {}
        for idx in order:
            key = (int(occ_cells[idx, 0]), int(occ_cells[idx, 1]))
            step = int(steps_idx[idx])
            if key != cur_key or step != run_prev + 1:
                if cur_key is not None:
                    by_vehicle.setdefault(cur_key, []).append(
                        (run_start * trace.dt, run_prev * trace.dt))
                cur_key, run_start = key, step
            run_prev = step
        if cur_key is not None:
            by_vehicle.setdefault(cur_key, []).append(
                (run_start * trace.dt, run_prev * trace.dt))
        intervals[vid] = by_vehicle
    return OccupancyGrid(cell_size=cell_size, dt=trace.dt,
                         duration=trace.duration, intervals=intervals)


def _cell_hits(grid: OccupancyGrid, t_s: float):
    """Per-cell EV/NPC arrival-gap hits, before clustering."""
    ev_cells = grid.intervals.get(EGO_ID)
    if ev_cells is None:
        raise ValueError("grid has no EV occupancy")
    hits = []
    for vid, npc_cells in grid.intervals.items():
        if vid == EGO_ID:
            continue
        for cell in ev_cells.keys() & npc_cells.keys():
            for ev_iv in ev_cells[cell]:
                for npc_iv in npc_cells[cell]:
                    hit = _pair_gap(cell, vid, ev_iv, npc_iv, grid.dt, t_s)
                    if hit is not None:
                        hits.append(hit)
    return hits


def _pair_gap(cell, vid, ev_iv, npc_iv, dt, t_s):
    if ev_iv[0] <= npc_iv[1] and npc_iv[0] <= ev_iv[1]:
        return None  # co-occupancy without contact: side-by-side adjacency
    if ev_iv[1] < npc_iv[0]:
        gap = npc_iv[0] - ev_iv[1]
        first, t_event = "EV", npc_iv[0]
    else:
        gap = ev_iv[0] - npc_iv[1]
        first, t_event = "NPC", ev_iv[0]
    if gap > t_s:
        return None
    if gap <= 0.0:
        gap = dt / 2.0  # zero-PET without contact; keep distinct from collision
    return {"cell": cell, "npc_id": vid, "ev_enter": ev_iv[0],
            "npc_enter": npc_iv[0], "gap": gap, "first": first,
            "t_event": t_event}


def _cluster(hits):
    """Union hits whose cells are 8-adjacent and whose event times are close."""
    n = len(hits)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            a, b = hits[i], hits[j]
            if a["npc_id"] != b["npc_id"]:
                continue
            if (abs(a["cell"][0] - b["cell"][0]) <= 1
                    and abs(a["cell"][1] - b["cell"][1]) <= 1
                    and abs(a["t_event"] - b["t_event"]) <= CLUSTER_TIME_GAP):
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(hits[i])
    return list(groups.values())


def find_conflicts(grid: OccupancyGrid, t_c: float = DEFAULT_TC,
                   t_s: float = DEFAULT_TS) -> ConflictSet:
    """Cluster shared-cell hits into conflict / spatial-conflict events."""
    result = ConflictSet()
    for group in _cluster(_cell_hits(grid, t_s)):
        rep = min(group, key=lambda hit: (hit["gap"], hit["t_event"], hit["cell"]))
        rec = ConflictRecord(
            npc_id=rep["npc_id"],
            cells=frozenset(hit["cell"] for hit in group),
            ev_time=rep["ev_enter"],
            npc_time=rep["npc_enter"],
            delta_t=rep["gap"],
            first_arriver=rep["first"],
            klass=CONFLICT if rep["gap"] <= t_c else SPATIAL,
            t_event=rep["t_event"],
        )
        (result.conflicts if rec.klass == CONFLICT else result.spatial).append(rec)
    key = lambda r: (r.t_event, r.npc_id, min(r.cells))
    result.conflicts.sort(key=key)
    result.spatial.sort(key=key)
    return result


def classify_conflict(event: ConflictRecord, trace: Trace,
                      graph: LaneGraph) -> str:
    """Assign one of the five prototypical conflict types."""
    ev_state = _state_at(trace, event.ev_time, EGO_ID)
    npc_state = _state_at(trace, event.npc_time, event.npc_id)
    relation = road.lane_relation(graph, ev_state.lane, npc_state.lane)
    hdiff = abs(_wrap(ev_state.heading - npc_state.heading))
    if relation == road.SAME and hdiff <= math.radians(30):
        return OP
    if relation == road.OPPOSING_CONSTRAINED:
        return CHP
    if relation == road.OPPOSING_UNCONSTRAINED:
        return UHP
    if relation == road.CROSSING:
        return CP
    if relation == road.MERGING:
        return MP
    if (ev_state.maneuver != KEEP_LANE or npc_state.maneuver != KEEP_LANE):
        return MP  # one vehicle mid-change into the other's path
    event.diagnostic = f"unclassifiable relation {relation}"
    return MP


def classify_all(cset: ConflictSet, trace: Trace, graph: LaneGraph) -> ConflictSet:
    for rec in cset.conflicts + cset.spatial:
        rec.ctype = classify_conflict(rec, trace, graph)
    return cset


def conflict_count(cset: ConflictSet) -> int:
    """Number of full conflicts; spatial conflicts are excluded."""
    return len(cset.conflicts)


def _state_at(trace: Trace, t: float, vehicle_id: str):
    idx = min(int(round(t / trace.dt)), len(trace.steps) - 1)
    for st in trace.steps[idx]:
        if st.vehicle_id == vehicle_id:
            return st
    raise ValueError(f"vehicle {vehicle_id!r} not in trace")


def _wrap(a):
    while a > math.pi:
        a -= 2 * math.pi
    while a < -math.pi:
        a += 2 * math.pi
    return a
