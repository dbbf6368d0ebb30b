"""Independent brute-force conflict oracle.

Verification-only re-implementation of the conflict detector: pure-Python
corner-projection rasterization, exhaustive cell-pair interval scan and
fixpoint pairwise merging instead of the production grid/cluster path.
Used by the equivalence tests and the `oracle` CLI command.
"""

from __future__ import annotations

import math

from .conflicts import CELL_SIZE, CLUSTER_TIME_GAP, CONFLICT, EDGE_EPS, SPATIAL
from .sim import EGO_ID, Trace, footprint_corners


def _rect_cell_overlap(corners, cell, cell_size):
    """Generic polygon SAT between a footprint and an axis-aligned cell."""
    x0, y0 = cell[0] * cell_size, cell[1] * cell_size
    cell_corners = [(x0, y0), (x0 + cell_size, y0),
                    (x0 + cell_size, y0 + cell_size), (x0, y0 + cell_size)]
    for poly in (corners, cell_corners):
        for i in range(len(poly)):
            ax, ay = poly[i]
            bx, by = poly[(i + 1) % len(poly)]
            nx, ny = -(by - ay), bx - ax
            norm = math.hypot(nx, ny)
            nx, ny = nx / norm, ny / norm
            amin = min(px * nx + py * ny for px, py in corners)
            amax = max(px * nx + py * ny for px, py in corners)
            bmin = min(px * nx + py * ny for px, py in cell_corners)
            bmax = max(px * nx + py * ny for px, py in cell_corners)
            # penetration must exceed EDGE_EPS; grazing contact is separation
            if amax - bmin <= EDGE_EPS or bmax - amin <= EDGE_EPS:
                return False
    return True


def _occupancy(trace: Trace, cell_size: float):
    """vehicle_id -> {cell: [(t_enter, t_exit), ...]}, by per-step scan."""
    out = {}
    for step_idx, states in enumerate(trace.steps):
        t = step_idx * trace.dt
        for st in states:
            corners = footprint_corners(st)
            xs = [c[0] for c in corners]
            ys = [c[1] for c in corners]
            cells = out.setdefault(st.vehicle_id, {})
            for ix in range(math.floor(min(xs) / cell_size) - 1,
                            math.floor(max(xs) / cell_size) + 2):
                for iy in range(math.floor(min(ys) / cell_size) - 1,
                                math.floor(max(ys) / cell_size) + 2):
                    if not _rect_cell_overlap(corners, (ix, iy), cell_size):
                        continue
                    ivs = cells.setdefault((ix, iy), [])
                    if ivs and abs(ivs[-1][1] - (t - trace.dt)) < 1e-9:
                        ivs[-1] = (ivs[-1][0], t)
                    else:
                        ivs.append((t, t))
    return out


def oracle_conflicts(trace: Trace, t_c: float, t_s: float,
                     cell_size: float = CELL_SIZE):
    """All conflict events, by exhaustive scan.

    Returns a list of dicts {npc_id, delta_t, klass, first_arriver, t_event,
    cells} sorted by (t_event, npc_id).
    """
    occ = _occupancy(trace, cell_size)
    ev_cells = occ.get(EGO_ID, {})
    hits = []
    for vid, npc_cells in occ.items():
        if vid == EGO_ID:
            continue
        for cell, npc_ivs in npc_cells.items():
            if cell not in ev_cells:
                continue
            for ev_iv in ev_cells[cell]:
                for npc_iv in npc_ivs:
                    if ev_iv[0] <= npc_iv[1] and npc_iv[0] <= ev_iv[1]:
                        continue  # co-occupancy, handled as collision upstream
                    if ev_iv[1] < npc_iv[0]:
                        gap, first, t_event = npc_iv[0] - ev_iv[1], "EV", npc_iv[0]
                    else:
                        gap, first, t_event = ev_iv[0] - npc_iv[1], "NPC", ev_iv[0]
                    if gap > t_s:
                        continue
                    if gap <= 0.0:
                        gap = trace.dt / 2.0
                    hits.append({"cell": cell, "npc_id": vid, "gap": gap,
                                 "first": first, "t_event": t_event})
    # fixpoint pairwise merging into events
    events = [[hit] for hit in hits]
    merged = True
    while merged:
        merged = False
        for i in range(len(events)):
            for j in range(i + 1, len(events)):
                if _mergeable(events[i], events[j]):
                    events[i] = events[i] + events[j]
                    del events[j]
                    merged = True
                    break
            if merged:
                break
    out = []
    for group in events:
        rep = min(group, key=lambda h: (h["gap"], h["t_event"], h["cell"]))
        out.append({
            "npc_id": rep["npc_id"],
            "delta_t": rep["gap"],
            "klass": CONFLICT if rep["gap"] <= t_c else SPATIAL,
            "first_arriver": rep["first"],
            "t_event": rep["t_event"],
            "cells": sorted(h["cell"] for h in group),
        })
    out.sort(key=lambda e: (e["t_event"], e["npc_id"], e["cells"][0]))
    return out


def _mergeable(group_a, group_b):
    for a in group_a:
        for b in group_b:
            if (a["npc_id"] == b["npc_id"]
                    and abs(a["cell"][0] - b["cell"][0]) <= 1
                    and abs(a["cell"][1] - b["cell"][1]) <= 1
                    and abs(a["t_event"] - b["t_event"]) <= CLUSTER_TIME_GAP):
                return True
    return False
