"""Report artifacts: CSV summaries and SVG figures derived from a ledger.

All writers are pure functions of their inputs and write atomically
(temp file + rename), so report regeneration can never leave partial
artifacts behind.
"""

from __future__ import annotations

import hashlib
import os

from .campaign import CampaignMetrics
from .road import LaneGraph
from .sim import Trace, footprint_corners


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- CSV ---------------------------------------------------------------------

def write_metrics_csv(metrics: CampaignMetrics, path: str):
    def fmt(v):
        return "" if v is None else str(v)

    rows = [
        ("executed_steps", metrics.executed_steps),
        ("total_collisions", metrics.total_collisions),
        ("collision_types", metrics.distinct_types),
        ("steps_to_first_collision", metrics.steps_to_first_collision),
        ("avg_steps_per_collision", metrics.avg_steps_per_collision),
        ("steps_to_all_types", metrics.steps_to_all_types),
    ]
    text = "metric,value\n" + "".join(f"{k},{fmt(v)}\n" for k, v in rows)
    _atomic_write(path, text)


def write_type_growth_csv(metrics: CampaignMetrics, path: str):
    text = "step,cumulative_types\n" + "".join(
        f"{step},{n}\n" for step, n in metrics.type_growth_curve)
    _atomic_write(path, text)


def write_heat_strip_csv(metrics: CampaignMetrics, path: str):
    text = "step,type_key\n" + "".join(
        f"{i + 1},{key}\n" for i, key in enumerate(metrics.heat_strip))
    _atomic_write(path, text)


def write_conflicts_csv(metrics: CampaignMetrics, path: str):
    text = "step,conflicts\n" + "".join(
        f"{step},{v}\n" for step, v in metrics.conflicts_per_generation)
    _atomic_write(path, text)


# -- SVG ---------------------------------------------------------------------

def _type_color(key: str) -> str:
    digest = hashlib.md5(key.encode()).digest()
    # keep colors saturated and distinct from the gray background
    r, g, b = (60 + d % 180 for d in digest[:3])
    return f"#{r:02x}{g:02x}{b:02x}"


def write_heat_strip_svg(metrics: CampaignMetrics, path: str,
                         bar_width: int = 4, height: int = 60):
    n = max(len(metrics.heat_strip), 1)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{n * bar_width}" height="{height}">']
    for i, key in enumerate(metrics.heat_strip):
        color = _type_color(key) if key else "#d9d9d9"
        parts.append(f'<rect x="{i * bar_width}" y="0" width="{bar_width}" '
                     f'height="{height}" fill="{color}"/>')
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")


def _polyline_svg(points, path, width=640, height=240, margin=30):
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if points:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        x_span = max(max(xs) - min(xs), 1e-9)
        y_span = max(max(ys) - min(ys), 1e-9)

        def sx(x):
            return margin + (x - min(xs)) / x_span * (width - 2 * margin)

        def sy(y):
            return height - margin - (y - min(ys)) / y_span * (height - 2 * margin)

        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in points)
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="#1f6fb2" stroke-width="2"/>')
        parts.append(f'<line x1="{margin}" y1="{height - margin}" '
                     f'x2="{width - margin}" y2="{height - margin}" '
                     f'stroke="black"/>')
        parts.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
                     f'y2="{height - margin}" stroke="black"/>')
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")


def write_type_growth_svg(metrics: CampaignMetrics, path: str):
    _polyline_svg(metrics.type_growth_curve, path)


def write_conflicts_svg(metrics: CampaignMetrics, path: str):
    _polyline_svg(metrics.conflicts_per_generation, path)


def write_all(metrics: CampaignMetrics, out_dir: str):
    write_metrics_csv(metrics, os.path.join(out_dir, "metrics.csv"))
    write_type_growth_csv(metrics, os.path.join(out_dir, "type_growth.csv"))
    write_heat_strip_csv(metrics, os.path.join(out_dir, "heat_strip.csv"))
    write_conflicts_csv(metrics,
                        os.path.join(out_dir, "conflicts_per_generation.csv"))
    write_heat_strip_svg(metrics, os.path.join(out_dir, "heat_strip.svg"))
    write_type_growth_svg(metrics, os.path.join(out_dir, "type_growth.svg"))
    write_conflicts_svg(metrics,
                        os.path.join(out_dir, "conflicts_per_generation.svg"))


# -- replay frames -----------------------------------------------------------

def write_frame_svgs(trace: Trace, graph: LaneGraph, out_dir: str):
    """One top-down SVG per scenario second: lane centerlines + footprints."""
    xs, ys = [], []
    for lane in graph.lanes.values():
        for x, y in lane.centerline:
            xs.append(x)
            ys.append(y)
    pad = 10.0
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    scale = min(900.0 / (x1 - x0), 300.0 / (y1 - y0))
    width, height = (x1 - x0) * scale, (y1 - y0) * scale

    def px(x):
        return (x - x0) * scale

    def py(y):
        return height - (y - y0) * scale

    steps_per_sec = round(1.0 / trace.dt)
    written = []
    for sec_idx, step_idx in enumerate(
            range(0, len(trace.steps), steps_per_sec)):
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
                 f'width="{width:.0f}" height="{height:.0f}">',
                 f'<rect width="{width:.0f}" height="{height:.0f}" '
                 f'fill="#f4f4f4"/>']
        for lane in graph.lanes.values():
            pts = " ".join(f"{px(x):.1f},{py(y):.1f}"
                           for x, y in lane.centerline)
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="#bbbbbb" '
                         f'stroke-width="{lane.width * scale:.1f}" '
                         f'stroke-opacity="0.6"/>')
        for st in trace.steps[step_idx]:
            corners = footprint_corners(st)
            pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in corners)
            color = "#c0392b" if st.vehicle_id == "ego" else "#2c3e50"
            parts.append(f'<polygon points="{pts}" fill="{color}" '
                         f'fill-opacity="0.8"/>')
        parts.append("</svg>")
        path = os.path.join(out_dir, f"frame_{sec_idx:04d}.svg")
        _atomic_write(path, "\n".join(parts) + "\n")
        written.append(path)
    return written
