"""Run outputs: the step log as CSV, a road/trajectory SVG overlay, and
matplotlib figures written next to the CSV.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenario import Scenario
from .simulate import CSV_COLUMNS, RunLog, StepRecord


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def emit_csv(log: RunLog, path: str | Path) -> Path:
    """Write one row per step, 9 significant digits, fixed column order."""
    if not log.records:
        raise ValueError("run log is empty")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in log.records:
            writer.writerow([_fmt(getattr(rec, col)) for col in CSV_COLUMNS])
    return path


def load_csv(path: str | Path) -> list[StepRecord]:
    """Parse a run CSV back into StepRecords (for tests and tooling)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError("unexpected CSV columns")
        for row in reader:
            records.append(
                StepRecord(
                    step=int(row["step"]),
                    t=float(row["t"]),
                    x_true=float(row["x_true"]),
                    y_true=float(row["y_true"]),
                    theta_true=float(row["theta_true"]),
                    x_est=float(row["x_est"]),
                    y_est=float(row["y_est"]),
                    theta_est=float(row["theta_est"]),
                    ce=float(row["ce"]),
                    he=float(row["he"]),
                    steer_cmd=float(row["steer_cmd"]),
                    speed_cmd=float(row["speed_cmd"]),
                    controller=row["controller"],
                    parking_node=row["parking_node"],
                    intersection_node=row["intersection_node"],
                    hazard=row["hazard"] == "true",
                    headlights=row["headlights"] == "true",
                    nearest_obstacle_m=(
                        float(row["nearest_obstacle_m"]) if row["nearest_obstacle_m"] else None
                    ),
                )
            )
    return records


def _polyline(points, css_class: str, elem_id: str | None = None, color: str = "black", width=0.02) -> str:
    coords = " ".join(f"{x:.4f},{-y:.4f}" for x, y in points)
    ident = f' id="{elem_id}"' if elem_id else ""
    return (
        f'<polyline{ident} class="{css_class}" points="{coords}" '
        f'fill="none" stroke="{color}" stroke-width="{width}"/>'
    )


def emit_svg(log: RunLog, scenario: Scenario, path: str | Path) -> Path:
    """Road, ground-truth path, estimated path and FSM annotations.

    Exactly one <polyline> per path (ids path-true / path-est).
    """
    if not log.records:
        raise ValueError("run log is empty")
    path = Path(path)
    road = scenario.road
    xs = np.concatenate([road.left_xs, road.right_xs, [r.x_true for r in log.records]])
    ys = np.concatenate([road.left_ys, road.right_ys, [r.y_true for r in log.records]])
    pad = 0.6
    min_x, max_x = float(xs.min()) - pad, float(xs.max()) + pad
    min_y, max_y = float(ys.min()) - pad, float(ys.max()) + pad

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{min_x:.3f} {-max_y:.3f} '
        f'{max_x - min_x:.3f} {max_y - min_y:.3f}">',
        _polyline(zip(road.left_xs, road.left_ys), "road-boundary", color="#888888"),
        _polyline(zip(road.right_xs, road.right_ys), "road-boundary", color="#888888"),
    ]
    for obs in scenario.obstacles.obstacles:
        pts = obs.corners()
        coords = " ".join(f"{x:.4f},{-y:.4f}" for x, y in pts)
        parts.append(f'<polygon class="obstacle" points="{coords}" fill="#cc6666" stroke="none"/>')
    for placement in scenario.sign_placements:
        parts.append(
            f'<circle class="sign" cx="{placement.x_m:.4f}" cy="{-placement.y_m:.4f}" '
            f'r="0.05" fill="#3366cc"/>'
        )
    parts.append(
        _polyline(
            ((r.x_true, r.y_true) for r in log.records), "path", "path-true", "#117733", 0.03
        )
    )
    parts.append(
        _polyline(((r.x_est, r.y_est) for r in log.records), "path", "path-est", "#ddaa33", 0.02)
    )
    by_step = {r.step: r for r in log.records}
    for step, tr in log.transitions:
        rec = by_step.get(step)
        if rec is None:
            continue
        label = escape(f"{tr.machine}:{tr.to_node}")
        parts.append(
            f'<text class="fsm" x="{rec.x_true + 0.05:.4f}" y="{-rec.y_true:.4f}" '
            f'font-size="0.08">{label}</text>'
        )
    parts.append("</svg>")
    try:
        path.write_text("\n".join(parts))
    except OSError as exc:
        raise OSError(f"cannot write SVG to {path}: {exc}") from exc
    return path


def render_figures(log: RunLog, scenario: Scenario, out_dir: str | Path) -> list[Path]:
    """Trajectory and time-series figures for the report directory."""
    if not log.records:
        raise ValueError("run log is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    road = scenario.road
    t = [r.t for r in log.records]

    fig, ax = plt.subplots(figsize=(7, 6))
    ax.plot(road.left_xs, road.left_ys, color="0.6", lw=1.0, label="lane boundary")
    ax.plot(road.right_xs, road.right_ys, color="0.6", lw=1.0)
    for obs in scenario.obstacles.obstacles:
        pts = obs.corners()
        ax.fill(pts[:, 0], pts[:, 1], color="tab:red", alpha=0.5, lw=0)
    ax.plot([r.x_true for r in log.records], [r.y_true for r in log.records],
            color="tab:green", lw=1.5, label="ground truth")
    ax.plot([r.x_est for r in log.records], [r.y_est for r in log.records],
            color="tab:orange", lw=1.0, ls="--", label="estimate")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{log.scenario_name} — {log.controller} ({log.outcome})")
    ax.legend(loc="best", fontsize=8)
    traj_path = out_dir / "trajectory.png"
    fig.savefig(traj_path, dpi=130, bbox_inches="tight")
    plt.close(fig)

    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    axes[0].plot(t, [r.ce for r in log.records], label="CE [m]")
    axes[0].plot(t, [r.he for r in log.records], label="HE [rad]", alpha=0.7)
    axes[0].axhline(0.0, color="0.8", lw=0.8)
    axes[0].legend(loc="best", fontsize=8)
    axes[0].set_ylabel("path error")
    axes[1].plot(t, [r.speed_cmd for r in log.records], color="tab:blue")
    axes[1].set_ylabel("speed cmd [m/s]")
    axes[2].plot(t, [r.steer_cmd for r in log.records], color="tab:purple")
    axes[2].set_ylabel("steer cmd [rad]")
    axes[2].set_xlabel("t [s]")
    fig.align_ylabels(axes)
    series_path = out_dir / "timeseries.png"
    fig.savefig(series_path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return [traj_path, series_path]
