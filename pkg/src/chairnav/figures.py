"""Matplotlib report figures rendered to files alongside the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .mapper import FREE, OCCUPIED, GlobalGrid
from .simulator import WorldModel


def _draw_world(ax, world: WorldModel):
    for w in world.walls:
        ax.plot([w.p1[0], w.p2[0]], [w.p1[1], w.p2[1]], "k-", lw=2)
    for b in world.boxes:
        corners = b.corners()
        ax.fill(corners[:, 0], corners[:, 1], color="0.6")
    for a in world.agents:
        ax.add_patch(plt.Circle(a.pos, a.radius, color="tab:red", alpha=0.5))
        ax.plot(a.waypoints[:, 0], a.waypoints[:, 1], "r:", lw=1)


def save_trajectory_figure(world: WorldModel, trajectories: dict, path,
                           goals=None, title=""):
    """Top-down plot of the world with one line per named trajectory."""
    fig, ax = plt.subplots(figsize=(7, 7))
    _draw_world(ax, world)
    for name, traj in trajectories.items():
        traj = np.asarray(traj)
        if len(traj):
            ax.plot(traj[:, 0], traj[:, 1], lw=1.5, label=name)
            ax.plot(traj[0, 0], traj[0, 1], "o", ms=5, color=ax.lines[-1].get_color())
    if goals:
        gx = [g.x for g in goals]
        gy = [g.y for g in goals]
        ax.plot(gx, gy, "g^", ms=7, label="goals")
    ax.set_aspect("equal")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def save_grid_figure(grid: GlobalGrid, path, trajectory=None, title=""):
    """Occupancy grid image: black obstacles, white free, gray unknown."""
    img = np.full(grid.data.shape, 127, dtype=np.uint8)
    img[grid.data == FREE] = 255
    img[grid.data == OCCUPIED] = 0
    nx, ny = grid.data.shape
    extent = (grid.origin.x, grid.origin.x + nx * grid.resolution,
              grid.origin.y, grid.origin.y + ny * grid.resolution)
    fig, ax = plt.subplots(figsize=(7, 7))
    ax.imshow(img.T, cmap="gray", vmin=0, vmax=255, origin="lower",
              extent=extent, interpolation="nearest")
    if trajectory is not None and len(trajectory):
        traj = np.asarray(trajectory)
        ax.plot(traj[:, 0], traj[:, 1], "tab:orange", lw=1.2, label="trajectory")
        ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def save_door_summary_figure(summaries, path):
    """Perceived vs true width per door with std-dev bars, plus success rates."""
    rows = [s for s in summaries if s.door != "ALL" and s.width_mean is not None]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 5))
    if rows:
        xs = np.arange(len(rows))
        means = [s.width_mean for s in rows]
        stds = [s.width_std or 0.0 for s in rows]
        ax1.errorbar(xs, means, yerr=stds, fmt="o", capsize=3,
                     label="perceived width")
        trues = [s.true_width for s in rows]
        if all(t is not None for t in trues):
            ax1.plot(xs, trues, "k_", ms=14, label="true width")
        ax1.set_xticks(xs)
        ax1.set_xticklabels([s.door for s in rows], rotation=60, fontsize=7)
        ax1.set_ylabel("door width [m]")
        ax1.grid(True, alpha=0.3)
        ax1.legend(fontsize=8)

        ax2.bar(xs - 0.2, [s.detection_rate for s in rows], 0.4, label="detection")
        ax2.bar(xs + 0.2, [s.traversal_rate for s in rows], 0.4, label="traversal")
        ax2.set_xticks(xs)
        ax2.set_xticklabels([s.door for s in rows], rotation=60, fontsize=7)
        ax2.set_ylim(0, 1.05)
        ax2.set_ylabel("success rate")
        ax2.legend(fontsize=8)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
