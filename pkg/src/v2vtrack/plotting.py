"""PNG figures for a finished run, written next to the CSV/JSONL outputs.

Figures are built on bare ``Figure`` objects so no pyplot state or GUI
backend is touched.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .metrics import SYSTEMS

COLORS = {"local": "tab:red", "v2v": "tab:green", "priority": "tab:blue"}
PANELS = (("localization", "Localization"), ("missed", "Missed targets"),
          ("false_", "False tracks"), ("switching", "Switching"))


def _times(result) -> np.ndarray:
    return np.array([s.t for s in result.snapshots])


def plot_gospa_total(result, path: Path) -> Path:
    t = _times(result)
    fig = Figure(figsize=(9, 4.5))
    ax = fig.subplots()
    for system in SYSTEMS:
        ax.plot(t, [b.total for b in result.report.series[system]], color=COLORS[system], lw=1.4,
                label=f"{system} (mean {result.report.mean(system, 'total'):.2f})")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("GOSPA")
    ax.set_title(f"GOSPA per frame, p={result.report.gospa.p:g} c={result.report.gospa.c:g}")
    ax.legend(loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return path


def plot_gospa_components(result, path: Path) -> Path:
    t = _times(result)
    fig = Figure(figsize=(10, 7))
    axes = fig.subplots(2, 2, sharex=True)
    for ax, (comp, title) in zip(axes.flat, PANELS):
        for system in SYSTEMS:
            ax.plot(t, [getattr(b, comp) for b in result.report.series[system]], color=COLORS[system],
                    lw=1.2, label=system)
        ax.set_title(title)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("Time (s)")
    axes[0, 0].legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return path


def plot_scene(result, path: Path) -> Path:
    """Ground-truth paths with the local and priority track positions on top."""
    fig = Figure(figsize=(8, 8))
    ax = fig.subplots()
    paths = {}
    for snap in result.snapshots:
        for actor_id, xy in snap.truths.items():
            paths.setdefault(actor_id, []).append(xy)
    for actor_id, pts in sorted(paths.items()):
        pts = np.array(pts)
        ax.plot(pts[:, 0], pts[:, 1], color="0.4", lw=1)
        ax.annotate(str(actor_id), pts[0], fontsize=8)
    cfg = result.config
    ego = np.array([[w.x_m, w.y_m] for w in cfg.actor(cfg.ego_id).waypoints])
    ax.plot(ego[:, 0], ego[:, 1], color="k", ls="--", lw=1.2, label="ego")
    for system in ("local", "priority"):
        pts = np.array([xy for snap in result.snapshots for xy in snap.systems[system].values()])
        if len(pts):
            ax.scatter(pts[:, 0], pts[:, 1], s=2, color=COLORS[system], alpha=0.4, label=system)
    for x, y in cfg.static_reflectors:
        ax.scatter([x], [y], marker="x", color="k", s=30)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", markerscale=4)
    ax.set_title(cfg.name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return path


def render_figures(result, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    return [plot_gospa_total(result, out_dir / "gospa_total.png"),
            plot_gospa_components(result, out_dir / "gospa_components.png"),
            plot_scene(result, out_dir / "scene.png")]
