"""Pure presentation layer over the producer's CSV/JSON outputs.

Curves are drawn one color per step-size multiplier with a log-scale value
axis; the final iterate of each run carries a star marker. Contour plots
use log-spaced level sets of the sampled slice with trajectories overlaid
in slice coordinates. No quantity is ever recomputed here.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import SchemaError  # noqa: E402
from .figspec import FigureSpec  # noqa: E402
from .inputs import read_grid_csv, read_json, read_trajectory_csv  # noqa: E402

FINAL_MARKER_GID = "final_marker"
CURVE_COLUMNS = {"error_curve": "norm_loss", "distance_curve": "norm_dist"}
CURVE_LABELS = {
    "error_curve": r"$\mathcal{L}(w_k) \, / \, \|M\|_F^2$",
    "distance_curve": r"$\|w_k - w^*\|_2^2 \, / \, \|w^*\|_2^2$",
}
DPI = 150


def _color_table(multipliers) -> dict[float, tuple]:
    palette = matplotlib.colormaps["tab10"].colors
    ordered = sorted(set(multipliers))
    return {mult: palette[i % len(palette)] for i, mult in enumerate(ordered)}


def _legend_label(mult: float) -> str:
    return rf"$\eta = {mult:g} \cdot (2/\lambda_{{\max}})$"


def _draw_curves(ax, spec: FigureSpec) -> None:
    column = CURVE_COLUMNS[spec.kind]
    colors = _color_table([t.eta_multiplier for t in spec.trajectories])
    seen_labels = set()
    for traj in spec.trajectories:
        data = read_trajectory_csv(traj.path, required=("iter", column))
        color = colors[traj.eta_multiplier]
        label = _legend_label(traj.eta_multiplier)
        ax.plot(data["iter"], data[column], color=color,
                label=None if label in seen_labels else label)
        seen_labels.add(label)
        if spec.star_final:
            ax.plot([data["iter"][-1]], [data[column][-1]], marker="*",
                    markersize=14, linestyle="", color=color,
                    gid=FINAL_MARKER_GID, zorder=5)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration $k$")
    ax.set_ylabel(CURVE_LABELS[spec.kind])
    ax.legend()


def _log_levels(values: np.ndarray, count: int = 12) -> np.ndarray:
    positive = values[values > 0]
    if positive.size == 0:
        raise SchemaError("grid has no positive values to contour")
    top = float(positive.max())
    bottom = max(float(positive.min()), top * 1e-14)
    if bottom >= top:
        bottom = top / 10.0
    return np.logspace(np.log10(bottom), np.log10(top), count)


def _draw_contour(ax, spec: FigureSpec) -> None:
    xs, ys, values = read_grid_csv(spec.grid)
    mesh_x, mesh_y = np.meshgrid(xs, ys)
    contours = ax.contour(mesh_x, mesh_y, values.T, levels=_log_levels(values),
                          cmap="viridis", linewidths=0.8)
    ax.clabel(contours, inline=True, fontsize=6, fmt="%.1e")
    colors = _color_table([t.eta_multiplier for t in spec.trajectories])
    for traj in spec.trajectories:
        data = read_trajectory_csv(traj.path, required=("iter", "proj_x", "proj_y"))
        color = colors[traj.eta_multiplier]
        ax.plot(data["proj_x"], data["proj_y"], color=color,
                label=_legend_label(traj.eta_multiplier), linewidth=1.0)
        if spec.star_final:
            ax.plot([data["proj_x"][-1]], [data["proj_y"][-1]], marker="*",
                    markersize=14, linestyle="", color=color,
                    gid=FINAL_MARKER_GID, zorder=5)
    xlabel, ylabel = "$x$", "$y$"
    if spec.basis is not None and read_json(spec.basis).get("mode") == "hessian_v1_vN":
        xlabel, ylabel = r"$x$ (along $v_1$)", r"$y$ (along $v_N$)"
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if spec.trajectories:
        ax.legend()


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure for a spec without saving it."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5), dpi=DPI)
    if spec.kind in CURVE_COLUMNS:
        _draw_curves(ax, spec)
    else:
        _draw_contour(ax, spec)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec, out=None) -> Path:
    """Render the spec to an image file and return its path."""
    target = Path(out) if out is not None else spec.out
    if target is None:
        raise SchemaError("no output path: pass one or set 'out' in the spec")
    target.parent.mkdir(parents=True, exist_ok=True)
    fig = build_figure(spec)
    try:
        fig.savefig(target, dpi=DPI)
    finally:
        plt.close(fig)
    return target
