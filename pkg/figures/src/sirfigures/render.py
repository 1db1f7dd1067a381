"""Figure construction for the five supported figure kinds.

All kinds read only bundle files.  ``build_figure`` returns the
matplotlib Figure (useful for tests and embedding); ``render`` writes
it to disk.  Given identical inputs the figures have identical
dimensions and color scaling: sizes are fixed per kind and color limits
are computed deterministically from the data (or pinned by the
scenario's capacity level).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - after backend selection
import numpy as np  # noqa: E402

from .bundle import Bundle, stride_between  # noqa: E402

FIGURE_KINDS = ("heatmap_z", "control", "difference", "means_overlay",
                "convergence")


@dataclass(frozen=True)
class FigureRequest:
    bundle_path: Path
    figure_kind: str
    output_path: Path

    def __post_init__(self) -> None:
        if self.figure_kind not in FIGURE_KINDS:
            raise ValueError(
                f"unknown figure kind {self.figure_kind!r}; expected one "
                f"of {', '.join(FIGURE_KINDS)}")
        object.__setattr__(self, "bundle_path", Path(self.bundle_path))
        object.__setattr__(self, "output_path", Path(self.output_path))


def _heatmap(ax, times: np.ndarray, matrix: np.ndarray, *, vmin: float,
             vmax: float, cmap: str):
    image = ax.imshow(matrix, aspect="auto", origin="lower",
                      extent=(0.0, 1.0, float(times[0]), float(times[-1])),
                      vmin=vmin, vmax=vmax, cmap=cmap,
                      interpolation="nearest")
    ax.set_xlabel("location x")
    ax.set_ylabel("time [days]")
    return image


def _figure_heatmap_z(bundle: Bundle):
    times, z = bundle.series("z.csv")
    z_max = float(bundle.scenario()["z_max"])
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    image = _heatmap(ax, times, z, vmin=0.0, vmax=1.2 * z_max,
                     cmap="inferno")
    fig.colorbar(image, ax=ax, label="infected fraction z")
    ax.set_title("infected density under the optimized control")
    return fig


def _figure_control(bundle: Bundle):
    times, u = bundle.series("control.csv")
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if u.shape[1] == 1:
        ax.plot(times, u[:, 0], color="tab:blue")
        ax.set_xlabel("time [days]")
        ax.set_ylabel("control u")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("control intensity over time")
    else:
        image = _heatmap(ax, times, u, vmin=0.0, vmax=1.0, cmap="viridis")
        fig.colorbar(image, ax=ax, label="control u")
        ax.set_title("control intensity over space and time")
    return fig


def difference_field(bundle: Bundle) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble-mean minus deterministic infected density on the
    ensemble's time grid."""
    det_times, det_z = bundle.series("z.csv")
    abm_times, abm_z = bundle.series("abm", "controlled", "mean_z.csv")
    stride = stride_between(abm_times, det_times)
    det_sub = det_z[::stride]
    if det_sub.shape != abm_z.shape:
        raise ValueError(
            f"trajectory shapes do not align: {det_sub.shape} vs "
            f"{abm_z.shape}")
    return abm_times, abm_z - det_sub


def _figure_difference(bundle: Bundle):
    times, diff = difference_field(bundle)
    limit = float(np.max(np.abs(diff)))
    if limit == 0.0:
        limit = 1e-12
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    image = _heatmap(ax, times, diff, vmin=-limit, vmax=limit, cmap="RdBu_r")
    fig.colorbar(image, ax=ax, label="ensemble mean − deterministic z")
    ax.set_title("stochastic vs deterministic infected density")
    return fig


def _figure_means_overlay(bundle: Bundle):
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for run_file in bundle.ensemble_run_files(controlled=True):
        times, z = bundle.series("abm", "controlled", run_file.name)
        ax.plot(times, z.mean(axis=1), color="0.7", linewidth=0.8,
                zorder=1)
    ax.plot([], [], color="0.7", linewidth=0.8, label="ensemble runs")
    times, mean_z = bundle.series("abm", "controlled", "mean_z.csv")
    ax.plot(times, mean_z.mean(axis=1), color="tab:orange", linewidth=2.0,
            label="ensemble mean", zorder=3)
    det_times, det_z = bundle.series("z.csv")
    ax.plot(det_times, det_z.mean(axis=1), color="tab:blue",
            linestyle="--", linewidth=1.5, label="deterministic",
            zorder=2)
    ax.set_xlabel("time [days]")
    ax.set_ylabel("spatial mean of z")
    ax.legend()
    ax.set_title("spatial-mean infected: ensemble vs deterministic")
    return fig


def _figure_convergence(bundle: Bundle):
    iterations, cost = bundle.series("iterations.csv")
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.plot(iterations, cost[:, 0], marker=".", color="tab:blue")
    if np.all(cost > 0.0):
        ax.set_yscale("log")
    ax.set_xlabel("sweep iteration")
    ax.set_ylabel("cost J")
    ax.set_title("cost per sweep iteration")
    return fig


_BUILDERS = {
    "heatmap_z": _figure_heatmap_z,
    "control": _figure_control,
    "difference": _figure_difference,
    "means_overlay": _figure_means_overlay,
    "convergence": _figure_convergence,
}


def build_figure(bundle: Bundle, figure_kind: str):
    try:
        builder = _BUILDERS[figure_kind]
    except KeyError:
        raise ValueError(
            f"unknown figure kind {figure_kind!r}; expected one of "
            f"{', '.join(FIGURE_KINDS)}") from None
    return builder(bundle)


def render(request: FigureRequest) -> Path:
    """Build the requested figure and write it as a raster image."""
    bundle = Bundle(directory=request.bundle_path)
    fig = build_figure(bundle, request.figure_kind)
    try:
        fig.tight_layout()
        request.output_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(request.output_path, dpi=150)
    finally:
        plt.close(fig)
    return request.output_path
