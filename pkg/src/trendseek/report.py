"""Figure rendering for ranked results: raw series with the fitted line
segments and break point markers overlaid, one PNG per result plus a
summary grid."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from trendseek.executor import RankedResult


def _draw(ax: "plt.Axes", result: RankedResult) -> None:
    ax.plot(result.series_x, result.series_y, color="#9aa7b8", linewidth=0.9, label="series")
    bin_x = np.asarray(result.bin_x)
    bin_y = np.asarray(result.bin_y)
    # Fits are in (bin position, normalized value) space; map both axes back
    # through the bin grid for display.
    for (lo, hi), fit in zip(result.expr_ranges, result.fits):
        if fit is None:
            continue
        xs = bin_x[[lo, hi]]
        ys = np.array([fit.value_at(lo), fit.value_at(hi)])
        ys = _denormalize(ys, bin_y, result)
        ax.plot(xs, ys, color="#d9534f", linewidth=2.2)
    for bx in result.breakpoint_x:
        ax.axvline(bx, color="#5b8def", linestyle="--", linewidth=0.9, alpha=0.8)
    ax.set_title(f"{result.viz_id}  score={result.total:+.3f}", fontsize=10)
    ax.tick_params(labelsize=7)


def _denormalize(ys: np.ndarray, bin_y: np.ndarray, result: RankedResult) -> np.ndarray:
    # bin_y is the engine-space series; series_y is raw. Match the affine
    # transform between them so fitted lines land on the raw plot.
    raw = np.asarray(result.series_y, dtype=np.float64)
    eng = np.asarray(bin_y, dtype=np.float64)
    if len(eng) < 2 or float(np.std(eng)) == 0.0:
        return np.full_like(ys, float(np.mean(raw)) if len(raw) else 0.0)
    scale = float(np.std(raw)) / float(np.std(eng)) if float(np.std(eng)) > 0 else 1.0
    shift = float(np.mean(raw)) - scale * float(np.mean(eng))
    return ys * scale + shift


def render_results(
    results: Sequence[RankedResult], out_dir: str, prefix: str = "result"
) -> list[str]:
    """Write one PNG per result and a rank-ordered grid; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[str] = []
    for rank, result in enumerate(results, start=1):
        fig, ax = plt.subplots(figsize=(6, 3), dpi=110)
        _draw(ax, result)
        fig.tight_layout()
        path = out / f"{prefix}_{rank:02d}_{result.viz_id}.png"
        fig.savefig(path)
        plt.close(fig)
        paths.append(str(path))
    if results:
        cols = min(3, len(results))
        rows = (len(results) + cols - 1) // cols
        fig, axes = plt.subplots(rows, cols, figsize=(5 * cols, 2.6 * rows), dpi=110, squeeze=False)
        for idx, result in enumerate(results):
            _draw(axes[idx // cols][idx % cols], result)
        for idx in range(len(results), rows * cols):
            axes[idx // cols][idx % cols].axis("off")
        fig.tight_layout()
        grid_path = out / f"{prefix}_grid.png"
        fig.savefig(grid_path)
        plt.close(fig)
        paths.append(str(grid_path))
    return paths
