"""Figures written next to the text reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}
# PNG metadata carries no timestamp, but the Software key changes with the
# matplotlib version; drop it so figures are stable across installs.
PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=PNG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def training_curves(runs, path):
    """FID against iteration, one line per (variant, kind)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        for run in runs:
            pts = [(r["iter"], r["fid"]) for r in run["records"] if r["fid"] is not None]
            if pts:
                it, f = zip(*pts)
                ax.plot(it, f, marker="o", ms=3, lw=1, label=f"{run['variant']} / {run['kind']}")
        ax.set_xlabel("iteration")
        ax.set_ylabel("FID")
        ax.set_yscale("log")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(frameon=False)
        return _save(fig, path)


def sample_grid(samples, path):
    """``samples`` maps (variant, kind) to a stack of 2-D spectrograms."""
    keys = sorted(samples)
    cols = max(len(v) for v in samples.values())
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(keys), cols, figsize=(1.1 * cols, 1.2 * len(keys)), squeeze=False)
        for row, key in zip(axes, keys):
            stack = samples[key]
            for j, ax in enumerate(row):
                ax.set_xticks([])
                ax.set_yticks([])
                if j < len(stack):
                    ax.imshow(stack[j], origin="lower", cmap="magma", aspect="auto")
                else:
                    ax.axis("off")
            row[0].set_ylabel(f"{key[0]}\n{key[1]}", rotation=0, ha="right", va="center")
        fig.subplots_adjust(wspace=0.05, hspace=0.1)
        return _save(fig, path)


def gmm_scatter(points, spec, path):
    """Generated points per variant over the mixture centers and capture radii."""
    names = list(points)
    centers = np.asarray(spec.centers)
    lim = np.abs(centers).max() * 1.4
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(names), figsize=(2.2 * len(names), 2.3), squeeze=False)
        for ax, name in zip(axes[0], names):
            p = np.asarray(points[name])
            ax.scatter(p[:, 0], p[:, 1], s=1, alpha=0.3, color="tab:blue", rasterized=True)
            for c in centers:
                ax.add_patch(plt.Circle(c, 3 * spec.sigma, fill=False, lw=0.6, color="tab:red"))
            ax.set_xlim(-lim, lim)
            ax.set_ylim(-lim, lim)
            ax.set_aspect("equal")
            ax.set_title(name)
        return _save(fig, path)
