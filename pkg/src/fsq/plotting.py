"""Report figures written next to the tabular outputs.

Uses the Agg backend and the object API only, so nothing touches a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def degree_histogram(degrees, threshold: float, path, title: str | None = None) -> Path:
    """Histogram of fiber degrees with the acceptance threshold marked."""
    degrees = np.asarray(degrees, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.2), constrained_layout=True)
    bins = np.linspace(0.0, 1.0, 21)
    accepted = degrees >= threshold
    ax.hist([degrees[~accepted], degrees[accepted]], bins=bins, stacked=True,
            color=["0.65", "tab:blue"], label=["rejected", "accepted"])
    ax.axvline(threshold, color="tab:red", lw=1.2, ls="--", label=f"threshold {threshold:g}")
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("fiber degree")
    ax.set_ylabel("fibers")
    ax.set_title(title or f"{int(accepted.sum())} of {len(degrees)} fibers accepted", fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def landscape_slices(volume, path, index=None, title: str | None = None) -> Path:
    """Three orthogonal slices through ``volume`` (its weighted centroid by default)."""
    values = volume.values
    if index is None:
        total = values.sum()
        if total > 0:
            grids = np.indices(values.shape)
            index = [int(round((g * values).sum() / total)) for g in grids]
        else:
            index = [n // 2 for n in values.shape]
    i, j, k = (int(c) for c in index)
    sx, sy, sz = volume.spacing
    panels = [
        (values[i, :, :].T, f"x index {i}", "y", "z", sy / sz),
        (values[:, j, :].T, f"y index {j}", "x", "z", sx / sz),
        (values[:, :, k].T, f"z index {k}", "x", "y", sx / sy),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.6), constrained_layout=True)
    for ax, (img, label, xl, yl, ratio) in zip(axes, panels):
        im = ax.imshow(img, origin="lower", vmin=0.0, vmax=1.0, cmap="viridis",
                       aspect=1.0 / ratio, interpolation="nearest")
        ax.set_title(label, fontsize=9)
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
    fig.colorbar(im, ax=axes, shrink=0.8, label="degree")
    if title:
        fig.suptitle(title, fontsize=10)
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    try:
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)
    return path
