"""Matplotlib figure rendering for run reports.

All figures are written as PNG files next to the delimited outputs.
PNG metadata is stripped so repeated runs produce identical bytes.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_mean_images",
    "save_cluster_means",
    "save_curve_overlays",
    "save_points_scatter",
    "save_trace_plot",
]

_PNG_KW = dict(dpi=120, metadata={"Software": None})


def save_mean_images(path, before, after, image_shape):
    fig, axes = plt.subplots(1, 2, figsize=(5, 2.6))
    for ax, img, title in ((axes[0], before, "before"), (axes[1], after, "after")):
        ax.imshow(img.reshape(image_shape), cmap="gray", vmin=0, vmax=1)
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)


def save_cluster_means(path, means, image_shape, ids):
    n = len(means)
    cols = min(n, 6)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(1.8 * cols, 1.9 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, mean, cid in zip(axes.ravel(), means, ids):
        ax.imshow(mean.reshape(image_shape), cmap="gray", vmin=0, vmax=1)
        ax.set_title(f"cluster {cid}", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)


def save_curve_overlays(path, before, after, z=None):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3), sharey=True)
    labels = np.zeros(len(before), dtype=int) if z is None else np.asarray(z)
    colors = plt.cm.tab10(np.unique(labels, return_inverse=True)[1] % 10 / 10.0)
    for ax, group, title in ((axes[0], before, "before"), (axes[1], after, "after")):
        for curve, color in zip(group, colors):
            ax.plot(curve, color=color, alpha=0.35, linewidth=0.7)
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)


def save_points_scatter(path, before, after, z=None):
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.4))
    c = None if z is None else np.asarray(z)
    for ax, pts, title in ((axes[0], before, "before"), (axes[1], after, "after")):
        ax.scatter(pts[:, 0], pts[:, 1], c=c, cmap="tab10", s=12)
        ax.set_title(title, fontsize=9)
        ax.set_aspect("equal")
        ax.axhline(0, color="0.8", linewidth=0.5)
        ax.axvline(0, color="0.8", linewidth=0.5)
    fig.tight_layout()
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)


def save_trace_plot(path, columns, title="trace"):
    """``columns`` maps series name -> list of values per iteration."""
    fig, ax = plt.subplots(figsize=(5, 3))
    for name, values in columns.items():
        ax.plot(range(1, len(values) + 1), values, label=name, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_title(title, fontsize=9)
    if columns:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)
