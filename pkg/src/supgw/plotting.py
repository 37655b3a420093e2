"""Static SVG figures for matchings, cover statistics and sketches.

Point clouds of dimension three or more are projected to their first two
coordinates. Figures are written with a fixed hash salt and no date so
repeated runs produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

plt.rcParams["svg.hashsalt"] = "supgw"
_META = {"Date": None}


def _xy(points):
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] == 1:
        return np.c_[x[:, 0], np.zeros(len(x))]
    return x[:, :2]


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_matching(x, y, p, path, top=0.1, title=None):
    """Both clouds side by side with segments for the heavier coupling entries.

    Segments are drawn for entries at least ``top * max(p)``; their opacity
    follows the entry value.
    """
    u, v = _xy(x), _xy(y)
    shift = (u[:, 0].max() - v[:, 0].min()) + 0.25 * (np.ptp(u[:, 0]) + np.ptp(v[:, 0]) + 1e-12)
    v = v + np.array([shift, 0.0])
    p = np.asarray(p, dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4))
    if p.max(initial=0) > 0:
        ii, jj = np.nonzero(p >= top * p.max())
        w = p[ii, jj] / p.max()
        segs = np.stack([u[ii], v[jj]], axis=1)
        colors = np.zeros((len(w), 4))
        colors[:, 3] = 0.15 + 0.6 * w
        ax.add_collection(LineCollection(segs, colors=colors, linewidths=0.5))
    ax.scatter(u[:, 0], u[:, 1], s=8, c="tab:blue", label="space 1")
    ax.scatter(v[:, 0], v[:, 1], s=8, c="tab:orange", label="space 2")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_cover_stats(sizes, masses, path, title=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(sizes, masses, s=12)
    ax.set_xlabel("cover size")
    ax.set_ylabel("transported mass")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_sketch(points, sketch, path):
    u = _xy(points)
    c = _xy(sketch.coords)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(u[:, 0], u[:, 1], s=4, c=sketch.assignment, cmap="tab20", alpha=0.5)
    ax.scatter(c[:, 0], c[:, 1], s=30, marker="x", c="k")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(f"{sketch.method} sketch, {sketch.size} representatives")
    _save(fig, path)
