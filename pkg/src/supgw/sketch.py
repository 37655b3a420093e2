"""Shape-preserving downsampling and recovery of a full coupling from a
coupling between sketches.

Two sketches are provided. ``grid_sketch`` keeps one random point per
occupied box of a regular grid. ``mapper_sketch`` clusters the points
inside overlapping hypercubes and keeps the cluster centroids.

Recovery describes every full point by its distances to the sketch points
of its own space, transfers the descriptors across with the sketch
coupling, and solves one supervised OT problem on the resulting cost.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import cdist

from .core import Coupling, SolverParams, as_marginal, uniform
from .geometry import as_point_cloud, pairwise_row_distance
from .sot import CostMatrix, SotResult, solve_sot

RECOVERY_EPS = 0.01
GAP_BINS = 10


@dataclass(frozen=True)
class Sketch:
    """Downsampled point set.

    Attributes
    ----------
    indices : ndarray of int
        One data point per representative: the kept point for grid
        sketches, the point nearest each centroid for Mapper-lite.
    coords : ndarray, shape (k, d)
        Representative coordinates (kept points or centroids).
    assignment : ndarray of int, shape (n,)
        Representative index of every full point.
    method : str
    params : dict
    """

    indices: np.ndarray
    coords: np.ndarray
    assignment: np.ndarray
    method: str = "grid"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.indices) == 0:
            raise ValueError("a sketch needs at least one representative")
        if np.any(self.assignment < 0) or np.any(self.assignment >= len(self.indices)):
            raise ValueError("assignment refers to a missing representative")

    @property
    def size(self):
        return len(self.indices)

    def members(self, r):
        return np.flatnonzero(self.assignment == r)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _box_keys(x, box_size):
    return np.floor((x - x.min(axis=0)) / box_size).astype(np.int64)


def grid_sketch(points, box_size, seed=None):
    """Keep one uniformly random point per nonempty box.

    Boxes of side ``box_size`` tile the bounding box starting at its lower
    corner. Representatives are ordered by box key.
    """
    if not box_size > 0:
        raise ValueError("box_size must be positive")
    x = as_point_cloud(points)
    rng = _rng(seed)
    keys = _box_keys(x, box_size)
    _, box_of = np.unique(keys, axis=0, return_inverse=True)
    box_of = box_of.ravel()
    n_boxes = box_of.max() + 1
    indices = np.empty(n_boxes, dtype=np.int64)
    for box in range(n_boxes):
        members = np.flatnonzero(box_of == box)
        indices[box] = members[rng.integers(members.size)]
    return Sketch(indices, x[indices].copy(), box_of.astype(np.int64), "grid",
                  {"box_size": float(box_size)})


def count_boxes(points, box_size):
    x = as_point_cloud(points)
    return len(np.unique(_box_keys(x, box_size), axis=0))


def box_size_for_count(points, target, n_steps=60):
    """Box size whose occupied-box count is the largest one not above ``target``.

    The count is not monotone in the box size, so this bisects on a log
    scale and keeps the best size seen.
    """
    x = as_point_cloud(points)
    if target < 1:
        raise ValueError("target must be >= 1")
    span = float(np.max(x.max(axis=0) - x.min(axis=0)))
    if span == 0:
        return 1.0
    lo, hi = span * 1e-6, span * 1.01
    best, best_count = hi, 1
    for _ in range(n_steps):
        mid = math.sqrt(lo * hi)
        c = count_boxes(x, mid)
        if c > target:
            lo = mid
        else:
            hi = mid
            if c > best_count or (c == best_count and mid < best):
                best, best_count = mid, c
        if c == target:
            break
    return best


def _gap_clusters(x):
    """Single-linkage labels cut at the first empty bin of the merge-height histogram."""
    if len(x) < 3:
        return np.zeros(len(x), dtype=np.int64)
    z = linkage(x, method="single")
    heights = z[:, 2]
    if heights.max() <= 0:
        return np.zeros(len(x), dtype=np.int64)
    counts, edges = np.histogram(heights, bins=GAP_BINS)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return np.zeros(len(x), dtype=np.int64)
    return fcluster(z, t=edges[empty[0]], criterion="distance") - 1


def _cube_intervals(lo, hi, cube_size, overlap):
    stride = cube_size * (1.0 - overlap)
    starts = [lo]
    while starts[-1] + cube_size < hi:
        starts.append(starts[-1] + stride)
    return np.array(starts)


def mapper_sketch(points, cube_size, overlap=0.25, seed=None, tol_merge=None):
    """Centroids of per-cube single-linkage clusters over an overlapping cube cover.

    Parameters
    ----------
    points : array-like, shape (n, d)
    cube_size : float
        Side of each hypercube.
    overlap : float in [0, 0.5]
        Fraction of the side shared by neighboring cubes.
    seed : optional
        Unused by the deterministic construction; kept for a uniform interface.
    tol_merge : float, optional
        Centroids closer than this are merged (default ``cube_size / 2``),
        so a cluster seen by several overlapping cubes counts once.

    Returns
    -------
    Sketch
        ``coords`` are the centroids, ``indices`` the data point nearest to
        each centroid, ``assignment`` maps every point to its nearest centroid.
    """
    if not cube_size > 0:
        raise ValueError("cube_size must be positive")
    if not 0 <= overlap <= 0.5:
        raise ValueError("overlap must lie in [0, 0.5]")
    x = as_point_cloud(points)
    tol_merge = 0.5 * cube_size if tol_merge is None else float(tol_merge)
    lo, hi = x.min(axis=0), x.max(axis=0)
    starts = [_cube_intervals(lo[k], hi[k], cube_size, overlap) for k in range(x.shape[1])]
    # per axis, the intervals holding each point
    inside = [(x[:, k, None] >= s[None, :]) & (x[:, k, None] <= s[None, :] + cube_size)
              for k, s in enumerate(starts)]

    groups = []
    occupied = set()
    for i in range(len(x)):
        occupied.update(itertools.product(*[np.flatnonzero(inside[k][i]).tolist()
                                            for k in range(x.shape[1])]))
    for cube in sorted(occupied):
        sel = np.ones(len(x), dtype=bool)
        for k, c in enumerate(cube):
            sel &= inside[k][:, c]
        members = np.flatnonzero(sel)
        labels = _gap_clusters(x[members])
        groups.extend(members[labels == lab] for lab in np.unique(labels))

    n_raw = len(groups)
    groups = _merge_groups(x, groups, tol_merge)
    centroids = np.array([x[g].mean(axis=0) for g in groups])
    assignment = np.argmin(cdist(x, centroids), axis=1).astype(np.int64)
    anchors = np.argmin(cdist(centroids, x), axis=1).astype(np.int64)
    return Sketch(anchors, centroids, assignment, "mapper",
                  {"cube_size": float(cube_size), "overlap": float(overlap),
                   "tol_merge": tol_merge, "raw_clusters": n_raw,
                   "cluster_count": len(groups)})


def _merge_groups(x, groups, tol_merge):
    groups = [np.unique(g) for g in groups]
    while len(groups) > 1:
        c = np.array([x[g].mean(axis=0) for g in groups])
        labels = fcluster(linkage(c, method="single"), t=tol_merge, criterion="distance")
        merged = [np.unique(np.concatenate([groups[k] for k in np.flatnonzero(labels == lab)]))
                  for lab in np.unique(labels)]
        if len(merged) == len(groups):
            break
        groups = merged
    return groups


def transfer_weights(p_hat):
    """Convex weights that carry sketch descriptors across the sketch coupling.

    Returns ``(to_space1, to_space2, unmatched_rows, unmatched_cols)``.
    ``to_space1[k]`` is row ``k`` of ``p_hat`` scaled to sum 1, so
    ``dhat2 @ to_space1.T`` expresses second-space points in distances to
    the first sketch. ``to_space2[:, l]`` is column ``l`` scaled to sum 1.
    Zero rows (columns) become uniform over the matched columns (rows).
    """
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.ndim != 2:
        raise ValueError("sketch coupling must be a matrix")
    if not p_hat.sum() > 0:
        raise ValueError("sketch coupling carries no mass; nothing to recover")
    rs, cs = p_hat.sum(axis=1), p_hat.sum(axis=0)
    unmatched_rows = np.flatnonzero(rs <= 0)
    unmatched_cols = np.flatnonzero(cs <= 0)
    to1 = np.divide(p_hat, rs[:, None], out=np.zeros_like(p_hat), where=rs[:, None] > 0)
    to1[unmatched_rows] = (cs > 0) / np.count_nonzero(cs > 0)
    to2 = np.divide(p_hat, cs[None, :], out=np.zeros_like(p_hat), where=cs[None, :] > 0)
    to2[:, unmatched_cols] = ((rs > 0) / np.count_nonzero(rs > 0))[:, None]
    return to1, to2, unmatched_rows, unmatched_cols


def recovery_cost(p_hat, dhat1, dhat2, p=2):
    """``C1 + C2`` comparing full points through both sketch descriptions.

    ``C1[i, j]`` compares ``dhat1[i]`` with point ``j`` of the second space
    described in first-sketch distances; ``C2`` does the same in the
    second sketch.
    """
    dhat1 = np.asarray(dhat1, dtype=float)
    dhat2 = np.asarray(dhat2, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    if dhat1.shape[1] != p_hat.shape[0] or dhat2.shape[1] != p_hat.shape[1]:
        raise ValueError(f"descriptor widths {dhat1.shape[1]}, {dhat2.shape[1]} do not match "
                         f"the sketch coupling shape {p_hat.shape}")
    to1, to2, ur, uc = transfer_weights(p_hat)
    c1 = pairwise_row_distance(dhat1, dhat2 @ to1.T, p)
    c2 = pairwise_row_distance(dhat1 @ to2, dhat2, p)
    return c1 + c2, ur, uc


@dataclass
class Recovery:
    coupling: Coupling
    sot: SotResult
    cost: np.ndarray
    unmatched_rows: np.ndarray
    unmatched_cols: np.ndarray

    @property
    def mass(self):
        return self.coupling.mass


def recover_full_coupling(p_hat, dhat1, dhat2, params=None, eps=RECOVERY_EPS, p=2,
                          a=None, b=None):
    """Full coupling from a sketch coupling by one supervised OT solve.

    Parameters
    ----------
    p_hat : Coupling or ndarray, shape (k1, k2)
    dhat1 : ndarray, shape (n, k1)
        Distances from every point of the first space to its sketch points.
    dhat2 : ndarray, shape (m, k2)
    params : SolverParams, optional
        ``gamma`` and the inner tolerances are used; ``epsilon`` is
        replaced by ``eps``.
    a, b : array-like, optional
        Full marginals, uniform by default.

    Returns
    -------
    Recovery
    """
    if isinstance(p_hat, Coupling):
        p_hat = p_hat.p
    params = (params or SolverParams()).replace(epsilon=eps)
    cost, ur, uc = recovery_cost(p_hat, dhat1, dhat2, p)
    n, m = cost.shape
    a = uniform(n) if a is None else as_marginal(a, "a")
    b = uniform(m) if b is None else as_marginal(b, "b")
    res = solve_sot(CostMatrix(cost), a, b, params)
    return Recovery(res.coupling, res, cost, ur, uc)
