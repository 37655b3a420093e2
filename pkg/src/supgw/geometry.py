"""kNN graphs, geodesic distance matrices and distance normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial.distance import cdist

from .core import as_distance_matrix

TOL_EDGE = 1e-12
DEFAULT_K = 10


class DisconnectedGraphError(ValueError):
    def __init__(self, labels):
        self.labels = np.asarray(labels)
        comps = [np.flatnonzero(self.labels == c).tolist() for c in np.unique(self.labels)]
        self.components = comps
        preview = "; ".join(str(c[:8]) + ("..." if len(c) > 8 else "") for c in comps[:5])
        super().__init__(f"neighbor graph has {len(comps)} connected components: {preview}")


def as_point_cloud(coords):
    x = np.array(coords, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] < 1:
        raise ValueError(f"point cloud must be an (n, d) array with n, d >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point cloud has non-finite coordinates")
    return x


@dataclass(frozen=True)
class NeighborGraph:
    """Undirected weighted graph stored as a symmetric CSR matrix."""

    adjacency: csr_matrix

    @property
    def n(self):
        return self.adjacency.shape[0]

    def edges(self):
        """Sorted ``{(u, v): weight}`` with ``u < v``."""
        a = self.adjacency.tocoo()
        return {(int(u), int(v)): float(w) for u, v, w in zip(a.row, a.col, a.data) if u < v}


def knn_graph(points, k=DEFAULT_K):
    """Symmetrized k-nearest-neighbor graph with Euclidean edge weights.

    An edge is kept if it is a kNN edge in either direction. Ties at the
    k-th neighbor are broken by point index. Zero-length edges between
    duplicate points get weight ``TOL_EDGE``.
    """
    x = as_point_cloud(points)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    d = cdist(x, x)
    np.fill_diagonal(d, np.inf)
    nbrs = np.argsort(d, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    w = d[rows, cols]
    w = np.where(w > 0, w, TOL_EDGE)
    a = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    # symmetrize: keep an edge present in either direction
    a = a.maximum(a.T).tocsr()
    return NeighborGraph(a)


def geodesic_distance_matrix(graph):
    """All-pairs shortest-path lengths along ``graph``.

    Raises
    ------
    DisconnectedGraphError
        If the graph has more than one connected component.
    """
    adj = graph.adjacency if isinstance(graph, NeighborGraph) else csr_matrix(graph)
    n = adj.shape[0]
    if n == 1:
        return as_distance_matrix(np.zeros((1, 1)))
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp > 1:
        raise DisconnectedGraphError(labels)
    d = dijkstra(adj, directed=False)
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return as_distance_matrix(d)


def geodesic_distances(points, k=DEFAULT_K):
    return geodesic_distance_matrix(knn_graph(points, k))


def euclidean_distances(points):
    x = as_point_cloud(points)
    d = cdist(x, x)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return as_distance_matrix(d)


def normalize_distances(d1, d2):
    """Divide both matrices by ``max(d1)``."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    scale = d1.max() if d1.size else 0.0
    if not scale > 0:
        raise ValueError("max(d1) must be positive; the first space is degenerate")
    return d1 / scale, d2 / scale


def row_distance(u, v, p=2):
    """l^p distance between two equal-length vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v, ord=p))


def pairwise_row_distance(u, v, p=2):
    """``out[i, j] = row_distance(u[i], v[j], p)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[1] != v.shape[1]:
        raise ValueError(f"row length mismatch: {u.shape[1]} vs {v.shape[1]}")
    return cdist(u, v, metric="minkowski", p=p)
