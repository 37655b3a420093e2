"""Conflict graph on coupling entries, randomized greedy vertex covers and
selection of the zero pattern that admits the largest transported mass.

Vertex ``v = i * m + j`` stands for the coupling entry ``(i, j)``. Two
vertices ``(i, j)`` and ``(k, l)`` are joined when ``|d1[i, k] - d2[j, l]|``
exceeds the threshold, i.e. when ``P_ij`` and ``P_kl`` may not both be
positive. Zeroing the entries of any vertex cover removes every conflict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import SolverParams, ZeroPattern
from .sot import CostMatrix, solve_sot

MASS_TOL = 1e-6


@dataclass(frozen=True)
class ConflictGraph:
    """Adjacency as packed bitset rows plus cached degrees."""

    n: int
    m: int
    bits: np.ndarray  # (n*m, ceil(n*m / 8)) uint8
    degrees: np.ndarray  # (n*m,) int64

    @classmethod
    def from_adjacency(cls, adj, n=1):
        """Graph from a symmetric boolean adjacency over ``n * m`` vertices."""
        adj = np.asarray(adj, dtype=bool)
        nv = adj.shape[0]
        if adj.shape != (nv, nv) or not np.array_equal(adj, adj.T) or np.any(np.diag(adj)):
            raise ValueError("adjacency must be square, symmetric and loop-free")
        if nv % n:
            raise ValueError(f"{nv} vertices do not split into {n} rows")
        return cls(n, nv // n, np.packbits(adj, axis=1), adj.sum(axis=1).astype(np.int64))

    @property
    def n_vertices(self):
        return self.n * self.m

    @property
    def n_edges(self):
        return int(self.degrees.sum()) // 2

    def neighbors(self, v):
        """Boolean mask of the neighbors of vertex ``v``."""
        return np.unpackbits(self.bits[v], count=self.n_vertices).view(bool)

    def has_edge(self, u, v):
        return bool(self.bits[u, v >> 3] & (0x80 >> (v & 7)))

    def vertex(self, i, j):
        return i * self.m + j

    def pair(self, v):
        return divmod(int(v), self.m)

    def edges(self):
        """All edges ``(u, v)`` with ``u < v``; for small graphs and tests."""
        out = []
        for u in range(self.n_vertices):
            nb = np.flatnonzero(self.neighbors(u))
            out.extend((u, int(v)) for v in nb[nb > u])
        return out

    def is_cover(self, mask):
        mask = np.asarray(mask, dtype=bool).ravel()
        for u in np.flatnonzero(~mask):
            if np.any(self.neighbors(u) & ~mask):
                return False
        return True


def build_conflict_graph(d1, d2, rho, squared=False):
    """Conflict graph of the thresholded GW cost tensor.

    Parameters
    ----------
    d1, d2 : ndarray, shape (n, n) and (m, m)
    rho : float
        Edge iff ``|d1[i, k] - d2[j, l]| > rho``.
    squared : bool
        Threshold the squared difference instead (``(d1 - d2)**2 > rho``).
    """
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if rho < 0:
        raise ValueError("rho must be >= 0")
    n, m = d1.shape[0], d2.shape[0]
    if d1.shape != (n, n) or d2.shape != (m, m):
        raise ValueError("distance matrices must be square")
    nv = n * m
    bits = np.empty((nv, (nv + 7) // 8), dtype=np.uint8)
    degrees = np.empty(nv, dtype=np.int64)
    for i in range(n):
        # block of vertices (i, 0..m-1) against all (k, l)
        diff = np.abs(d1[i][None, :, None] - d2[:, None, :])  # (m, n, m)
        if squared:
            diff = diff * diff
        adj = (diff > rho).reshape(m, nv)
        bits[i * m:(i + 1) * m] = np.packbits(adj, axis=1)
        degrees[i * m:(i + 1) * m] = adj.sum(axis=1)
    return ConflictGraph(n, m, bits, degrees)


@dataclass(frozen=True)
class VertexCover:
    mask: np.ndarray  # (n*m,) bool
    is_minimal: bool = False

    @property
    def size(self):
        return int(self.mask.sum())

    def vertices(self):
        return set(np.flatnonzero(self.mask).tolist())

    def pattern(self, n, m):
        return ZeroPattern(self.mask.reshape(n, m))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def greedy_vertex_cover(graph, seed=None, prefixed=()):
    """Randomized greedy vertex cover.

    Prefixed vertices are put in the cover and deleted first; then a vertex
    drawn uniformly among those of current maximum degree is added and
    deleted with its edges until no edge remains.
    """
    rng = _rng(seed)
    deg = graph.degrees.copy()
    alive = np.ones(graph.n_vertices, dtype=bool)
    cover = np.zeros(graph.n_vertices, dtype=bool)

    def take(v):
        nb = graph.neighbors(v) & alive
        deg[nb] -= 1
        deg[v] = 0
        alive[v] = False
        cover[v] = True

    for v in np.unique(np.asarray(list(prefixed), dtype=np.int64)):
        take(v)
    while True:
        top = deg.max(initial=0)
        if top == 0:
            break
        cands = np.flatnonzero(deg == top)
        take(cands[rng.integers(cands.size)])
    return VertexCover(cover, False)


def trim_cover(graph, cover, seed=None):
    """Drop redundant vertices, visited in random order, until the cover is minimal."""
    mask = np.array(cover.mask if isinstance(cover, VertexCover) else cover, dtype=bool).ravel()
    if not graph.is_cover(mask):
        raise ValueError("input is not a vertex cover of the graph")
    rng = _rng(seed)
    for v in rng.permutation(np.flatnonzero(mask)):
        # removable iff every neighbor is still covered
        if not np.any(graph.neighbors(v) & ~mask):
            mask[v] = False
    return VertexCover(mask, True)


def is_minimal_cover(graph, mask):
    mask = np.asarray(mask, dtype=bool).ravel()
    if not graph.is_cover(mask):
        return False
    return all(np.any(graph.neighbors(v) & ~mask) for v in np.flatnonzero(mask))


def score_cover_mass(cover, a, b, params=None):
    """Largest mass transportable with the entries of ``cover`` zeroed,
    via sOT with an all-one cost carrying the cover's infinity pattern."""
    params = params or SolverParams()
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mask = cover.mask if isinstance(cover, VertexCover) else np.asarray(cover, dtype=bool)
    pattern = ZeroPattern(mask.reshape(a.size, b.size))
    return solve_sot(CostMatrix.ones(pattern), a, b, params).mass


class CoverTrial(NamedTuple):
    size: int
    mass: float


class CoverSelection(NamedTuple):
    pattern: ZeroPattern
    mass: float
    trials: list  # list of CoverTrial
    best: int = 0
    minimal_fraction: float = 1.0


def select_zero_pattern(graph, a, b, params=None):
    """Generate ``params.n_covers`` trimmed greedy covers and keep the one
    transporting the most mass.

    Each restart draws from its own child seed of ``params.seed``. With
    ``params.prefix_max > 0`` a random fraction ``U(0, prefix_max)`` of all
    vertices is fixed in the cover before the greedy pass. Among covers
    whose mass is within ``MASS_TOL`` of the best, the smallest (then the
    earliest) wins.

    Returns
    -------
    CoverSelection
        ``(pattern, mass, trials, best, minimal_fraction)``; ``trials``
        holds ``(cover size, mass)`` for every restart and
        ``minimal_fraction`` the share of raw greedy covers that were
        already minimal.
    """
    params = params or SolverParams()
    n, m = graph.n, graph.m
    streams = np.random.SeedSequence(params.seed).spawn(params.n_covers)
    masks, trials = [], []
    n_minimal = 0
    cache = {}
    for ss in streams:
        rng = np.random.default_rng(ss)
        prefixed = ()
        if params.prefix_max > 0:
            frac = rng.uniform(0.0, params.prefix_max)
            prefixed = rng.choice(graph.n_vertices, int(round(frac * graph.n_vertices)), replace=False)
        raw = greedy_vertex_cover(graph, rng, prefixed)
        trimmed = trim_cover(graph, raw, rng)
        n_minimal += int(trimmed.size == raw.size)
        key = trimmed.mask.tobytes()
        if key not in cache:
            cache[key] = score_cover_mass(trimmed, a, b, params)
        masks.append(trimmed.mask)
        trials.append(CoverTrial(trimmed.size, cache[key]))

    top = max(t.mass for t in trials)
    best = min((k for k, t in enumerate(trials) if t.mass >= top - MASS_TOL),
               key=lambda k: (trials[k].size, k))
    pattern = ZeroPattern(masks[best].reshape(n, m))
    return CoverSelection(pattern, trials[best].mass, trials, best, n_minimal / len(trials))
