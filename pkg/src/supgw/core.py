"""Shared domain types: marginals, distance matrices, zero patterns, couplings
and solver parameters, plus feasibility checks on transport plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

TOL_FEAS = 1e-8


def as_distance_matrix(d, name="distance matrix"):
    """Validate ``d`` as a distance matrix and return a read-only float copy.

    Raises ``ValueError`` unless ``d`` is square, finite, nonnegative,
    symmetric and zero on the diagonal.
    """
    d = np.array(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"{name} must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(d < 0):
        raise ValueError(f"{name} has negative entries")
    if np.any(np.diag(d) != 0):
        raise ValueError(f"{name} has a nonzero diagonal")
    if not np.array_equal(d, d.T):
        raise ValueError(f"{name} is not symmetric")
    d.setflags(write=False)
    return d


def as_marginal(w, name="marginal"):
    w = np.array(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{name} must be a nonempty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if w.sum() <= 0:
        raise ValueError(f"{name} must have positive total mass")
    w.setflags(write=False)
    return w


def uniform(n, total=1.0):
    """Uniform marginal of ``n`` atoms carrying ``total`` mass."""
    return as_marginal(np.full(n, total / n))


@dataclass(frozen=True)
class ZeroPattern:
    """Coupling entries forced to zero, stored as an ``(n, m)`` boolean mask."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("zero pattern mask must be 2-D")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def empty(cls, n, m):
        return cls(np.zeros((n, m), dtype=bool))

    @classmethod
    def from_pairs(cls, pairs, n, m):
        mask = np.zeros((n, m), dtype=bool)
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < m):
                raise IndexError(f"pair ({i}, {j}) out of range for shape ({n}, {m})")
            mask[i, j] = True
        return cls(mask)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def size(self):
        return int(self.mask.sum())

    def pairs(self):
        return {(int(i), int(j)) for i, j in zip(*np.nonzero(self.mask))}

    def __contains__(self, ij):
        i, j = ij
        return bool(self.mask[i, j])

    def __len__(self):
        return self.size


@dataclass(frozen=True)
class Coupling:
    """Transport plan ``p`` with blocked marginals ``mu = a - p 1`` and
    ``nu = b - p^T 1``."""

    p: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    @classmethod
    def from_plan(cls, p, a, b):
        p = np.array(p, dtype=float)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if p.shape != (a.size, b.size):
            raise ValueError(f"plan shape {p.shape} does not match marginals ({a.size}, {b.size})")
        p.setflags(write=False)
        return cls(p, a - p.sum(axis=1), b - p.sum(axis=0))

    @property
    def mass(self):
        return transported_mass(self.p)

    @property
    def shape(self):
        return self.p.shape


@dataclass(frozen=True)
class Violation:
    kind: str  # "negative" | "row_excess" | "column_excess" | "blocked"
    index: tuple
    amount: float


def transported_mass(p):
    """Total mass ``sum_ij p_ij`` of a plan (accepts a ``Coupling`` or an array)."""
    if isinstance(p, Coupling):
        p = p.p
    return float(np.sum(p))


def validate_coupling(p, a, b, pattern=None, tol=TOL_FEAS):
    """List every constraint of ``U(<=a, <=b)`` and the zero pattern that
    ``p`` violates by more than ``tol``.

    Parameters
    ----------
    p : Coupling or array-like, shape (n, m)
    a, b : array-like, shape (n,) and (m,)
    pattern : ZeroPattern, optional
    tol : float

    Returns
    -------
    list of Violation
        Empty when ``p`` is feasible.
    """
    if isinstance(p, Coupling):
        p = p.p
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if p.ndim != 2 or p.shape != (a.size, b.size):
        raise ValueError(f"plan shape {p.shape} does not match marginals ({a.size}, {b.size})")
    if pattern is not None and pattern.shape != p.shape:
        raise ValueError(f"pattern shape {pattern.shape} does not match plan shape {p.shape}")

    out = []
    for i, j in zip(*np.nonzero(p < -tol)):
        out.append(Violation("negative", (int(i), int(j)), float(-p[i, j])))
    row_excess = p.sum(axis=1) - a
    for i in np.flatnonzero(row_excess > tol):
        out.append(Violation("row_excess", (int(i),), float(row_excess[i])))
    col_excess = p.sum(axis=0) - b
    for j in np.flatnonzero(col_excess > tol):
        out.append(Violation("column_excess", (int(j),), float(col_excess[j])))
    if pattern is not None:
        for i, j in zip(*np.nonzero(pattern.mask & (p > tol))):
            out.append(Violation("blocked", (int(i), int(j)), float(p[i, j])))
    return out


@dataclass(frozen=True)
class SolverParams:
    """Numerical parameters shared by the sOT, cover-selection and sGW solvers.

    ``dt`` is the Mirror-C step; ``dt=inf`` is the ``eta = 1`` limit.
    ``prefix_max`` > 0 enables random prefixing of a fraction
    ``U(0, prefix_max)`` of vertices before each greedy cover.
    """

    epsilon: float = 0.1
    gamma: float = 10.0
    dt: float = math.inf
    tol_inner: float = 1e-7
    tol_outer: float = 1e-6
    max_inner: int = 10000
    max_outer: int = 500
    seed: int = 0
    n_covers: int = 100
    prefix_max: float = 0.0
    tol_feas: float = TOL_FEAS

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not (self.tol_inner > 0 and self.tol_outer > 0 and self.tol_feas > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_inner < 1 or self.max_outer < 1 or self.n_covers < 1:
            raise ValueError("iteration caps and n_covers must be >= 1")
        if not 0 <= self.prefix_max <= 1:
            raise ValueError("prefix_max must lie in [0, 1]")

    @property
    def eta(self):
        """Step expressed as ``eps*dt / (1 + eps*dt)``; 1 when ``dt`` is infinite."""
        if math.isinf(self.dt):
            return 1.0
        x = self.epsilon * self.dt
        return x / (1.0 + x)

    def with_eta(self, eta):
        if not 0 < eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        dt = math.inf if eta == 1 else eta / (self.epsilon * (1.0 - eta))
        return replace(self, dt=dt)

    def replace(self, **changes):
        return replace(self, **changes)
