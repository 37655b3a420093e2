"""Supervised optimal transport: l1-penalized, entropy-regularized OT with
forbidden (infinite-cost) entries, solved by capped log-domain scaling.

The solver minimizes::

    eps * KL(P | K) + penalty * (||a - P 1||_1 + ||b - P^T 1||_1)

over ``P >= 0`` with ``P 1 <= a``, ``P^T 1 <= b`` and ``P = 0`` wherever the
kernel vanishes. Only the finite entries are stored; blocked entries never
enter a reduction, so the zero pattern of the result is exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Coupling, SolverParams, ZeroPattern, as_marginal


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CostMatrix:
    """Cost with ``inf`` at forbidden entries."""

    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 2:
            raise ValueError("cost must be a 2-D matrix")
        if np.any(np.isnan(c)) or np.any(c == -np.inf):
            raise ValueError("cost entries must be finite or +inf")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def with_pattern(cls, c, pattern):
        c = np.array(c, dtype=float)
        c[pattern.mask] = np.inf
        return cls(c)

    @classmethod
    def ones(cls, pattern):
        """All-one cost carrying the infinity pattern of ``pattern``."""
        return cls.with_pattern(np.ones(pattern.shape), pattern)

    @property
    def pattern(self):
        return ZeroPattern(np.isinf(self.c))

    @property
    def shape(self):
        return self.c.shape


@dataclass(frozen=True)
class DualPotentials:
    f: np.ndarray
    g: np.ndarray


@dataclass
class SotResult:
    coupling: Coupling
    potentials: DualPotentials
    log_plan: np.ndarray  # log P on finite entries, -inf elsewhere
    trace: list = field(default_factory=list)  # max dual change per iteration
    n_iter: int = 0
    converged: bool = False
    empty: bool = False

    @property
    def mass(self):
        return self.coupling.mass


class _Support:
    """Finite kernel entries in row-major order, with row and column
    segment bookkeeping for ``reduceat``."""

    def __init__(self, finite, n, m):
        self.n, self.m = n, m
        self.rows, self.cols = np.nonzero(finite)
        self.row_ids, self.row_starts, self.row_counts = _segments(self.rows)
        self.col_order = np.argsort(self.cols, kind="stable")
        self.col_ids, self.col_starts, self.col_counts = _segments(self.cols[self.col_order])

    @property
    def size(self):
        return self.rows.size


def _segments(sorted_ids):
    ids, starts, counts = np.unique(sorted_ids, return_index=True, return_counts=True)
    return ids, starts, counts


def _segment_lse(x, starts, counts):
    mx = np.maximum.reduceat(x, starts)
    s = np.add.reduceat(np.exp(x - np.repeat(mx, counts)), starts)
    return mx + np.log(s)


def solve_sot_kernel(log_kernel, a, b, eps, cap, tol=1e-7, max_iter=10000,
                     init=None, warn=True):
    """Capped log-domain scaling iteration on a kernel given by its logarithm.

    Parameters
    ----------
    log_kernel : ndarray, shape (n, m)
        ``log K``; ``-inf`` marks blocked entries.
    a, b : ndarray
        Marginal upper bounds.
    eps : float
        Entropic coefficient; potentials are in cost units.
    cap : float
        Upper bound on every potential (``inf`` gives balanced Sinkhorn).
    tol : float
        Stop when the sup-norm change of ``(f, g)`` drops below ``tol``.
    init : DualPotentials, optional
        Warm start; defaults to zeros.

    Returns
    -------
    SotResult
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    log_kernel = np.asarray(log_kernel, dtype=float)
    n, m = log_kernel.shape
    if (a.size, b.size) != (n, m):
        raise ValueError(f"kernel shape {log_kernel.shape} does not match marginals ({a.size}, {b.size})")

    # zero-weight atoms carry nothing, so their entries are dropped like blocked ones
    finite = np.isfinite(log_kernel) & (a[:, None] > 0) & (b[None, :] > 0)
    sup = _Support(finite, n, m)
    # potentials of rows/columns without admissible entries stay pinned at the cap
    pin = cap if np.isfinite(cap) else 0.0
    f = np.full(n, pin, dtype=float)
    g = np.full(m, pin, dtype=float)
    f[sup.row_ids] = 0.0
    g[sup.col_ids] = 0.0
    if init is not None:
        f[sup.row_ids] = init.f[sup.row_ids]
        g[sup.col_ids] = init.g[sup.col_ids]

    if sup.size == 0:
        p = np.zeros((n, m))
        return SotResult(Coupling.from_plan(p, a, b), DualPotentials(f, g),
                         np.full((n, m), -np.inf), [], 0, True, True)

    lk = log_kernel[sup.rows, sup.cols]
    lk_c = lk[sup.col_order]
    rows_c = sup.rows[sup.col_order]
    eps_log_a = eps * np.log(a[sup.row_ids])
    eps_log_b = eps * np.log(b[sup.col_ids])

    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f_old = f[sup.row_ids].copy()
        g_old = g[sup.col_ids].copy()
        x = g[sup.cols] / eps + lk
        f[sup.row_ids] = np.minimum(eps_log_a - eps * _segment_lse(x, sup.row_starts, sup.row_counts), cap)
        y = f[rows_c] / eps + lk_c
        g[sup.col_ids] = np.minimum(eps_log_b - eps * _segment_lse(y, sup.col_starts, sup.col_counts), cap)
        change = max(np.max(np.abs(f[sup.row_ids] - f_old)), np.max(np.abs(g[sup.col_ids] - g_old)))
        trace.append(float(change))
        if change < tol:
            converged = True
            break

    log_p = (f[sup.rows] + g[sup.cols]) / eps + lk
    # the last half-step enforces columns; clip rows so both bounds hold
    row_lse = np.full(n, -np.inf)
    row_lse[sup.row_ids] = _segment_lse(log_p, sup.row_starts, sup.row_counts)
    with np.errstate(divide="ignore"):
        excess = np.maximum(row_lse - np.log(a), 0.0)
    excess[~np.isfinite(excess)] = 0.0
    log_p -= excess[sup.rows]
    f -= eps * excess

    full_log = np.full((n, m), -np.inf)
    full_log[sup.rows, sup.cols] = log_p
    p = np.zeros((n, m))
    p[sup.rows, sup.cols] = np.exp(log_p)
    if not converged and warn:
        warnings.warn(f"sOT iteration stopped at max_iter={max_iter} "
                      f"(last dual change {trace[-1]:.3e})", ConvergenceWarning, stacklevel=2)
    return SotResult(Coupling.from_plan(p, a, b), DualPotentials(f, g), full_log,
                     trace, it, converged, False)


def solve_sot(cost, a, b, params=None, init=None, eps_start=None, eps_factor=0.25):
    """Solve the entropic supervised OT problem for ``cost``.

    ``K = exp(-C / eps)`` is zero exactly on the infinite entries of
    ``cost``; potentials are capped at ``params.gamma``.

    Parameters
    ----------
    cost : CostMatrix or array-like
    a, b : array-like
        Marginals; need not have equal totals.
    params : SolverParams, optional
    init : DualPotentials, optional
    eps_start : float, optional
        If larger than ``params.epsilon``, solve first at ``eps_start`` and
        shrink it by ``eps_factor`` per stage, warm-starting each stage from
        the previous potentials. Only the last stage runs at the target
        value; small ``epsilon`` converges much faster this way.

    Returns
    -------
    SotResult
        ``converged`` is False (with a ``ConvergenceWarning``) when
        ``params.max_inner`` was reached; ``empty`` is True when no entry
        is admissible and the zero plan is returned.
    """
    params = params or SolverParams()
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(cost)
    a = as_marginal(a, "a")
    b = as_marginal(b, "b")
    eps = params.epsilon
    stages = [eps]
    if eps_start is not None and eps_start > eps:
        if not 0 < eps_factor < 1:
            raise ValueError("eps_factor must lie in (0, 1)")
        stages = []
        e = eps_start
        while e > eps:
            stages.append(e)
            e *= eps_factor
        stages.append(eps)
    res, trace = None, []
    for k, e in enumerate(stages):
        with np.errstate(over="ignore"):
            log_k = -cost.c / e
        last = k == len(stages) - 1
        res = solve_sot_kernel(log_k, a, b, e, params.gamma, tol=params.tol_inner,
                               max_iter=params.max_inner, init=init, warn=last)
        init = res.potentials
        trace.extend(res.trace)
    res.trace = trace
    res.n_iter = len(trace)
    return res


def sot_objective(p, cost, a, b, params=None):
    """``<P, C> + gamma * (||a - P1||_1 + ||b - P^T 1||_1)`` over finite entries."""
    params = params or SolverParams()
    if isinstance(p, Coupling):
        p = p.p
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(cost)
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    blocked = np.isinf(cost.c)
    if np.any(p[blocked] != 0):
        raise ValueError("plan has mass on a blocked (infinite-cost) entry")
    linear = float(np.sum(p[~blocked] * cost.c[~blocked]))
    penalty = np.abs(a - p.sum(axis=1)).sum() + np.abs(b - p.sum(axis=0)).sum()
    return linear + params.gamma * float(penalty)
