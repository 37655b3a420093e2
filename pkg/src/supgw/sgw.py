"""Supervised Gromov-Wasserstein solver.

Step I picks a zero pattern from the conflict graph (see ``conflict``).
Step II runs Mirror-C descent: every outer iteration forms the kernel

    Q = exp(-(dt / (1 + eps dt)) * (M o P) + (1 / (1 + eps dt)) * log P)

zeroed on the pattern, and solves the resulting supervised OT problem.
With ``eta = eps dt / (1 + eps dt)`` the kernel reads
``exp(-M o P / eps)**eta * P**(1 - eta)``; ``eta = 1`` drops the proximal
term and the iteration becomes the KL projected-gradient scheme of
entropic GW.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conflict import build_conflict_graph, select_zero_pattern
from .core import Coupling, SolverParams, ZeroPattern, as_distance_matrix, as_marginal
from .sot import ConvergenceWarning, solve_sot_kernel


@dataclass(frozen=True)
class GwProblem:
    d1: np.ndarray
    d2: np.ndarray
    a: np.ndarray
    b: np.ndarray
    rho: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "d1", as_distance_matrix(self.d1, "d1"))
        object.__setattr__(self, "d2", as_distance_matrix(self.d2, "d2"))
        object.__setattr__(self, "a", as_marginal(self.a, "a"))
        object.__setattr__(self, "b", as_marginal(self.b, "b"))
        if self.a.size != self.d1.shape[0] or self.b.size != self.d2.shape[0]:
            raise ValueError("marginal sizes do not match the distance matrices")
        if not self.rho >= 0:
            raise ValueError("rho must be >= 0")

    @classmethod
    def uniform(cls, d1, d2, rho=math.inf):
        n, m = len(d1), len(d2)
        return cls(d1, d2, np.full(n, 1.0 / n), np.full(m, 1.0 / m), rho)

    @property
    def shape(self):
        return self.a.size, self.b.size

    @property
    def rho_max(self):
        """``max |d1[i, k] - d2[j, l]|``; thresholds at or above it forbid nothing."""
        return rho_max(self.d1, self.d2)

    @property
    def supervised(self):
        return self.rho < self.rho_max


def rho_max(d1, d2):
    d1 = np.asarray(d1)
    d2 = np.asarray(d2)
    return float(max(d1.max() - d2.min(), d2.max() - d1.min()))


@dataclass
class SgwResult:
    coupling: Coupling
    pattern: ZeroPattern
    quadratic_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)  # penalized, no entropy
    entropic_trace: list = field(default_factory=list)  # penalized + entropy
    mass_trace: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    converged: bool = False
    outer_iters: int = 0
    cover_mass: float = math.nan
    cover_trials: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def mass(self):
        return self.coupling.mass


def apply_cost_tensor(prob, p):
    """``(M o P)_ij = sum_kl (d1_ik - d2_jl)^2 P_kl`` without forming ``M``.

    Uses ``d1^2 (P 1) + d2^2 (P^T 1) - 2 d1 P d2^T``.
    """
    p = p.p if isinstance(p, Coupling) else np.asarray(p, dtype=float)
    d1, d2 = prob.d1, prob.d2
    r = p.sum(axis=1)
    c = p.sum(axis=0)
    return (d1 * d1) @ r[:, None] + ((d2 * d2) @ c)[None, :] - 2.0 * (d1 @ p @ d2.T)


def _check_pattern(p, pattern):
    if pattern is not None and np.any(p[pattern.mask] != 0):
        raise ValueError("plan is nonzero on a blocked entry; the objective is infinite")


def sgw_objective(prob, p, params=None, pattern=None):
    """Return ``(quadratic_part, penalized_total)``.

    ``quadratic_part = 0.5 <M o P, P>`` and ``penalized_total`` adds
    ``gamma * (||a - P1||_1 + ||b - P^T 1||_1)``.
    """
    params = params or SolverParams()
    p = p.p if isinstance(p, Coupling) else np.asarray(p, dtype=float)
    _check_pattern(p, pattern)
    quad = 0.5 * float(np.sum(apply_cost_tensor(prob, p) * p))
    pen = np.abs(prob.a - p.sum(axis=1)).sum() + np.abs(prob.b - p.sum(axis=0)).sum()
    return quad, quad + params.gamma * float(pen)


def entropic_objective(prob, p, params=None, pattern=None):
    """Penalized objective plus ``-eps H(P)``, ``H(P) = -sum P (log P - 1)``."""
    params = params or SolverParams()
    p = p.p if isinstance(p, Coupling) else np.asarray(p, dtype=float)
    _, total = sgw_objective(prob, p, params, pattern)
    pos = p[p > 0]
    neg_entropy = float(np.sum(pos * (np.log(pos) - 1.0)))
    return total + params.epsilon * neg_entropy


def _mirror_log_kernel(grad, log_p, free, eta, eps):
    out = np.full(grad.shape, -np.inf)
    step = -(eta / eps) * grad[free]
    if eta < 1:
        step = step + (1.0 - eta) * log_p[free]
    out[free] = step
    return out


def mirrorc_kernel(prob, p, pattern, params=None):
    """Mirror-C kernel ``Q`` for the iterate ``p``; exactly zero on ``pattern``.

    Raises ``ValueError`` if ``p`` is not strictly positive off the pattern
    (only when the proximal term is active, i.e. ``eta < 1``).
    """
    params = params or SolverParams()
    p = p.p if isinstance(p, Coupling) else np.asarray(p, dtype=float)
    free = ~pattern.mask
    eta = params.eta
    if eta < 1 and np.any(p[free] <= 0):
        raise ValueError("iterate is not strictly positive off the zero pattern")
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
    grad = apply_cost_tensor(prob, p)
    return np.exp(_mirror_log_kernel(grad, log_p, free, eta, params.epsilon))


def mirror_descent_kernel(p, grad, eps, dt_prime):
    """Plain KL mirror-descent kernel ``exp(-dt' G + (1 - eps dt') log P)``."""
    p = np.asarray(p, dtype=float)
    # eps * (1 / eps) may miss 1 by an ulp; the log P weight is then pure round-off
    if abs(1.0 - eps * dt_prime) <= 4 * np.finfo(float).eps:
        return np.exp(-np.asarray(grad) / eps)
    return np.exp(-dt_prime * np.asarray(grad) + (1.0 - eps * dt_prime) * np.log(p))


def max_step_size(prob, params=None):
    """Step bound under which Mirror-C descent provably converges.

    Returns ``(dt_max, eta_max)`` with ``dt_max = 1 / (N L)`` and
    ``eta_max = eps / (N L + eps)`` where ``L = n m max(D)^2`` and
    ``N = min(||a||_inf, ||b||_inf)``.
    """
    params = params or SolverParams()
    n, m = prob.shape
    dmax = max(prob.d1.max(), prob.d2.max())
    lip = n * m * dmax ** 2
    big_n = min(prob.a.max(), prob.b.max())
    if lip == 0:
        return math.inf, 1.0
    return 1.0 / (big_n * lip), params.epsilon / (big_n * lip + params.epsilon)


def _record(result, prob, params, p, grad, inner_iters):
    quad = 0.5 * float(np.sum(grad * p))
    pen = np.abs(prob.a - p.sum(axis=1)).sum() + np.abs(prob.b - p.sum(axis=0)).sum()
    total = quad + params.gamma * float(pen)
    pos = p[p > 0]
    result.quadratic_trace.append(quad)
    result.objective_trace.append(total)
    result.entropic_trace.append(total + params.epsilon * float(np.sum(pos * (np.log(pos) - 1.0))))
    result.mass_trace.append(float(p.sum()))
    result.inner_iters.append(inner_iters)


def _outer_loop(prob, params, pattern, eta, cap, result):
    a, b = prob.a, prob.b
    eps = params.epsilon
    free = ~pattern.mask & (a[:, None] > 0) & (b[None, :] > 0)
    p = np.where(free, np.outer(a, b), 0.0)
    with np.errstate(divide="ignore"):
        log_p = np.where(free, np.log(a)[:, None] + np.log(b)[None, :], -np.inf)
    if not free.any():
        result.coupling = Coupling.from_plan(p, a, b)
        result.converged = True
        result.warnings.append("zero pattern blocks every entry; returning the zero coupling")
        return result

    init = None
    grad = apply_cost_tensor(prob, p)
    for k in range(1, params.max_outer + 1):
        log_q = _mirror_log_kernel(grad, log_p, free, eta, eps)
        inner = solve_sot_kernel(log_q, a, b, eps, cap, tol=params.tol_inner,
                                 max_iter=params.max_inner, init=init, warn=False)
        if not inner.converged:
            result.warnings.append(f"outer iteration {k}: inner solver hit max_inner")
        init = inner.potentials
        p_new, log_p = inner.coupling.p, inner.log_plan
        # step length per unit eta: small steps are not taken as stationarity
        step = np.linalg.norm(p_new - p) / eta
        scale = np.linalg.norm(p)
        p = p_new
        grad = apply_cost_tensor(prob, p)
        _record(result, prob, params, p, grad, inner.n_iter)
        result.outer_iters = k
        if step < params.tol_outer * scale:
            result.converged = True
            break
    result.coupling = Coupling.from_plan(p, a, b)
    if not result.converged:
        result.warnings.append(f"outer loop stopped at max_outer={params.max_outer}")
        warnings.warn(result.warnings[-1], ConvergenceWarning, stacklevel=3)
    return result


def solve_sgw(prob, params=None, pattern=None, graph=None):
    """Entropic supervised GW by greedy-cover zero pattern + Mirror-C descent.

    Parameters
    ----------
    prob : GwProblem
    params : SolverParams, optional
    pattern : ZeroPattern, optional
        Skip cover selection and use this pattern.
    graph : ConflictGraph, optional
        Reuse a prebuilt conflict graph for ``prob.rho``.

    Returns
    -------
    SgwResult
    """
    params = params or SolverParams()
    n, m = prob.shape
    result = SgwResult(Coupling.from_plan(np.zeros((n, m)), prob.a, prob.b), ZeroPattern.empty(n, m))
    if pattern is None:
        if prob.supervised:
            graph = graph or build_conflict_graph(prob.d1, prob.d2, prob.rho)
            sel = select_zero_pattern(graph, prob.a, prob.b, params)
            pattern = sel.pattern
            result.cover_mass = sel.mass
            result.cover_trials = list(sel.trials)
        else:
            pattern = ZeroPattern.empty(n, m)
            result.cover_mass = float(min(prob.a.sum(), prob.b.sum()))
    result.pattern = pattern
    cap = params.eta * params.gamma
    return _outer_loop(prob, params, pattern, params.eta, cap, result)


def solve_entropic_gw(prob, params=None):
    """Balanced entropic GW: the same outer loop with kernel ``exp(-M o P / eps)``
    and plain Sinkhorn projections (no caps, no pattern)."""
    params = params or SolverParams()
    ta, tb = prob.a.sum(), prob.b.sum()
    if not math.isclose(ta, tb, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"entropic GW needs equal total masses (got {ta} and {tb})")
    n, m = prob.shape
    result = SgwResult(Coupling.from_plan(np.zeros((n, m)), prob.a, prob.b), ZeroPattern.empty(n, m))
    result.cover_mass = float(ta)
    return _outer_loop(prob, params, result.pattern, 1.0, math.inf, result)
