import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cost_tensor_direct, cost_tensor_loops
from supgw.conflict import build_conflict_graph
from supgw.core import SolverParams, ZeroPattern, validate_coupling
from supgw.geometry import euclidean_distances
from supgw.sgw import (GwProblem, apply_cost_tensor, entropic_objective, max_step_size,
                       mirror_descent_kernel, mirrorc_kernel, rho_max, sgw_objective,
                       solve_entropic_gw, solve_sgw)
from supgw.sot import ConvergenceWarning

D1 = np.array([[0, 1], [1, 0.0]])
D2 = np.array([[0, 2], [2, 0.0]])


def random_problem(seed, n=None, m=None, rho=math.inf):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 7))
    m = m or int(rng.integers(2, 7))
    d1 = euclidean_distances(rng.normal(size=(n, 2)))
    d2 = euclidean_distances(rng.normal(size=(m, 2)))
    return GwProblem.uniform(d1, d2, rho)


class TestCostTensor:
    def test_examples(self):
        pr = GwProblem.uniform(D1, D1)
        np.testing.assert_allclose(apply_cost_tensor(pr, np.diag([0.5, 0.5])), [[0, 1], [1, 0]])
        assert np.all(apply_cost_tensor(pr, np.zeros((2, 2))) == 0)
        one = GwProblem.uniform([[0.0]], [[0.0]])
        assert apply_cost_tensor(one, [[0.7]]).tolist() == [[0.0]]

    def test_loops_oracle(self):
        pr = random_problem(0, 4, 3)
        p = np.random.default_rng(1).random((4, 3))
        np.testing.assert_allclose(apply_cost_tensor(pr, p), cost_tensor_loops(pr.d1, pr.d2, p),
                                   rtol=1e-12)

    @given(st.integers(0, 10_000))
    def test_expansion_matches_direct_sum(self, seed):
        rng = np.random.default_rng(seed)
        pr = random_problem(seed, int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        p = rng.random(pr.shape)
        ref = cost_tensor_direct(pr.d1, pr.d2, p)
        got = apply_cost_tensor(pr, p)
        assert np.max(np.abs(got - ref)) <= 1e-10 * max(np.max(np.abs(ref)), 1e-300)


class TestObjective:
    def test_examples(self):
        pr = GwProblem.uniform(D1, D1)
        q, total = sgw_objective(pr, np.diag([0.5, 0.5]))
        assert q == pytest.approx(0.0) and total == pytest.approx(0.0)
        assert sgw_objective(pr, np.zeros((2, 2)))[1] == pytest.approx(20.0)

    def test_pattern_violation(self):
        pr = GwProblem.uniform(D1, D1)
        with pytest.raises(ValueError):
            sgw_objective(pr, np.full((2, 2), 0.1), pattern=ZeroPattern.from_pairs([(0, 1)], 2, 2))


class TestKernel:
    def test_one_by_one(self):
        pr = GwProblem.uniform([[0.0]], [[0.0]])
        p = SolverParams(epsilon=0.5, dt=2.0)
        q = mirrorc_kernel(pr, [[1.0]], ZeroPattern.empty(1, 1), p)
        # zero distances give a zero gradient, so Q = P^(1/(1 + eps dt)) = 1
        assert q[0, 0] == pytest.approx(1.0)

    def test_gradient_term(self):
        pr = GwProblem.uniform(D1, D1)
        params = SolverParams(epsilon=0.3, dt=1.7)
        p = np.array([[0.1, 0.2], [0.3, 0.4]])
        g = apply_cost_tensor(pr, p)
        q = mirrorc_kernel(pr, p, ZeroPattern.empty(2, 2), params)
        dt, eps = params.dt, params.epsilon
        np.testing.assert_allclose(q, np.exp(-dt / (1 + eps * dt) * g + np.log(p) / (1 + eps * dt)),
                                   rtol=1e-12)

    def test_zero_gradient_power(self):
        pr = GwProblem.uniform([[0.0]], [[0.0]])
        params = SolverParams(epsilon=0.2, dt=3.0)
        q = mirrorc_kernel(pr, [[0.3]], ZeroPattern.empty(1, 1), params)
        assert q[0, 0] == pytest.approx(0.3 ** (1 / 1.6))

    def test_pattern_zero_and_positivity(self):
        pr = GwProblem.uniform(D1, D2)
        pat = ZeroPattern.from_pairs([(0, 1)], 2, 2)
        params = SolverParams(dt=1.0)
        q = mirrorc_kernel(pr, [[0.2, 0.0], [0.3, 0.1]], pat, params)
        assert q[0, 1] == 0 and np.all(q[~pat.mask] > 0)
        with pytest.raises(ValueError):
            mirrorc_kernel(pr, [[0.0, 0.0], [0.3, 0.1]], pat, params)


class TestStepSize:
    def test_example(self):
        pr = GwProblem.uniform(D1, D1)
        dt, eta = max_step_size(pr, SolverParams(epsilon=0.1))
        assert dt == pytest.approx(0.5)
        assert eta == pytest.approx(0.1 / 2.1)

    def test_scaling(self):
        pr = random_problem(3, 3, 4)
        dt, _ = max_step_size(pr)
        dt2, _ = max_step_size(GwProblem(2 * pr.d1, 2 * pr.d2, pr.a, pr.b))
        assert dt2 == pytest.approx(dt / 4)


class TestSolver:
    def test_identical_two_point_spaces_symmetric_start(self):
        # with uniform marginals the product start is a symmetric critical
        # point: the gradient is constant, so the iteration never leaves it
        pr = GwProblem.uniform(D1, D1, rho=10.0)
        r = solve_sgw(pr, SolverParams(epsilon=0.01))
        np.testing.assert_allclose(r.coupling.p, np.full((2, 2), 0.25), atol=1e-9)
        assert r.converged and r.quadratic_trace[-1] == pytest.approx(0.25)

    def test_identical_two_point_spaces(self):
        # a slight tilt of the marginals breaks the tie between the two
        # permutation couplings, both of zero distortion
        a = np.array([0.5 + 1e-3, 0.5 - 1e-3])
        pr = GwProblem(D1, D1, a, a, rho=10.0)
        r = solve_sgw(pr, SolverParams(epsilon=0.01))
        p = r.coupling.p
        diag, anti = np.diag(a), np.fliplr(np.diag(a))
        assert min(np.abs(p - diag).max(), np.abs(p - anti).max()) < 1e-3
        assert r.mass == pytest.approx(1.0, abs=1e-3)
        assert r.quadratic_trace[-1] < 1e-3

    def test_k4_single_entry(self):
        pr = GwProblem.uniform(D1, D2, rho=0.5)
        r = solve_sgw(pr, SolverParams(n_covers=5))
        assert r.mass == pytest.approx(0.5, abs=1e-6)
        assert np.count_nonzero(r.coupling.p) == 1

    def test_full_pattern_warns_zero(self):
        pr = GwProblem.uniform(D1, D2)
        r = solve_sgw(pr, pattern=ZeroPattern(np.ones((2, 2), bool)))
        assert r.mass == 0 and r.warnings

    def test_unsupervised_matches_entropic_gw(self):
        pr = random_problem(5, 5, 5, rho=1e9)
        params = SolverParams()
        a = solve_sgw(pr, params).coupling.p
        b = solve_entropic_gw(pr, params).coupling.p
        assert np.linalg.norm(a - b) < 1e-3

    def test_entropic_gw_needs_balance(self):
        pr = GwProblem(D1, D1, [0.5, 0.5], [0.5, 0.6])
        with pytest.raises(ValueError):
            solve_entropic_gw(pr)

    def test_entropic_gw_identical_spaces(self):
        x = np.array([[0, 0], [1, 0], [0, 3.0]])
        d = euclidean_distances(x)
        r = solve_entropic_gw(GwProblem.uniform(d, d), SolverParams(epsilon=0.01))
        assert r.quadratic_trace[-1] < 1e-3
        np.testing.assert_allclose(r.coupling.p, np.eye(3) / 3, atol=1e-3)

    def test_traces_and_invariants(self):
        pr = random_problem(7, 6, 5, rho=0.4)
        r = solve_sgw(pr, SolverParams(n_covers=10))
        for tr in (r.quadratic_trace, r.objective_trace, r.mass_trace, r.inner_iters):
            assert len(tr) == r.outer_iters
        assert validate_coupling(r.coupling, pr.a, pr.b, r.pattern) == []
        assert np.all(r.coupling.p[r.pattern.mask] == 0)
        assert r.mass <= r.cover_mass + 1e-6
        g = build_conflict_graph(pr.d1, pr.d2, pr.rho)
        p = r.coupling.p.ravel()
        for u, v in g.edges():
            assert min(p[u], p[v]) == 0

    def test_rho_max(self):
        assert rho_max(D1, D2) == 2.0
        assert GwProblem.uniform(D1, D2, 2.0).supervised is False

    def test_permutation_equivariance(self):
        pr = random_problem(11, 5, 4)
        perm = np.array([3, 0, 4, 1, 2])
        pr2 = GwProblem.uniform(pr.d1[np.ix_(perm, perm)], pr.d2)
        a = solve_sgw(pr).coupling.p
        b = solve_sgw(pr2).coupling.p
        np.testing.assert_allclose(b, a[perm], atol=1e-10)

    def test_problem_validation(self):
        with pytest.raises(ValueError):
            GwProblem(D1, D2, [1.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            GwProblem.uniform(D1, D2, rho=-1)


def test_mirror_equivalence_and_reduction():
    rng = np.random.default_rng(0)
    p = rng.random((4, 5)) + 0.01
    g = rng.random((4, 5))
    eps, dt = 0.3, 2.5
    dtp = 1.0 / (1.0 / dt + eps)
    w = mirror_descent_kernel(p, g, eps, dtp)
    q = np.exp(-dt / (1 + eps * dt) * g + np.log(p) / (1 + eps * dt))
    np.testing.assert_allclose(w, q, rtol=1e-12)
    assert np.array_equal(mirror_descent_kernel(p, g, eps, 1 / eps), np.exp(-g / eps))


@pytest.mark.filterwarnings("ignore::supgw.sot.ConvergenceWarning")
@given(st.integers(0, 10_000))
def test_descent_in_guaranteed_regime(seed):
    pr = random_problem(seed, rho=float(np.random.default_rng(seed).uniform(0.3, 1.5)))
    # the descent argument assumes exact inner solves
    base = SolverParams(n_covers=3, max_outer=40, tol_inner=1e-13, max_inner=100000)
    dt, _ = max_step_size(pr, base)
    params = base.replace(dt=dt)
    r = solve_sgw(pr, params)
    p0 = np.where(r.pattern.mask, 0.0, np.outer(pr.a, pr.b))
    vals = [entropic_objective(pr, p0, params)] + r.entropic_trace
    assert np.all(np.diff(vals) <= 1e-8)
