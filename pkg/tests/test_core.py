import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from supgw.core import (Coupling, SolverParams, ZeroPattern, as_distance_matrix, as_marginal,
                        transported_mass, uniform, validate_coupling)


def kinds(report):
    return [(v.kind, v.index) for v in report]


class TestValidateCoupling:
    def test_zero_plan_always_feasible(self):
        pat = ZeroPattern.from_pairs([(0, 1)], 2, 3)
        assert validate_coupling(np.zeros((2, 3)), [0.2, 0.3], [0.1, 0.1, 0.1], pat) == []

    def test_exact_marginals(self):
        assert validate_coupling(np.diag([0.5, 0.5]), [0.5, 0.5], [0.5, 0.5]) == []

    def test_row_excess_reported(self):
        rep = validate_coupling([[0.6, 0], [0, 0.5]], [0.5, 0.5], [0.5, 0.5])
        rows = [v for v in rep if v.kind == "row_excess"]
        assert [v.index for v in rows] == [(0,)]
        assert rows[0].amount == pytest.approx(0.1)
        # the same entry also overfills column 0, and every violation is listed
        assert ("column_excess", (0,)) in kinds(rep)

    def test_all_kinds(self):
        p = np.array([[-0.1, 0.7], [0.0, 0.3]])
        pat = ZeroPattern.from_pairs([(1, 1)], 2, 2)
        rep = validate_coupling(p, [0.5, 0.5], [0.5, 0.5], pat)
        assert set(kinds(rep)) == {("negative", (0, 0)), ("row_excess", (0,)),
                                   ("column_excess", (1,)), ("blocked", (1, 1))}

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            validate_coupling(np.zeros((2, 2)), [1.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            validate_coupling(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], ZeroPattern.empty(3, 2))

    @given(arrays(float, (3, 4), elements=st.floats(-0.2, 0.5)),
           st.floats(0, 0.3), st.floats(0, 0.3))
    def test_monotone_in_tol(self, p, t1, t2):
        lo, hi = sorted((t1, t2))
        a, b = np.full(3, 0.4), np.full(4, 0.3)
        pat = ZeroPattern(np.eye(3, 4, dtype=bool))
        small = set(kinds(validate_coupling(p, a, b, pat, lo)))
        large = set(kinds(validate_coupling(p, a, b, pat, hi)))
        assert large <= small


class TestMass:
    def test_examples(self):
        assert transported_mass(np.zeros((2, 2))) == 0
        assert transported_mass(np.diag([0.5, 0.5])) == 1.0
        assert transported_mass([[0, 0.5], [0, 0.25]]) == 0.75

    @given(arrays(float, (3, 3), elements=st.floats(0, 1)))
    def test_blocked_marginal_identity(self, p):
        # a, b chosen so the plan is exactly feasible
        a = p.sum(axis=1) + 0.25
        b = p.sum(axis=0) + 0.5
        c = Coupling.from_plan(p, a, b)
        assert validate_coupling(c, a, b, tol=0) == []
        s = c.mass
        assert a.sum() - c.mu.sum() == pytest.approx(s, abs=1e-12)
        assert b.sum() - c.nu.sum() == pytest.approx(s, abs=1e-12)


class TestZeroPattern:
    def test_membership_and_size(self):
        z = ZeroPattern.from_pairs([(0, 1), (1, 0)], 2, 2)
        assert (0, 1) in z and (0, 0) not in z
        assert len(z) == 2 and z.pairs() == {(0, 1), (1, 0)}

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            ZeroPattern.from_pairs([(2, 0)], 2, 2)

    def test_immutable(self):
        z = ZeroPattern.empty(2, 2)
        with pytest.raises(ValueError):
            z.mask[0, 0] = True


class TestValidators:
    def test_distance_matrix_checks(self):
        as_distance_matrix([[0, 1], [1, 0]])
        for bad in ([[0, 1], [2, 0]], [[1, 1], [1, 0]], [[0, -1], [-1, 0]],
                    [[0, np.inf], [np.inf, 0]], [[0, 1, 2]]):
            with pytest.raises(ValueError):
                as_distance_matrix(bad)

    def test_marginal_checks(self):
        assert uniform(4).sum() == pytest.approx(1.0)
        assert uniform(2, total=3.0).tolist() == [1.5, 1.5]
        for bad in ([], [0, 0], [-1, 2], [np.nan]):
            with pytest.raises(ValueError):
                as_marginal(bad)


class TestSolverParams:
    def test_defaults(self):
        p = SolverParams()
        assert (p.epsilon, p.gamma, p.eta, p.n_covers) == (0.1, 10.0, 1.0, 100)

    @pytest.mark.parametrize("eta", [1e-6, 1e-2, 0.5, 1.0])
    def test_eta_round_trip(self, eta):
        p = SolverParams(epsilon=0.3).with_eta(eta)
        assert p.eta == pytest.approx(eta, rel=1e-12)
        if eta < 1:
            x = p.epsilon * p.dt
            assert x / (1 + x) == pytest.approx(eta)
        else:
            assert math.isinf(p.dt)

    @pytest.mark.parametrize("kw", [dict(epsilon=0), dict(gamma=-1), dict(dt=0),
                                    dict(tol_inner=0), dict(max_outer=0), dict(n_covers=0),
                                    dict(prefix_max=1.5)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolverParams(**kw)

    def test_bad_eta(self):
        with pytest.raises(ValueError):
            SolverParams().with_eta(0)
