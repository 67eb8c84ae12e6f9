import numpy as np
import pytest

from polybundle.bundle import (
    BundleCapError,
    BundleState,
    aggregate_and_append,
    model_eval,
    pvec_generate,
    select_aggregation,
)
from polybundle.linalg import ConstraintOperator, SymMatrix, svec


def random_setup(rng, n=5, m=4, l=3):
    mats = []
    for _ in range(m):
        a = rng.standard_normal((n, n))
        mats.append(SymMatrix.from_dense((a + a.T) / 2))
    op = ConstraintOperator.from_matrices(n, mats)
    c = rng.standard_normal((n, n))
    c = (c + c.T) / 2
    p = rng.standard_normal((n, l))
    p /= np.linalg.norm(p, axis=0)
    return op, c, svec(c).values, p, mats


class TestPvecGenerate:
    def test_basis_vector(self):
        # P = e1 in n=2: Pvec = svec(e1 e1') = [1,0,0], a = C_11, B_i = (A_i)_11
        a1 = SymMatrix.from_dense(np.array([[2.0, 1.0], [1.0, 0.0]]))
        op = ConstraintOperator.from_matrices(2, [a1])
        c = np.array([[3.0, -1.0], [-1.0, 5.0]])
        p = np.array([[1.0], [0.0]])
        pvec, a, b = pvec_generate(p, op, svec(c).values)
        assert np.allclose(pvec[:, 0], [1.0, 0.0, 0.0])
        assert a[0] == pytest.approx(3.0)
        assert b[0, 0] == pytest.approx(2.0)

    def test_two_basis_vectors(self):
        c = np.diag([4.0, 7.0])
        op = ConstraintOperator.from_matrices(
            2, [SymMatrix.from_dense(np.eye(2))]
        )
        p = np.eye(2)
        _, a, _ = pvec_generate(p, op, svec(c).values)
        assert np.allclose(a, [4.0, 7.0])

    def test_matches_outer_product_oracle(self):
        rng = np.random.default_rng(0)
        op, c, cvec, p, mats = random_setup(rng)
        pvec, a, b = pvec_generate(p, op, cvec)
        for i in range(p.shape[1]):
            outer = np.outer(p[:, i], p[:, i])
            assert np.allclose(pvec[:, i], svec(outer).values, atol=1e-12)
            assert a[i] == pytest.approx(np.trace(c @ outer), abs=1e-12)
            want_b = [np.trace(m.to_dense() @ outer) for m in mats]
            assert np.allclose(b[:, i], want_b, atol=1e-12)

    def test_rejects_non_unit_columns(self):
        rng = np.random.default_rng(1)
        op, _, cvec, p, _ = random_setup(rng)
        with pytest.raises(ValueError, match="unit"):
            pvec_generate(2.0 * p, op, cvec)


class TestModelEval:
    def test_linear_part_only(self):
        y = np.array([1.0, -2.0])
        b = np.array([3.0, 1.0])
        val = model_eval(y, np.zeros(2), np.zeros((2, 2)), 5.0, b)
        assert val == pytest.approx(-b @ y)

    def test_single_coefficient(self):
        # (B'y - a) = 2 with rho = 3 and b = 0 gives 6
        y = np.array([1.0])
        b_mat = np.array([[2.0]])
        a = np.array([0.0])
        assert model_eval(y, a, b_mat, 3.0, np.zeros(1)) == pytest.approx(6.0)

    def test_negative_coefficients_clamp_to_zero(self):
        y = np.array([1.0])
        b_mat = np.array([[-1.0, -2.0]])
        a = np.array([0.5, 0.0])
        assert model_eval(y, a, b_mat, 4.0, np.zeros(1)) == pytest.approx(0.0)

    def test_matches_lp_vertex_enumeration(self):
        # the max over {u >= 0, 1'u <= rho} of a linear functional sits at
        # u = 0 or u = rho * e_j
        rng = np.random.default_rng(2)
        for _ in range(50):
            m, l, rho = 4, 6, rng.uniform(0.5, 5.0)
            y = rng.standard_normal(m)
            b = rng.standard_normal(m)
            b_mat = rng.standard_normal((m, l))
            a = rng.standard_normal(l)
            coeffs = b_mat.T @ y - a
            best = max(0.0, rho * coeffs.max())
            want = -b @ y + best
            assert model_eval(y, a, b_mat, rho, b) == pytest.approx(
                want, abs=1e-10
            )


class TestSelectAggregation:
    def test_roomy_case_thresholds_gamma1(self):
        x = np.array([0.5, 1e-7, 0.3, 1e-9])
        p_bar, p_hat = select_aggregation(x, l=4, r=2, l_max=10,
                                          gamma1=1e-6, gamma2=1e-7)
        assert sorted(p_bar) == [1, 3]
        assert sorted(p_hat) == [0, 2]

    def test_tight_case_forces_smallest(self):
        # l = 6, l_max = 7, r = 3: at least 6 - (7 - 3) = 2 must go
        x = np.array([0.5, 0.4, 0.01, 0.02, 0.3, 0.6])
        p_bar, p_hat = select_aggregation(x, l=6, r=3, l_max=7,
                                          gamma1=1e-6, gamma2=1e-7)
        assert sorted(p_bar) == [2, 3]
        assert len(p_hat) + 3 <= 7

    def test_tight_case_includes_gamma2(self):
        x = np.array([0.5, 1e-8, 0.4, 0.3, 0.2, 0.1])
        p_bar, p_hat = select_aggregation(x, l=6, r=3, l_max=7,
                                          gamma1=1e-6, gamma2=1e-7)
        assert 1 in p_bar
        assert len(p_bar) >= 2

    def test_tie_break_by_lower_index(self):
        x = np.array([0.2, 0.2, 0.2, 0.2])
        p_bar, _ = select_aggregation(x, l=4, r=2, l_max=5,
                                      gamma1=1e-6, gamma2=1e-7)
        assert sorted(p_bar) == [0]

    def test_keep_all_when_roomy_and_heavy(self):
        x = np.array([0.5, 0.4])
        p_bar, p_hat = select_aggregation(x, l=2, r=2, l_max=10,
                                          gamma1=1e-6, gamma2=1e-7)
        assert p_bar.size == 0
        assert sorted(p_hat) == [0, 1]


class TestAggregateAndAppend:
    def make_state(self, rng, n=5, m=4, l=3, with_w=True):
        op, c, cvec, p, _ = random_setup(rng, n=n, m=m, l=l)
        _, a_hat, b_hat = pvec_generate(p, op, cvec)
        w = np.zeros((n, n)) if with_w else None
        state = BundleState(P=p, a_hat=a_hat, B_hat=b_hat, a_bar=0.0,
                            B_bar=np.zeros(m), W=w)
        return state, op, c, cvec

    def new_block(self, rng, op, cvec, n, r):
        v = rng.standard_normal((n, r))
        v /= np.linalg.norm(v, axis=0)
        _, a_new, b_new = pvec_generate(v, op, cvec)
        return v, a_new, b_new

    def test_zero_mass_zeroes_aggregate(self):
        rng = np.random.default_rng(3)
        state, op, _, cvec = self.make_state(rng)
        v, a_new, b_new = self.new_block(rng, op, cvec, 5, 2)
        p_bar = np.array([], dtype=np.int64)
        p_hat = np.arange(3)
        out = aggregate_and_append(state, 0.0, np.array([0.2, 0.3, 0.1]),
                                   v, a_new, b_new, p_bar, p_hat, l_max=10)
        assert out.a_bar == 0.0
        assert np.all(out.B_bar == 0.0)
        assert out.l == 5

    def test_aggregate_consistency_with_w(self):
        # after aggregation a_bar = <C, W> and B_bar = A(W)
        rng = np.random.default_rng(4)
        state, op, c, cvec = self.make_state(rng)
        v, a_new, b_new = self.new_block(rng, op, cvec, 5, 2)
        x = np.array([0.4, 0.05, 0.3])
        p_bar = np.array([1], dtype=np.int64)
        p_hat = np.array([0, 2], dtype=np.int64)
        out = aggregate_and_append(state, 0.5, x, v, a_new, b_new,
                                   p_bar, p_hat, l_max=10)
        assert out.W is not None
        assert out.a_bar == pytest.approx(np.trace(c @ out.W), abs=1e-10)
        from polybundle.linalg import apply_A
        assert np.allclose(out.B_bar, apply_A(op, out.W), atol=1e-10)
        evals = np.linalg.eigvalsh(out.W)
        assert evals.min() >= -1e-9
        assert np.trace(out.W) <= 1.0 + 1e-9

    def test_kept_columns_preserved(self):
        rng = np.random.default_rng(5)
        state, op, _, cvec = self.make_state(rng)
        v, a_new, b_new = self.new_block(rng, op, cvec, 5, 2)
        p_bar = np.array([0], dtype=np.int64)
        p_hat = np.array([1, 2], dtype=np.int64)
        out = aggregate_and_append(state, 0.0, np.array([0.1, 0.2, 0.3]),
                                   v, a_new, b_new, p_bar, p_hat, l_max=10)
        assert np.array_equal(out.P[:, :2], state.P[:, [1, 2]])
        assert np.array_equal(out.P[:, 2:], v)
        assert np.array_equal(out.a_hat[:2], state.a_hat[[1, 2]])

    def test_cap_violation_raises(self):
        rng = np.random.default_rng(6)
        state, op, _, cvec = self.make_state(rng)
        v, a_new, b_new = self.new_block(rng, op, cvec, 5, 2)
        p_bar = np.array([], dtype=np.int64)
        p_hat = np.arange(3)
        with pytest.raises(BundleCapError):
            aggregate_and_append(state, 0.0, np.array([0.1, 0.2, 0.3]),
                                 v, a_new, b_new, p_bar, p_hat, l_max=4)

    def test_model_arrays_layout(self):
        rng = np.random.default_rng(7)
        state, _, _, _ = self.make_state(rng)
        a, b_mat = state.model_arrays()
        assert a.shape == (4,)
        assert b_mat.shape == (4, 4)
        assert a[0] == state.a_bar
        assert np.array_equal(b_mat[:, 0], state.B_bar)
