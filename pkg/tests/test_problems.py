import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iagcert.problems import (LogisticBlock, QuadraticComponent, QuadraticSum, full_gradient, gradcheck_error,
                              load_logistic_csv, make_logistic_l2, make_quadratic_sum, synthetic_logistic_data,
                              worst_case_quadratic)

problem_params = st.tuples(
    st.integers(0, 10_000),          # seed
    st.integers(1, 6),               # m
    st.integers(2, 8),               # n
    st.floats(0.1, 5.0),             # mu
    st.floats(1.0, 200.0),           # Q
)


class TestQuadraticGenerator:
    @settings(max_examples=40, deadline=None)
    @given(problem_params)
    def test_smallest_eigenvalue_is_mu(self, params):
        seed, m, n, mu, Q = params
        p = make_quadratic_sum(seed, m, n, mu, Q * mu)
        eig = np.linalg.eigvalsh(p.hessian)
        assert abs(eig[0] - mu) <= 1e-10 * max(1.0, Q * mu)
        assert p.L == pytest.approx(Q * mu, rel=1e-12)
        assert p.Q == pytest.approx(Q, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(problem_params)
    def test_component_constants_dominate(self, params):
        seed, m, n, mu, Q = params
        p = make_quadratic_sum(seed, m, n, mu, Q * mu)
        for c in p.components:
            eig = np.linalg.eigvalsh(c.A)
            assert eig[0] >= -1e-10
            assert eig[-1] <= c.lipschitz * (1 + 1e-10) + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(problem_params)
    def test_gradient_vanishes_at_optimum(self, params):
        seed, m, n, mu, Q = params
        p = make_quadratic_sum(seed, m, n, mu, Q * mu)
        g = full_gradient(p, p.x_star)
        assert np.linalg.norm(g) <= 1e-9 * max(1.0, p.L * np.linalg.norm(p.x_star))

    def test_one_component_one_dimension(self):
        p = make_quadratic_sum(3, 1, 1, 2.0, 2.0)
        assert p.m == 1 and p.n == 1
        assert p.L == pytest.approx(2.0) and p.Q == pytest.approx(1.0)
        assert p.hessian[0, 0] == pytest.approx(2.0)

    def test_deterministic_in_seed(self):
        a = make_quadratic_sum(5, 3, 4, 1.0, 10.0)
        b = make_quadratic_sum(5, 3, 4, 1.0, 10.0)
        assert np.array_equal(a.x_star, b.x_star)
        assert all(np.array_equal(x.A, y.A) for x, y in zip(a.components, b.components))

    @pytest.mark.parametrize("args", [(0, 0, 2, 1.0, 2.0), (0, 2, 0, 1.0, 2.0), (0, 2, 2, 0.0, 2.0),
                                      (0, 2, 2, 3.0, 2.0)])
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ValueError):
            make_quadratic_sum(*args)

    def test_x_star_read_only(self):
        p = make_quadratic_sum(0, 2, 3, 1.0, 4.0)
        with pytest.raises(ValueError):
            p.x_star[0] = 1.0


class TestWorstCase:
    def test_spectrum(self):
        p = worst_case_quadratic(1.0, 10.0, m=2, n=3)
        assert np.allclose(np.linalg.eigvalsh(p.hessian), [1.0, 10.0, 10.0])
        assert p.L == pytest.approx(10.0)
        assert p.cost_gap(np.zeros(3)) == 0.0

    def test_center(self):
        p = worst_case_quadratic(1.0, 4.0, n=2, center=[1.0, -2.0])
        assert np.allclose(full_gradient(p, np.array([1.0, -2.0])), 0.0)
        assert p.value(p.x_star) == pytest.approx(p.f_star)


class TestStrongConvexity:
    @settings(max_examples=30, deadline=None)
    @given(problem_params, st.integers(0, 2**31 - 1))
    def test_quadratic_inequalities(self, params, seed2):
        seed, m, n, mu, Q = params
        p = make_quadratic_sum(seed, m, n, mu, Q * mu)
        rng = np.random.default_rng(seed2)
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        gx = full_gradient(p, x)
        d = y - x
        gap = p.value(y) - p.value(x) - gx @ d
        scale = 1e-9 * (1 + abs(p.value(x)) + abs(p.value(y)))
        assert gap >= 0.5 * mu * d @ d - scale
        assert gap <= 0.5 * p.L * d @ d + scale
        # component Lipschitz constants, sampled
        for c in p.components:
            assert np.linalg.norm(c.gradient(x) - c.gradient(y)) <= c.lipschitz * np.linalg.norm(d) * (1 + 1e-9) + 1e-12

    def test_logistic_lipschitz_sampled(self):
        A, y = synthetic_logistic_data(1, 30, 4)
        p = make_logistic_l2(A, y, 0.3, 3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            u, v = 3 * rng.standard_normal(4), 3 * rng.standard_normal(4)
            for c in p.components:
                assert np.linalg.norm(c.gradient(u) - c.gradient(v)) <= c.lipschitz * np.linalg.norm(u - v) + 1e-12
            # strong convexity of the whole sum
            d = v - u
            assert (full_gradient(p, v) - full_gradient(p, u)) @ d >= 0.3 * d @ d * (1 - 1e-9)


class TestLogistic:
    def test_zero_features(self):
        N, n, lam = 6, 3, 0.5
        p = make_logistic_l2(np.zeros((N, n)), np.ones(N), lam, 2)
        assert np.allclose(p.x_star, 0.0)
        assert p.f_star == pytest.approx(N * math.log(2.0), rel=1e-12)

    def test_single_sample(self):
        lam = 1.0
        p = make_logistic_l2(np.array([[1.0, 0.0]]), np.array([1.0]), lam, 1)
        # first-order condition: x1 = sigmoid(-x1) / lam, x2 = 0
        x1 = p.x_star[0]
        assert x1 == pytest.approx(1.0 / (1.0 + math.exp(x1)) / lam, abs=1e-10)
        assert abs(p.x_star[1]) < 1e-12
        assert p.L == pytest.approx(0.25 + lam)

    def test_split_and_constants(self):
        A, y = synthetic_logistic_data(2, 23, 4)
        p = make_logistic_l2(A, y, 0.1, 5)
        assert p.m == 5 and sum(c.features.shape[0] for c in p.components) == 23
        for c in p.components:
            assert c.reg == pytest.approx(0.02)
            assert c.lipschitz == pytest.approx(0.25 * np.sum(c.features ** 2) + 0.02)
        assert np.linalg.norm(full_gradient(p, p.x_star)) <= 1e-9

    def test_cost_gap_matches_difference(self):
        A, y = synthetic_logistic_data(4, 40, 3)
        p = make_logistic_l2(A, y, 0.2, 4)
        x = p.x_star + 0.7
        assert p.cost_gap(x) == pytest.approx(p.value(x) - p.f_star, rel=1e-9)
        assert p.cost_gap(p.x_star) == pytest.approx(0.0, abs=1e-14)
        assert p.cost_gap(p.x_star + 1e-6) > 0

    def test_large_margins_are_finite(self):
        blk = LogisticBlock(features=np.array([[1000.0], [-1000.0]]), labels=np.array([1.0, 1.0]), reg=0.0,
                            lipschitz=5e5)
        x = np.array([1.0])
        assert math.isfinite(blk.value(x)) and np.all(np.isfinite(blk.gradient(x)))
        assert blk.value(x) == pytest.approx(1000.0)

    @pytest.mark.parametrize("labels", [[0.0, 1.0], [1.0, 2.0]])
    def test_rejects_bad_labels(self, labels):
        with pytest.raises(ValueError):
            make_logistic_l2(np.ones((2, 2)), np.array(labels), 0.1, 1)

    def test_rejects_too_many_blocks(self):
        with pytest.raises(ValueError):
            make_logistic_l2(np.ones((2, 2)), np.ones(2), 0.1, 3)


class TestBatchedOracles:
    @pytest.mark.parametrize("kind", ["quadratic", "logistic"])
    def test_batched_match_rowwise(self, kind):
        if kind == "quadratic":
            p = make_quadratic_sum(1, 4, 5, 1.0, 30.0)
        else:
            A, y = synthetic_logistic_data(1, 30, 5)
            p = make_logistic_l2(A, y, 0.1, 4)
        X = p.x_star + np.random.default_rng(0).standard_normal((7, 5))
        G = p.full_gradients(X)
        gaps = p.cost_gaps(X)
        for j, x in enumerate(X):
            assert np.allclose(G[j], full_gradient(p, x), rtol=1e-12, atol=1e-12)
            assert gaps[j] == pytest.approx(p.cost_gap(x), rel=1e-10, abs=1e-15)

    def test_full_gradient_is_sum(self):
        p = make_quadratic_sum(2, 3, 4, 1.0, 5.0)
        x = np.arange(4.0)
        assert np.allclose(full_gradient(p, x), sum(c.gradient(x) for c in p.components))
        assert p.component_gradients(x).shape == (3, 4)

    def test_dimension_check(self):
        p = make_quadratic_sum(2, 3, 4, 1.0, 5.0)
        with pytest.raises(ValueError):
            p.value(np.zeros(3))


class TestGradcheck:
    def test_twenty_points_pass(self):
        A, y = synthetic_logistic_data(3, 25, 4)
        probs = [make_quadratic_sum(3, 3, 4, 1.0, 10.0), make_logistic_l2(A, y, 0.3, 3)]
        rng = np.random.default_rng(7)
        for p in probs:
            for _ in range(20):
                x = p.x_star + rng.standard_normal(4)
                assert max(gradcheck_error(c, x) for c in p.components) <= 1e-6

    def test_broken_oracle_detected(self):
        class Doubled(QuadraticComponent):
            def gradient(self, x):
                return 2 * super().gradient(x)

        c = Doubled(A=np.eye(3), b=np.ones(3), lipschitz=1.0)
        err = gradcheck_error(c, np.array([0.3, -1.0, 2.0]))
        assert err == pytest.approx(1.0, rel=1e-6)


class TestCsv:
    def test_round_trip(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("label,a,b\n1,0.5,2\n-1,1,-3\n")
        A, y = load_logistic_csv(f)
        assert A.shape == (2, 2) and list(y) == [1.0, -1.0]

    def test_bad_header(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,a\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            load_logistic_csv(f)

    def test_bad_label_reports_line(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("label,a\n1,2\n0,3\n")
        with pytest.raises(ValueError, match=":3:"):
            load_logistic_csv(f)

    def test_ragged_row(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("label,a,b\n1,2\n")
        with pytest.raises(ValueError, match=":2:"):
            load_logistic_csv(f)
