import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iagcert import theory
from iagcert.problems import QuadraticComponent, QuadraticSum, full_gradient, make_quadratic_sum
from iagcert.solvers import (DivergenceError, Schedule, ScheduleViolation, StoppingRule, adversarial_schedule,
                             cyclic_schedule, full_schedule, gd_step, gradient_error, iag_step, iagm_step,
                             ig_step, igm_step, init_state, run, validate_schedule)


def scalar_problem(centers, mu=None):
    """Sum of ``1/2 (x - c_i)^2`` in one dimension."""
    comps = tuple(QuadraticComponent(A=np.eye(1), b=np.array([-c]), lipschitz=1.0) for c in centers)
    xs = np.array([np.mean(centers)])
    f = sum(0.5 * (xs[0] - c) ** 2 for c in centers) - sum(0.5 * c * c for c in centers)
    return QuadraticSum(components=comps, mu=mu or float(len(centers)), x_star=xs, f_star=f)


class TestSchedules:
    def test_cyclic_examples(self):
        s = cyclic_schedule(3)
        assert s.K == 2
        assert [s.refresh(k) for k in range(1, 8)] == [(0,), (1,), (2,), (0,), (1,), (2,), (0,)]
        with pytest.raises(ValueError):
            s.refresh(0)

    def test_full(self):
        s = full_schedule(4)
        assert s.K == 0 and s.refresh(5) == (0, 1, 2, 3)

    def test_validate_catches_starved_component(self):
        s = Schedule(m=2, K=1, pattern=((0,),))
        assert validate_schedule(s, 10) == ScheduleViolation(2, 1)

    def test_validate_catches_too_small_K(self):
        s = Schedule(m=3, K=1, pattern=((0,), (1,), (2,)))
        v = validate_schedule(s, 10)
        assert v is not None and v.k == 2

    @pytest.mark.parametrize("m", [1, 2, 5, 9])
    def test_cyclic_valid(self, m):
        assert validate_schedule(cyclic_schedule(m), 500) is None

    def test_adversarial_small(self):
        s = adversarial_schedule(2, 3, seed=0)
        assert validate_schedule(s, 1000) is None
        assert len(s.pattern) == 4

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 10), st.integers(0, 1000))
    def test_adversarial_valid_and_tight(self, m, extra, seed):
        K = m - 1 + extra
        s = adversarial_schedule(m, K, seed)
        assert validate_schedule(s, 4 * (K + 1) + 5) is None
        # with two or more components the delay bound is attained
        tau, worst = [0] * m, 0
        for k in range(1, 4 * (K + 1)):
            for i in s.refresh(k):
                tau[i] = k
            worst = max(worst, max(k - t for t in tau))
        assert worst == (K if m > 1 else 0)

    def test_adversarial_seed_stable(self):
        a, b = adversarial_schedule(5, 7, seed=3), adversarial_schedule(5, 7, seed=3)
        assert [a.refresh(k) for k in range(1, 1001)] == [b.refresh(k) for k in range(1, 1001)]

    def test_adversarial_rejects_small_K(self):
        with pytest.raises(ValueError):
            adversarial_schedule(5, 2, seed=0)
        s = adversarial_schedule(5, 2, seed=0, multi=True)
        assert sorted(i for grp in s.pattern for i in grp) == list(range(5))
        assert validate_schedule(s, 200) is None

    def test_pattern_validation(self):
        with pytest.raises(ValueError):
            Schedule(m=2, K=1, pattern=((0,), (2,)))
        with pytest.raises(ValueError):
            Schedule(m=2, K=1, pattern=((0,), ()))


class TestSteps:
    def test_initial_error_zero(self):
        p = make_quadratic_sum(0, 4, 3, 1.0, 10.0)
        s = init_state(p, np.ones(3), K=3)
        assert np.array_equal(gradient_error(s, p), np.zeros(3))
        assert np.array_equal(s.x, s.x_prev)
        assert list(s.table.sample_times) == [0, 0, 0, 0]

    def test_first_step_is_gd(self):
        p = make_quadratic_sum(1, 3, 4, 1.0, 10.0)
        x0 = np.arange(4.0)
        s = iag_step(init_state(p, x0, 2), p, 0.01, cyclic_schedule(3))
        assert np.allclose(s.x, x0 - 0.01 * full_gradient(p, x0), rtol=0, atol=1e-14)

    def test_against_hand_rolled_table(self):
        p = make_quadratic_sum(2, 3, 2, 1.0, 6.0)
        gamma, x = 0.02, np.array([1.0, -2.0])
        sched = cyclic_schedule(3)
        state = init_state(p, x, 2)
        table = [c.gradient(x) for c in p.components]
        for k in range(10):
            x = x - gamma * sum(table)
            i = k % 3  # refreshed at step k + 1
            table[i] = p.components[i].gradient(x)
            iag_step(state, p, gamma, sched)
            assert np.allclose(state.x, x, atol=1e-14)
            assert state.table.sample_times[i] == k + 1
        assert np.allclose(state.table.aggregate, sum(table), atol=1e-13)

    def test_gradient_error_replay(self):
        p = scalar_problem([0.0, 2.0])
        sched = cyclic_schedule(2)
        s = init_state(p, np.array([0.0]), 1)
        iag_step(s, p, 0.1, sched)
        # x1 = 0 - 0.1 * (0 + (-2)) = 0.2; component 0 refreshed, component 1 still at x0
        assert s.x[0] == pytest.approx(0.2)
        assert gradient_error(s, p)[0] == pytest.approx((0.2 + (0.0 - 2.0)) - (0.2 + (0.2 - 2.0)))

    def test_momentum_zero_is_iag(self):
        p = make_quadratic_sum(3, 4, 3, 1.0, 8.0)
        sched = cyclic_schedule(4)
        gamma = theory.gamma_star(p.mu, p.L, 3)
        a = init_state(p, np.ones(3), 3)
        b = init_state(p, np.ones(3), 3)
        for _ in range(1000):
            iag_step(a, p, gamma, sched)
            iagm_step(b, p, gamma, 0.0, sched)
        assert np.array_equal(a.x, b.x)

    def test_momentum_hand_recursion(self):
        p = scalar_problem([1.0, 3.0])
        sched = cyclic_schedule(2)
        gamma, beta = 0.1, 0.1
        s = init_state(p, np.array([0.0]), 1)
        table, xp, x = [-1.0, -3.0], 0.0, 0.0
        for k in range(6):
            xn = x - gamma * sum(table) + beta * (x - xp)
            xp, x = x, xn
            i = k % 2
            table[i] = x - (1.0, 3.0)[i]
            iagm_step(s, p, gamma, beta, sched)
            assert s.x[0] == pytest.approx(x, abs=1e-15)

    def test_ig_example(self):
        p = scalar_problem([0.0, 2.0])
        x1 = ig_step(np.array([0.0]), p, 0.1, 0)
        x2 = ig_step(x1, p, 0.1, 1)
        assert x1[0] == 0.0 and x2[0] == pytest.approx(0.2)

    def test_igm_cases(self):
        p = scalar_problem([0.0, 2.0])
        x, xo, xprev = np.array([1.0]), np.array([0.5]), np.array([0.25])
        assert igm_step(x, xprev, p, 0.1, 0.0, 1)[0] == pytest.approx(ig_step(x, p, 0.1, 1)[0])
        # default outer iterate is x itself
        assert igm_step(x, xprev, p, 0.1, 0.5, 0)[0] == pytest.approx(1.0 - 0.1 + 0.5 * 0.75)
        assert igm_step(x, xprev, p, 0.1, 0.5, 0, x_outer=xo)[0] == pytest.approx(1.0 - 0.1 + 0.5 * 0.25)
        with pytest.raises(IndexError):
            ig_step(x, p, 0.1, 2)

    def test_gd_step(self):
        p = make_quadratic_sum(4, 3, 3, 1.0, 5.0)
        s = init_state(p, np.ones(3))
        gd_step(s, p, 0.1)
        assert np.allclose(s.x, np.ones(3) - 0.1 * full_gradient(p, np.ones(3)))
        assert np.allclose(s.table.aggregate, full_gradient(p, s.x))


class TestInvariants:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 500), st.integers(1, 6), st.integers(0, 4))
    def test_table_consistent_every_step(self, seed, m, extra):
        p = make_quadratic_sum(seed, m, 3, 1.0, 20.0)
        K = max(m - 1 + extra, 1)
        sched = adversarial_schedule(m, K, seed)
        gamma = theory.gamma_star(p.mu, p.L, K)
        s = init_state(p, np.random.default_rng(seed).standard_normal(3), K)
        for k in range(1, 200):
            iag_step(s, p, gamma, sched)
            assert s.table.drift() <= 1e-12
            assert all(k - t <= K for t in s.table.sample_times)
            for i in range(m):
                assert s.table.sample_times[i] <= k

    @pytest.mark.parametrize("m", [1, 3])
    def test_iag_full_refresh_is_gd(self, m):
        p = make_quadratic_sum(6, m, 4, 1.0, 10.0)
        _, step = theory.gd_certificate(p.mu, p.L)
        stop = StoppingRule(0.0, 200)
        a = run(p, "IAG", step, schedule=full_schedule(m), x0=np.ones(4), stop=stop)
        b = run(p, "GD", step, x0=np.ones(4), stop=stop)
        assert len(a) == len(b)
        assert np.allclose(a.dist, b.dist, rtol=1e-12, atol=1e-14 * a.dist[0])

    def test_single_component_cyclic_is_gd(self):
        p = make_quadratic_sum(6, 1, 4, 1.0, 10.0)
        a = run(p, "IAG", 0.05, schedule=cyclic_schedule(1), x0=np.ones(4), stop=StoppingRule(0.0, 100))
        b = run(p, "GD", 0.05, x0=np.ones(4), stop=StoppingRule(0.0, 100))
        assert a.K == 0
        assert np.allclose(a.dist, b.dist, rtol=1e-12, atol=1e-14 * a.dist[0])


class TestRun:
    def test_huge_tolerance_stops_at_zero(self):
        p = make_quadratic_sum(0, 3, 3, 1.0, 5.0)
        tr = run(p, "IAG", 0.01, x0=np.ones(3), stop=StoppingRule(1e100, 50))
        assert len(tr) == 1 and tr.converged

    def test_max_iters(self):
        p = make_quadratic_sum(0, 3, 3, 1.0, 5.0)
        tr = run(p, "IAG", 0.01, x0=np.ones(3), stop=StoppingRule(0.0, 2500))
        assert len(tr) == 2501 and not tr.converged and tr.final_k == 2500

    def test_divergence(self):
        p = make_quadratic_sum(0, 3, 3, 1.0, 5.0)
        with pytest.raises(DivergenceError) as info:
            run(p, "GD", 10.0, x0=np.ones(3), stop=StoppingRule(0.0, 10_000))
        assert info.value.last_finite_k >= 0

    def test_bad_arguments(self):
        p = make_quadratic_sum(0, 3, 3, 1.0, 5.0)
        with pytest.raises(ValueError):
            run(p, "SGD", 0.1)
        with pytest.raises(ValueError):
            run(p, "IAG", -0.1)
        with pytest.raises(ValueError):
            run(p, "IAG", 0.1, beta=0.2)

    @pytest.mark.parametrize("method", ["IAG", "IAG-M"])
    def test_error_bounds_hold(self, method):
        p = make_quadratic_sum(9, 4, 5, 1.0, 10.0)
        K = 3
        gamma = theory.gamma_star(p.mu, p.L, K)
        beta = 0.05 if method == "IAG-M" else 0.0
        tr = run(p, method, gamma, beta, x0=np.ones(5), stop=StoppingRule(1e-10, 3000))
        assert np.all(tr.err_norm <= tr.simple_bound_rhs + 1e-9)
        assert np.all(tr.err_norm <= tr.err_bound_rhs + 1e-9)
        assert tr.err_norm[0] == 0.0
        assert tr.max_table_drift <= 1e-12

    def test_monitors_match_scalar_reference(self):
        p = make_quadratic_sum(11, 3, 4, 1.0, 10.0)
        gamma = 0.02
        tr = run(p, "IAG-M", gamma, 0.1, x0=np.ones(4), stop=StoppingRule(0.0, 1500))
        for k in (0, 1, 2, 5, 1023, 1024, 1025, 1500):
            assert tr.err_bound_rhs[k] == pytest.approx(
                theory.iagm_error_bound_rhs(tr, k, gamma, 0.1, p.L, 2), rel=1e-14, abs=0)
            assert tr.simple_bound_rhs[k] == pytest.approx(theory.simple_error_bound_rhs(tr, k, p.L, 2), rel=1e-14)

    def test_ig_columns(self):
        p = scalar_problem([0.0, 2.0])
        tr = run(p, "IG", 0.1, x0=np.zeros(1), stop=StoppingRule(0.0, 4))
        assert tr.dist[1] == pytest.approx(1.0) and tr.dist[2] == pytest.approx(0.8)
        assert np.all(np.isnan(tr.err_norm)) and np.all(np.isnan(tr.thm1_bound))

    def test_igm_zero_beta_is_ig(self):
        p = make_quadratic_sum(2, 3, 3, 1.0, 5.0)
        a = run(p, "IG", 0.01, x0=np.ones(3), stop=StoppingRule(0.0, 300))
        b = run(p, "IG-M", 0.01, 0.0, x0=np.ones(3), stop=StoppingRule(0.0, 300))
        assert np.array_equal(a.x_final, b.x_final)

    def test_csv_deterministic(self, tmp_path):
        p = make_quadratic_sum(5, 3, 4, 1.0, 10.0)
        gamma = theory.gamma_star(p.mu, p.L, 2)
        paths = []
        for j in range(2):
            tr = run(p, "IAG", gamma, x0=np.ones(4), stop=StoppingRule(0.0, 1200))
            paths.append(tmp_path / f"t{j}.csv")
            tr.write_csv(paths[-1])
        assert paths[0].read_bytes() == paths[1].read_bytes()
        rows = list(csv.reader(paths[0].open()))
        assert rows[0] == ["k", "dist", "cost_gap", "agg_grad_norm", "err_norm", "err_bound_rhs", "thm1_bound"]
        ks = [int(r[0]) for r in rows[1:]]
        assert ks[:1001] == list(range(1001)) and ks[-1] == 1200 and 1005 not in ks and 1010 in ks
