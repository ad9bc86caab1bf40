"""The certification suite: every acceptance criterion as a runnable function.

Each ``criterion_*`` returns a :class:`CriterionResult`. Runs shared between
criteria are computed once per process.
"""
from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import theory
from .harness import gradcheck_problem
from .problems import make_logistic_l2, make_quadratic_sum, synthetic_logistic_data, worst_case_quadratic
from .solvers import (StoppingRule, adversarial_schedule, cyclic_schedule, full_schedule, gd_step, iag_step,
                      iagm_step, init_state, run)

THM1_ITERS = 10_000
THM1_BUDGET_S = 10.0
SUITE_BUDGET_S = 60.0


@dataclass
class CriterionResult:
    number: int
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.number:>2}. {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(number, name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper():
            t0 = time.perf_counter()
            ok, detail = fn()
            return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t0)
        return wrapper
    return deco


# --------------------------------------------------------------------------
# shared runs

THM1_GRID = [(n, m, Q) for n in (5, 20) for m in (3, 10) for Q in (5.0, 50.0)]


def thm1_problems():
    """20 seeded quadratic sums cycling over ``n in {5, 20}``, ``m in {3, 10}``, ``Q in {5, 50}``."""
    out = []
    for seed in range(20):
        n, m, Q = THM1_GRID[seed % len(THM1_GRID)]
        out.append(make_quadratic_sum(seed, m, n, 1.0, Q))
    return out


@functools.lru_cache(maxsize=None)
def thm1_runs():
    """Cyclic IAG at ``gamma_star`` on the 20 problems; returns (problem, cert, trace, seconds)."""
    runs = []
    for seed, p in enumerate(thm1_problems()):
        K = p.m - 1
        cert = theory.certificate(p.mu, p.L, K)
        x0 = np.random.default_rng(1000 + seed).standard_normal(p.n)
        t0 = time.perf_counter()
        tr = run(p, "IAG", cert.gamma_star, schedule=cyclic_schedule(p.m), x0=x0,
                 stop=StoppingRule(1e-10, THM1_ITERS))
        runs.append((p, cert, tr, time.perf_counter() - t0))
    return tuple(runs)


@functools.lru_cache(maxsize=None)
def adversarial_runs():
    """IAG at ``gamma_star`` under stale-as-possible schedules with ``K > m - 1``."""
    runs = []
    for seed, (m, K) in enumerate([(3, 4), (3, 6), (4, 5), (2, 3)]):
        p = make_quadratic_sum(200 + seed, m, 6, 1.0, 3.0)
        cert = theory.certificate(p.mu, p.L, K)
        x0 = np.random.default_rng(300 + seed).standard_normal(p.n)
        tr = run(p, "IAG", cert.gamma_star, schedule=adversarial_schedule(m, K, seed), x0=x0,
                 stop=StoppingRule(1e-10, 5000))
        runs.append((p, cert, tr))
    return tuple(runs)


@functools.lru_cache(maxsize=None)
def iag_vs_ig_runs():
    """IAG and IG at the same ``gamma_star`` on quadratic sums with ``m = 5``."""
    out = []
    for seed in range(3):
        p = make_quadratic_sum(500 + seed, 5, 5, 1.0, 2.0)
        cert = theory.certificate(p.mu, p.L, p.m - 1)
        x0 = np.random.default_rng(600 + seed).standard_normal(p.n)
        iag = run(p, "IAG", cert.gamma_star, x0=x0, stop=StoppingRule(1e-10, 200_000))
        # IG touches one component per iteration; give it m times the IAG budget
        ig = run(p, "IG", cert.gamma_star, x0=x0, stop=StoppingRule(0.0, p.m * iag.final_k))
        out.append((p, cert, iag, ig))
    return tuple(out)


# --------------------------------------------------------------------------
# criteria

@_timed(1, "rate bound on distance")
def criterion_1():
    runs = thm1_runs()
    dist_only = []
    for p, cert, tr, _ in runs:
        rate_k = cert.per_step_bound ** tr.k.astype(float)
        n = int(np.sum(tr.dist > rate_k * tr.dist[0] * (1 + theory.BOUND_SLACK)))
        if n:
            dist_only.append((p.name, n))
    secs = sum(r[3] for r in runs)
    ok = not dist_only and secs <= THM1_BUDGET_S and all(len(r[2]) > 1 for r in runs)
    return ok, (f"{len(runs)} runs, {sum(len(r[2]) for r in runs)} iterates, "
                f"violations={len(dist_only)}, run time {secs:.2f}s (budget {THM1_BUDGET_S:.0f}s)")


@_timed(2, "rate bound on cost gap")
def criterion_2():
    bad = []
    for p, cert, tr, _ in thm1_runs():
        rate_k = cert.per_step_bound ** tr.k.astype(float)
        lim = 0.5 * cert.L * rate_k ** 2 * tr.dist[0] ** 2 * (1 + theory.BOUND_SLACK)
        n = int(np.sum(tr.cost_gap > lim))
        if n:
            bad.append((p.name, n))
    return not bad, f"20 runs, violating runs={bad or 0}"


@_timed(3, "GD contraction at 2/(mu+L)")
def criterion_3():
    worst = {}
    for Q in (2.0, 10.0, 100.0):
        p = worst_case_quadratic(1.0, Q, n=3)
        rate, step = theory.gd_certificate(p.mu, p.L)
        tr = run(p, "GD", step, x0=np.ones(p.n), stop=StoppingRule(1e-12, 20_000))
        chk = theory.gd_contraction_check(tr)
        ratios = tr.dist[1:] / tr.dist[:-1]
        worst[Q] = (chk.ok, float(ratios.max() - rate))
    ok = all(v[0] for v in worst.values())
    return ok, ", ".join(f"Q={Q:g}: max(ratio - rate)={v[1]:.2e}" for Q, v in worst.items())


@_timed(4, "gradient-error bound on IAG runs")
def criterion_4():
    traces = [r[2] for r in thm1_runs()] + [r[2] for r in adversarial_runs()] + [r[2] for r in iag_vs_ig_runs()]
    bad = [i for i, tr in enumerate(traces) if not theory.error_bound_check(tr).ok]
    worst = max(float(np.max(tr.err_norm - tr.err_bound_rhs)) for tr in traces)
    return not bad, f"{len(traces)} runs, violating runs={len(bad)}, max(err - rhs)={worst:.3e}"


@_timed(5, "momentum error bound and convergence")
def criterion_5():
    bad, dists = [], []
    for seed, Q in ((700, 2.0), (701, 5.0)):
        p = make_quadratic_sum(seed, 3, 5, 1.0, Q)
        K = p.m - 1
        gs = theory.gamma_star(p.mu, p.L, K)
        x0 = np.random.default_rng(seed).standard_normal(p.n)
        for frac in (0.0, 0.05, 0.2):
            beta = frac * math.sqrt(gs)
            tr = run(p, "IAG-M", gs, beta, cyclic_schedule(p.m), x0, StoppingRule(1e-11, 200_000))
            chk = theory.error_bound_check(tr)
            dists.append(float(tr.dist[-1]))
            if not chk.ok or tr.dist[-1] > 1e-8:
                bad.append((seed, frac, chk.first_violation_k, float(tr.dist[-1])))
    return not bad, f"{len(dists)} runs, max final dist={max(dists):.2e}, failures={bad or 0}"


@_timed(6, "perturbed contraction lemma")
def criterion_6():
    rng = np.random.default_rng(6)
    failures = 0
    for _ in range(100):
        s = rng.uniform(0.05, 0.999)
        p = s * rng.uniform()
        q = s - p
        d_max = int(rng.integers(0, 11))
        V = tight_lemma1_sequence(p, q, d_max, 500, v0=rng.uniform(0.5, 2.0))
        res = theory.lemma1_check(V, p, q, d_max)
        failures += not res.ok
    return failures == 0, f"100 trials, 501 terms each, failures={failures}"


def tight_lemma1_sequence(p, q, d, steps, v0=1.0):
    """``V_{k+1} = p V_k + q max_{(k-d)_+ <= l <= k} V_l`` with equality."""
    V = [v0]
    for k in range(steps):
        V.append(p * V[k] + q * max(V[max(k - d, 0):k + 1]))
    return np.array(V)


def _rel_gap(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@_timed(7, "reduction identities")
def criterion_7():
    worst_gd, worst_m = 0.0, 0.0
    for seed in range(5):
        p = make_quadratic_sum(800 + seed, 3 + seed % 3, 6, 1.0, 10.0)
        x0 = np.random.default_rng(900 + seed).standard_normal(p.n)
        gamma = 1.0 / p.L
        a, b = init_state(p, x0, 0), init_state(p, x0, 0)
        full = full_schedule(p.m)
        for _ in range(1000):
            iag_step(a, p, gamma, full)
            gd_step(b, p, gamma)
            worst_gd = max(worst_gd, _rel_gap(a.x, b.x))
        gs = theory.gamma_star(p.mu, p.L, p.m - 1)
        cyc = cyclic_schedule(p.m)
        a, b = init_state(p, x0, p.m - 1), init_state(p, x0, p.m - 1)
        for _ in range(1000):
            iag_step(a, p, gs, cyc)
            iagm_step(b, p, gs, 0.0, cyc)
            worst_m = max(worst_m, _rel_gap(b.x, a.x))
    ok = worst_gd <= 1e-12 and worst_m <= 1e-12
    return ok, f"max rel gap IAG(K=0) vs GD={worst_gd:.2e}, IAG-M(beta=0) vs IAG={worst_m:.2e}"


@_timed(8, "IAG converges where IG stalls")
def criterion_8():
    parts, ok = [], True
    for p, cert, iag, ig in iag_vs_ig_runs():
        d_iag, d_ig = float(iag.dist[-1]), float(ig.dist[-1])
        good = d_iag <= 1e-8 and d_ig >= 10 * d_iag
        ok &= good
        parts.append(f"IAG {d_iag:.1e} vs IG {d_ig:.1e}")
    return ok, "; ".join(parts)


@_timed(9, "certificate arithmetic")
def criterion_9():
    errs = []
    if theory.c_K(1) != Fraction(2, 75):
        errs.append("c_1")
    if theory.c_K(2) != Fraction(1, 125):
        errs.append("c_2")
    if theory.gamma_bar(1, 1, 1) != Fraction(4, 25):
        errs.append("gamma_bar(1,1,1)")
    if theory.quadratic_threshold(Fraction(1), Fraction(3), 2) != Fraction(25, 24) * theory.gamma_bar(Fraction(1), Fraction(3), 2):
        errs.append("25/24 threshold")
    g = theory.gamma_star(1, 1, 1)
    if theory.p_of(g, 1, 1) != Fraction(23, 25):
        errs.append("p at gamma_star(1,1,1)")
    if theory.q_of(g, 1, 1) != Fraction(15144, 390625):
        errs.append("q at gamma_star(1,1,1)")
    checked = 0
    for mu in (0.1, 1.0, 3.0):
        for Q in (1.0, 2.0, 10.0, 100.0, 1e4):
            L = Q * mu
            for K in (1, 2, 3, 5, 10, 50):
                gb = theory.gamma_bar(mu, L, K)
                for frac in np.linspace(0.001, 0.999, 25):
                    g = frac * gb
                    x = g * g * L * L * K
                    if not (x <= 1 / (9 * K * (Q + 1) ** 2) * (1 + 1e-12) and x <= 1 / 36):
                        errs.append(f"gamma^2 L^2 K bound at mu={mu}, Q={Q}, K={K}")
                    if not theory.q_of(g, L, K) <= 6.25 * x * (1 + 1e-12):
                        errs.append(f"q bound at mu={mu}, Q={Q}, K={K}")
                    if not theory.s_of(g, mu, L, K) < 1:
                        errs.append(f"s < 1 at mu={mu}, Q={Q}, K={K}")
                    checked += 1
                cert = theory.certificate(mu, L, K)
                if not cert.s <= 1 - 4 / (25 * K * (Q + 1) ** 2) + 1e-15:
                    errs.append(f"s(gamma_star) at mu={mu}, Q={Q}, K={K}")
                if not cert.r_star <= cert.per_step_bound + 1e-15:
                    errs.append(f"r_star at mu={mu}, Q={Q}, K={K}")
    head = "exact constants ok" if not errs else "constant mismatch"
    return not errs, f"{head}, {checked} grid points, errors={errs[:3] or 0}"


@_timed(10, "gradient oracles")
def criterion_10():
    A, y = synthetic_logistic_data(10, 40, 6)
    probs = [make_quadratic_sum(10, 4, 8, 1.0, 20.0), worst_case_quadratic(1.0, 10.0, m=2, n=4),
             make_logistic_l2(A, y, 0.5, 4)]
    reps = [gradcheck_problem(p, seed=i) for i, p in enumerate(probs)]
    worst = max(r["max_error"] for r in reps)
    return all(r["pass"] for r in reps), f"{len(probs)} problem kinds, max relative error={worst:.2e}"


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10)


def run_suite(echo=print) -> tuple[list[CriterionResult], float]:
    t0 = time.perf_counter()
    results = []
    for crit in CRITERIA:
        res = crit()
        results.append(res)
        if echo:
            echo(res.line())
    total = time.perf_counter() - t0
    if echo:
        echo(f"[{'PASS' if total <= SUITE_BUDGET_S else 'FAIL'}] suite wall time {total:.1f}s "
             f"(budget {SUITE_BUDGET_S:.0f}s)")
    return results, total
