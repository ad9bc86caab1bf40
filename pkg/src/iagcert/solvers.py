"""Incremental aggregated gradient (IAG), its momentum variant and baselines.

Component indices are 0-based. Iterations are counted from ``k = 0`` and a
schedule's ``refresh(k)`` for ``k >= 1`` names the components re-evaluated at
the new iterate ``x^k``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import theory
from .problems import Problem, full_gradient

METHODS = ("IAG", "IAG-M", "IG", "IG-M", "GD")
DIVERGENCE_NORM = 1e12
_CHUNK = 1024
TRACE_COLUMNS = ("k", "dist", "cost_gap", "agg_grad_norm", "err_norm", "err_bound_rhs", "thm1_bound")


class DivergenceError(RuntimeError):
    def __init__(self, last_finite_k: int, reason: str):
        super().__init__(f"iterates diverged after k={last_finite_k}: {reason}")
        self.last_finite_k = last_finite_k


def _norm(v: np.ndarray) -> float:
    return math.sqrt(v.dot(v))


# --------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class Schedule:
    """Periodic refresh pattern: step ``k >= 1`` refreshes ``pattern[(k - 1) % period]``."""

    m: int
    K: int
    pattern: tuple[tuple[int, ...], ...]
    name: str = "custom"

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("schedule pattern is empty")
        for s in self.pattern:
            if not s:
                raise ValueError("every refresh set must be nonempty")
            if any(not 0 <= i < self.m for i in s):
                raise ValueError(f"refresh set {s} has indices outside 0..{self.m - 1}")

    def refresh(self, k: int) -> tuple[int, ...]:
        if k < 1:
            raise ValueError("refresh sets are defined for k >= 1")
        return self.pattern[(k - 1) % len(self.pattern)]


def cyclic_schedule(m: int) -> Schedule:
    """Deterministic cyclic order: step ``k`` refreshes ``(k - 1) mod m``; ``K = m - 1``."""
    if m < 1:
        raise ValueError("m must be positive")
    return Schedule(m=m, K=m - 1, pattern=tuple((i,) for i in range(m)), name="cyclic")


def full_schedule(m: int) -> Schedule:
    """Refresh every component at every step (``K = 0``); IAG is then plain GD."""
    return Schedule(m=m, K=0, pattern=(tuple(range(m)),), name="full")


def adversarial_schedule(m: int, K: int, seed: int, multi: bool = False) -> Schedule:
    """Period-``K+1`` schedule that keeps components as stale as the delay bound allows.

    A seeded permutation fixes the order. The first component of the
    permutation absorbs the spare slots at the start of each period and every
    other component is refreshed exactly once per period. For all but one
    component the refresh interval is then exactly ``K + 1`` steps. With
    ``K < m - 1`` singleton sets cannot cover every component, so the
    components are grouped into multi-index sets when ``multi`` is true;
    otherwise the call is rejected.
    """
    if m < 1 or K < 0:
        raise ValueError("need m >= 1 and K >= 0")
    perm = [int(i) for i in np.random.default_rng(seed).permutation(m)]
    period = K + 1
    if K < m - 1:
        if not multi:
            raise ValueError(f"K={K} < m-1={m - 1}: singleton refresh sets cannot meet the delay bound")
        groups = [tuple(sorted(perm[j::period])) for j in range(period)]
        return Schedule(m=m, K=K, pattern=tuple(groups), name=f"adversarial(K={K},seed={seed})")
    spare = period - m
    pattern = [(perm[0],)] * (spare + 1) + [(i,) for i in perm[1:]]
    return Schedule(m=m, K=K, pattern=tuple(pattern), name=f"adversarial(K={K},seed={seed})")


class ScheduleViolation(NamedTuple):
    k: int
    i: int


def validate_schedule(schedule, horizon: int) -> ScheduleViolation | None:
    """Simulate sample times from ``tau_i^0 = 0`` and return the first ``(k, i)``
    with ``tau_i^k < k - K``, or ``None`` if the delay bound holds up to ``horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    tau = [0] * schedule.m
    for k in range(1, horizon + 1):
        for i in schedule.refresh(k):
            tau[i] = k
        for i, t in enumerate(tau):
            if t < k - schedule.K:
                return ScheduleViolation(k, i)
    return None


# --------------------------------------------------------------------------
# state

@dataclass
class GradientTable:
    stored_grads: np.ndarray
    sample_times: np.ndarray
    aggregate: np.ndarray
    k: int = 0

    def refresh(self, i: int, grad: np.ndarray, k: int) -> None:
        self.aggregate += grad - self.stored_grads[i]
        self.stored_grads[i] = grad
        self.sample_times[i] = k

    def drift(self) -> float:
        """Relative gap between the maintained aggregate and a fresh sum."""
        agg = self.aggregate
        return _norm(self.stored_grads.sum(axis=0) - agg) / (1.0 + _norm(agg))


@dataclass
class SolverState:
    x: np.ndarray
    x_prev: np.ndarray
    table: GradientTable
    k: int = 0


def init_state(problem: Problem, x0, K: int = 0) -> SolverState:
    """Fresh table at ``x0``; all sample times 0 and ``x^{-1} = x^0``, so ``e^0 = 0``."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    x0 = problem._check_dim(x0).copy()
    grads = problem.component_gradients(x0).copy()
    agg = np.zeros(problem.n)
    for gi in grads:
        agg += gi
    table = GradientTable(stored_grads=grads, sample_times=np.zeros(problem.m, dtype=np.int64),
                          aggregate=agg, k=0)
    return SolverState(x=x0, x_prev=x0.copy(), table=table, k=0)


def _refresh(state: SolverState, problem: Problem, schedule) -> None:
    k = state.k
    idx = schedule.refresh(k)
    if not idx:
        raise ValueError(f"empty refresh set at k={k}")
    if len(idx) == 1:
        i = idx[0]
        state.table.refresh(i, problem.components[i].gradient(state.x), k)
    else:
        grads = problem.component_gradients(state.x)
        for i in idx:
            state.table.refresh(i, grads[i], k)
    state.table.k = k


def iag_step(state: SolverState, problem: Problem, gamma: float, schedule) -> SolverState:
    """``x^{k+1} = x^k - gamma g^k``, then refresh ``refresh(k+1)`` at ``x^{k+1}``.

    Mutates and returns ``state``.
    """
    x_new = state.x - gamma * state.table.aggregate
    state.x_prev = state.x
    state.x = x_new
    state.k += 1
    _refresh(state, problem, schedule)
    return state


def iagm_step(state: SolverState, problem: Problem, gamma: float, beta: float, schedule) -> SolverState:
    """IAG plus heavy-ball term ``beta (x^k - x^{k-1})``."""
    x_new = (state.x - gamma * state.table.aggregate) + beta * (state.x - state.x_prev)
    state.x_prev = state.x
    state.x = x_new
    state.k += 1
    _refresh(state, problem, schedule)
    return state


def gd_step(state: SolverState, problem: Problem, gamma: float) -> SolverState:
    """Plain gradient descent; the table is rebuilt from scratch at the new point."""
    x_new = state.x - gamma * full_gradient(problem, state.x)
    state.x_prev = state.x
    state.x = x_new
    state.k += 1
    t = state.table
    t.stored_grads = problem.component_gradients(x_new).copy()
    t.sample_times[:] = state.k
    t.aggregate = full_gradient(problem, x_new)
    t.k = state.k
    return state


def _component(problem: Problem, i: int):
    if not 0 <= i < problem.m:
        raise IndexError(f"component index {i} outside 0..{problem.m - 1}")
    return problem.components[i]


def ig_step(x: np.ndarray, problem: Problem, gamma: float, i: int) -> np.ndarray:
    return x - gamma * _component(problem, i).gradient(x)


def igm_step(x: np.ndarray, x_prev_outer: np.ndarray, problem: Problem, gamma: float,
             beta: float, i: int, x_outer: np.ndarray | None = None) -> np.ndarray:
    """Inner IG step with momentum ``beta (x_outer^k - x_outer^{k-1})``.

    The momentum difference is taken between the last two cycle-boundary
    iterates and is the same for every inner step of a cycle. ``x_outer``
    defaults to ``x`` (the first inner step of a cycle).
    """
    if x_outer is None:
        x_outer = x
    return (x - gamma * _component(problem, i).gradient(x)) + beta * (x_outer - x_prev_outer)


def gradient_error(state: SolverState, problem: Problem) -> np.ndarray:
    """``e^k = g^k - grad f(x^k)``."""
    return state.table.aggregate - full_gradient(problem, state.x)


# --------------------------------------------------------------------------
# driver

@dataclass(frozen=True)
class StoppingRule:
    tolerance: float = 1e-10
    max_iters: int = 1_000_000


@dataclass
class Trace:
    """Per-iteration record of one run; column arrays indexed by ``k``."""

    method: str
    gamma: float
    beta: float
    K: int
    L: float
    mu: float
    k: np.ndarray
    dist: np.ndarray
    cost_gap: np.ndarray
    agg_grad_norm: np.ndarray
    err_norm: np.ndarray
    err_bound_rhs: np.ndarray
    thm1_bound: np.ndarray
    simple_bound_rhs: np.ndarray
    max_table_drift: float = 0.0
    converged: bool = False
    schedule_violation: ScheduleViolation | None = None
    x_final: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.k)

    @property
    def final_k(self) -> int:
        return int(self.k[-1])

    def rows(self, downsample: bool = True):
        for j in range(len(self.k)):
            kk = int(self.k[j])
            if downsample and kk > 1000 and kk % 10 and j != len(self.k) - 1:
                continue
            yield (kk, self.dist[j], self.cost_gap[j], self.agg_grad_norm[j], self.err_norm[j],
                   self.err_bound_rhs[j], self.thm1_bound[j])

    def write_csv(self, path, downsample: bool = True, method_column: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            write_trace_rows(csv.writer(fh), [self], downsample, method_column)


def write_trace_rows(writer, traces, downsample=True, method_column=False):
    header = (("method",) if method_column else ()) + TRACE_COLUMNS
    writer.writerow(header)
    for tr in traces:
        for row in tr.rows(downsample):
            cells = [str(row[0])] + [repr(float(v)) for v in row[1:]]
            writer.writerow(([tr.method] if method_column else []) + cells)


def run(problem: Problem, method: str, gamma: float, beta: float = 0.0, schedule=None,
        x0=None, stop: StoppingRule = StoppingRule()) -> Trace:
    """Run one method and record the monitors at every iteration.

    IAG, IAG-M and GD stop once ``||g^k|| <= stop.tolerance``. IG and IG-M have
    no aggregate gradient; they run to ``stop.max_iters`` and report NaN in
    the gradient columns. One IG iteration is one component step, with
    components visited in cyclic order.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    if beta and method not in ("IAG-M", "IG-M"):
        raise ValueError(f"beta is only meaningful for momentum methods, not {method}")
    if x0 is None:
        x0 = np.zeros(problem.n)
    if method == "GD":
        schedule = full_schedule(problem.m)
    elif method in ("IG", "IG-M"):
        schedule = cyclic_schedule(problem.m)
    elif schedule is None:
        schedule = cyclic_schedule(problem.m)
    if schedule.m != problem.m:
        raise ValueError(f"schedule is for m={schedule.m}, problem has m={problem.m}")
    K = schedule.K
    L, mu = problem.L, problem.mu

    if method in ("IAG", "IAG-M") and K >= 1:
        rate = theory.per_step_bound(mu, L, K) if method == "IAG" else math.nan
    elif method in ("IAG", "GD"):
        rate = theory.gd_certificate(mu, L)[0]
    else:
        rate = math.nan

    incremental = method in ("IG", "IG-M")
    state = init_state(problem, x0, K)
    x_outer = x_outer_prev = state.x
    # iterates and aggregates are buffered and the monitors evaluated per chunk
    xbuf = np.empty((_CHUNK, problem.n))
    gbuf = np.empty((_CHUNK, problem.n))
    filled = 0
    dist_parts, gap_parts, err_parts, gnorms = [], [], [], []
    drift = 0.0

    def flush():
        nonlocal filled, drift
        if not filled:
            return
        X = xbuf[:filled]
        D = X - problem.x_star
        dist_parts.append(np.sqrt(np.einsum("ij,ij->i", D, D)))
        gap_parts.append(problem.cost_gaps(X))
        if not incremental:
            E = gbuf[:filled] - problem.full_gradients(X)
            err_parts.append(np.sqrt(np.einsum("ij,ij->i", E, E)))
            drift = max(drift, state.table.drift())
        filled = 0

    converged = False
    k = 0
    while True:
        xbuf[filled] = state.x
        if incremental:
            gnorm = math.inf
        else:
            agg = state.table.aggregate
            gbuf[filled] = agg
            gnorm = _norm(agg)
            if not math.isfinite(gnorm):
                raise DivergenceError(k - 1, "nonfinite aggregate gradient")
            gnorms.append(gnorm)
        filled += 1
        if filled == _CHUNK:
            flush()
        if gnorm <= stop.tolerance:
            converged = True
            break
        if k >= stop.max_iters:
            break

        if method == "GD":
            gd_step(state, problem, gamma)
        elif method == "IAG":
            iag_step(state, problem, gamma, schedule)
        elif method == "IAG-M":
            iagm_step(state, problem, gamma, beta, schedule)
        else:
            i = k % problem.m
            if i == 0:
                x_outer_prev, x_outer = x_outer, state.x
            if method == "IG":
                state.x = ig_step(state.x, problem, gamma, i)
            else:
                state.x = igm_step(state.x, x_outer_prev, problem, gamma, beta, i, x_outer=x_outer)
            state.k += 1
        k += 1
        xn = _norm(state.x)
        if not math.isfinite(xn):
            raise DivergenceError(k - 1, "nonfinite iterate")
        if xn > DIVERGENCE_NORM:
            raise DivergenceError(k - 1, f"||x|| = {xn:.3e} exceeds {DIVERGENCE_NORM:.0e}")
    flush()

    ks = np.arange(k + 1, dtype=np.int64)
    dist = np.concatenate(dist_parts)
    nan = np.full(k + 1, math.nan)
    if incremental:
        gn = err = rhs = simple = nan
    else:
        gn = np.asarray(gnorms)
        err = np.concatenate(err_parts)
        if method == "IAG-M":
            rhs = theory.iagm_error_bound_rhs_all(dist, gamma, beta, L, K)
        else:
            rhs = theory.iag_error_bound_rhs_all(dist, gamma, L, K)
        simple = theory.simple_error_bound_rhs_all(dist, L, K)
    violation = None if incremental else validate_schedule(schedule, max(k, 1))
    return Trace(method=method, gamma=float(gamma), beta=float(beta), K=K, L=L, mu=mu, k=ks, dist=dist,
                 cost_gap=np.concatenate(gap_parts), agg_grad_norm=gn, err_norm=err, err_bound_rhs=rhs,
                 thm1_bound=nan if math.isnan(rate) else dist[0] * rate ** ks.astype(np.float64), simple_bound_rhs=simple,
                 max_table_drift=drift, converged=converged, schedule_violation=violation,
                 x_final=state.x.copy())
