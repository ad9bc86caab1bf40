"""Closed-form stepsize/rate constants for IAG and checks of its inequalities on traces.

Formula helpers accept ints and ``Fraction`` as well as floats and stay exact
when every input is rational, so the constants can be checked as exact
rationals.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

A_CONST = Fraction(8, 25)
BOUND_SLACK = 1e-9
ERROR_BOUND_ATOL = 1e-9
GD_RATIO_ATOL = 1e-10


def _exact(*vals) -> bool:
    return all(isinstance(v, Rational) for v in vals)


def gamma_bar(mu, L, K):
    """Stepsize threshold ``(a mu / (K L)) / (mu + L)`` with ``a = 8/25``."""
    a = A_CONST if _exact(mu, L, K) else float(A_CONST)
    return (a * mu / (K * L)) / (mu + L)


def gamma_star(mu, L, K):
    return gamma_bar(mu, L, K) / 2


def c_K(K):
    """``(2/25) / (K (2K + 1))``, exact for integer ``K``."""
    return Fraction(2, 25) / (K * (2 * K + 1))


def per_step_bound(mu, L, K):
    """Certified contraction ``1 - c_K / (Q + 1)^2`` of ``dist_k`` at ``gamma_star``."""
    if _exact(mu, L, K):
        Q = Fraction(L) / Fraction(mu)
        return 1 - c_K(K) / (Q + 1) ** 2
    Q = L / mu
    return 1.0 - float(c_K(K)) / (Q + 1.0) ** 2


def p_of(gamma, mu, L):
    return 1 - 2 * gamma * mu * L / (mu + L)


def q_of(gamma, L, K):
    return 9 * gamma ** 4 * L ** 4 * K ** 2 + 6 * gamma ** 2 * L ** 2 * K


def s_of(gamma, mu, L, K):
    return p_of(gamma, mu, L) + q_of(gamma, L, K)


def quadratic_threshold(mu, L, K):
    """Largest stepsize keeping ``p + 6 gamma^2 L^2 K < 1`` (the quartic term dropped)."""
    if _exact(mu, L, K):
        mu = Fraction(mu)
    return (mu / (3 * L * K)) / (mu + L)


@dataclass(frozen=True)
class RateCertificate:
    mu: float
    L: float
    Q: float
    K: int
    gamma: float
    gamma_bar: float
    gamma_star: float
    c_K: float
    per_step_bound: float
    p: float
    q: float
    s: float
    rho: float
    r_star: float
    guaranteed: bool
    s_below_one: bool

    @property
    def message(self) -> str:
        if self.guaranteed:
            return "linear convergence guaranteed"
        return "linear convergence not guaranteed"

    def to_dict(self) -> dict:
        d = {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
             for k, v in asdict(self).items()}
        d["message"] = self.message
        return d


def certificate(mu: float, L: float, K: int, gamma: float | None = None) -> RateCertificate:
    """All constants of the IAG rate theorem for delay bound ``K >= 1`` at ``gamma``.

    ``gamma`` defaults to ``gamma_star``. ``rho = s^(1/(2K+1))`` is the rate of
    ``dist_k^2`` delivered by the perturbed-contraction lemma when ``s < 1``,
    and NaN otherwise.
    """
    if not (mu > 0 and L > 0 and K > 0):
        raise ValueError(f"need mu, L, K positive, got mu={mu}, L={L}, K={K}")
    if L < mu:
        raise ValueError(f"need L >= mu, got mu={mu}, L={L}")
    if K != int(K):
        raise ValueError(f"K must be an integer, got {K}")
    K = int(K)
    mu, L = float(mu), float(L)
    gb = gamma_bar(mu, L, K)
    gs = gb / 2
    g = gs if gamma is None else float(gamma)
    if not g > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    p, q = p_of(g, mu, L), q_of(g, L, K)
    s = p + q
    rho = s ** (1.0 / (2 * K + 1)) if 0 <= s < 1 else math.nan
    return RateCertificate(mu=mu, L=L, Q=L / mu, K=K, gamma=g, gamma_bar=gb, gamma_star=gs,
                           c_K=float(c_K(K)), per_step_bound=per_step_bound(mu, L, K),
                           p=p, q=q, s=s, rho=rho, r_star=math.sqrt(rho) if rho == rho else math.nan,
                           guaranteed=g < gb, s_below_one=s < 1)


def gd_certificate(mu: float, L: float) -> tuple[float, float]:
    """``((Q - 1) / (Q + 1), 2 / (mu + L))``: GD rate of ``dist_k`` and its stepsize."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if L < mu:
        raise ValueError(f"need L >= mu, got mu={mu}, L={L}")
    Q = L / mu
    return (Q - 1) / (Q + 1), 2 / (mu + L)


# --------------------------------------------------------------------------
# perturbed linear contraction

def lemma1_rate(p: float, q: float, d_max: int) -> float:
    if p < 0 or q < 0 or d_max < 0:
        raise ValueError("p, q and d_max must be nonnegative")
    if p + q >= 1:
        raise ValueError(f"p + q = {p + q} >= 1: the contraction lemma does not apply")
    return (p + q) ** (1.0 / (1 + d_max))


@dataclass(frozen=True)
class Lemma1Result:
    hypothesis_violation_k: int | None
    conclusion_violation_k: int | None

    @property
    def ok(self) -> bool:
        return self.hypothesis_violation_k is None and self.conclusion_violation_k is None


def lemma1_check(V, p: float, q: float, d, d_max: int | None = None) -> Lemma1Result:
    """Check ``V_{k+1} <= p V_k + q max_{(k-d(k))_+ <= l <= k} V_l`` and ``V_k <= r^k V_0``.

    ``d`` is an integer delay or a callable ``k -> d(k)``. ``d_max`` defaults to
    the integer ``d`` and is required for callables. The conclusion is only
    reported for sequences that satisfy the hypothesis.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.size < 2:
        raise ValueError("need at least two terms")
    if callable(d):
        if d_max is None:
            raise ValueError("d_max is required when d is a function")
        delay = d
    else:
        d_max = int(d) if d_max is None else d_max
        delay = lambda k: int(d)  # noqa: E731
    hyp = None
    for k in range(V.size - 1):
        lo = max(k - delay(k), 0)
        rhs = p * V[k] + q * V[lo:k + 1].max()
        if V[k + 1] > rhs * (1 + BOUND_SLACK):
            hyp = k
            break
    if hyp is not None:
        return Lemma1Result(hyp, None)
    r = lemma1_rate(p, q, d_max)
    ks = np.arange(V.size)
    bound = r ** ks * V[0] * (1 + BOUND_SLACK)
    bad = np.nonzero(V > bound)[0]
    return Lemma1Result(None, int(bad[0]) if bad.size else None)


# --------------------------------------------------------------------------
# gradient-error monitors

def _dist_seq(trace_or_dist):
    return getattr(trace_or_dist, "dist", trace_or_dist)


def _window_max(dist, lo: int, hi: int) -> float:
    """max of ``dist_l`` for ``lo <= l <= hi``; negative ``l`` reads ``dist_0``."""
    if hi >= len(dist):
        raise IndexError(f"window up to {hi} needs {hi + 1} recorded distances, have {len(dist)}")
    lo = max(lo, 0)
    if hi < lo:
        return float(dist[0])
    return float(max(dist[lo:hi + 1]))


def iag_error_bound_rhs(trace, k: int, gamma: float, L: float, K: int) -> float:
    """``3 gamma L^2 K max_{(k-2K)_+ <= l <= k-1} dist_l``; zero at ``k = 0``."""
    if k == 0 or K == 0:
        return 0.0
    return 3 * gamma * L * L * K * _window_max(_dist_seq(trace), k - 2 * K, k - 1)


def iagm_error_bound_rhs(trace, k: int, gamma: float, beta: float, L: float, K: int) -> float:
    """Momentum analogue with window ``(k-2K-1)_+ .. k-1``."""
    if k == 0 or K == 0:
        return 0.0
    coef = 3 * gamma * L * L * K + beta * L * K * (3 * gamma * L + 2 * beta)
    return coef * _window_max(_dist_seq(trace), k - 2 * K - 1, k - 1)


def simple_error_bound_rhs(trace, k: int, L: float, K: int) -> float:
    """``2 L max_{(k-K)_+ <= l <= k} dist_l``."""
    return 2 * L * _window_max(_dist_seq(trace), k - K, k)


def _sliding_max(dist, back: int, lag: int) -> np.ndarray:
    """``out[k] = max dist_l`` over ``k - back <= l <= k - lag``, reading ``dist_0`` for ``l < 0``."""
    dist = np.asarray(dist, dtype=np.float64)
    padded = np.concatenate([np.full(back, dist[0]), dist])
    windows = np.lib.stride_tricks.sliding_window_view(padded, back - lag + 1)
    return windows.max(axis=1)[:dist.size]


def iag_error_bound_rhs_all(dist, gamma: float, L: float, K: int) -> np.ndarray:
    """:func:`iag_error_bound_rhs` for every ``k`` of ``dist`` at once."""
    out = np.zeros(len(dist))
    if K > 0 and len(dist) > 1:
        out[1:] = 3 * gamma * L * L * K * _sliding_max(dist, 2 * K, 1)[1:]
    return out


def iagm_error_bound_rhs_all(dist, gamma: float, beta: float, L: float, K: int) -> np.ndarray:
    out = np.zeros(len(dist))
    if K > 0 and len(dist) > 1:
        coef = 3 * gamma * L * L * K + beta * L * K * (3 * gamma * L + 2 * beta)
        out[1:] = coef * _sliding_max(dist, 2 * K + 1, 1)[1:]
    return out


def simple_error_bound_rhs_all(dist, L: float, K: int) -> np.ndarray:
    return 2 * L * _sliding_max(dist, K, 0)


# --------------------------------------------------------------------------
# trace checks

@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    first_violation_k: int | None = None
    detail: str = ""
    violations: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _first(mask, ks) -> tuple[int | None, int]:
    idx = np.nonzero(mask)[0]
    return (int(ks[idx[0]]) if idx.size else None), int(idx.size)


def error_bound_check(trace, name: str = "error_bound") -> Check:
    """Measured ``||e^k||`` against the recorded IAG / IAG-M right-hand side."""
    bad, n = _first(trace.err_norm > trace.err_bound_rhs + ERROR_BOUND_ATOL, trace.k)
    return Check(name, bad is None, bad, violations=n)


def simple_error_bound_check(trace) -> Check:
    bad, n = _first(trace.err_norm > trace.simple_bound_rhs + ERROR_BOUND_ATOL, trace.k)
    return Check("simple_error_bound", bad is None, bad, violations=n)


def theorem1_check(trace, cert: RateCertificate, dist0: float | None = None) -> Check:
    """Distance and cost-gap bounds of the rate theorem at ``gamma_star``."""
    if not math.isclose(trace.gamma, cert.gamma_star, rel_tol=1e-12):
        raise ValueError(f"trace ran at gamma={trace.gamma}, the rate bound needs gamma_star={cert.gamma_star}")
    if dist0 is None:
        dist0 = float(trace.dist[0])
    ks = np.asarray(trace.k, dtype=np.float64)
    rate_k = cert.per_step_bound ** ks
    dist_mask = trace.dist > rate_k * dist0 * (1 + BOUND_SLACK)
    cost_mask = trace.cost_gap > 0.5 * cert.L * rate_k ** 2 * dist0 ** 2 * (1 + BOUND_SLACK)
    dist_bad, _ = _first(dist_mask, trace.k)
    cost_bad, _ = _first(cost_mask, trace.k)
    first, n = _first(dist_mask | cost_mask, trace.k)
    if first is None:
        return Check("theorem1", True)
    which = "dist" if first == dist_bad else "cost_gap"
    return Check("theorem1", False, first, f"{which} bound violated", violations=n)


def lemma1_bound_check(trace, cert: RateCertificate) -> Check:
    """``dist_k^2 <= rho^k dist_0^2`` for stepsizes with ``s(gamma) < 1``."""
    if not cert.s_below_one:
        return Check("lemma1_rate", False, None, f"s(gamma) = {cert.s:.6g} >= 1, no rate to check")
    V = trace.dist ** 2
    bad, n = _first(V > cert.rho ** np.asarray(trace.k, dtype=np.float64) * V[0] * (1 + BOUND_SLACK), trace.k)
    return Check("lemma1_rate", bad is None, bad, violations=n)


def gd_contraction_check(trace, floor: float = 0.0) -> Check:
    """Per-step ``dist_{k+1} / dist_k <= (Q-1)/(Q+1) + 1e-10`` while ``dist_k > floor``."""
    rate, _ = gd_certificate(trace.mu, trace.L)
    d = trace.dist
    live = d[:-1] > floor
    ratio = np.divide(d[1:], d[:-1], out=np.zeros(len(d) - 1), where=d[:-1] > 0)
    bad, n = _first(live & (ratio > rate + GD_RATIO_ATOL), trace.k[1:])
    return Check("gd_contraction", bad is None, bad, violations=n)


def observed_rate(trace, burn_in: float = 0.5) -> float:
    """``exp`` of the least-squares slope of ``log dist_k`` after the burn-in fraction."""
    d = np.asarray(_dist_seq(trace), dtype=np.float64)
    ks = np.asarray(getattr(trace, "k", np.arange(d.size)), dtype=np.float64)
    if not np.any(d > 0):
        return 0.0
    start = int(math.floor(burn_in * d.size))
    d, ks = d[start:], ks[start:]
    keep = d > 0
    if keep.sum() < 10:
        raise ValueError(f"need at least 10 positive distances after burn-in, have {int(keep.sum())}")
    slope = np.polyfit(ks[keep], np.log(d[keep]), 1)[0]
    return float(math.exp(slope))
