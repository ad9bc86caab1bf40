"""Finite-sum objectives with exact component oracles and known constants.

Every problem here is a sum ``f(x) = sum_i f_i(x)`` of smooth components.
Each component carries the Lipschitz constant ``L_i`` of its gradient and the
problem carries ``L = sum_i L_i``, the strong convexity parameter ``mu`` of the
sum, ``Q = L / mu`` and a reference optimum ``x_star``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

OPTIMUM_TOLERANCE = 1e-9


class ComponentOracle:
    """One summand ``f_i`` with value/gradient oracles and gradient constant ``L_i``."""

    dimension: int
    lipschitz: float

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class QuadraticComponent(ComponentOracle):
    """``f_i(x) = 1/2 x^T A x + b^T x`` with symmetric PSD ``A``."""

    A: np.ndarray
    b: np.ndarray
    lipschitz: float

    @property
    def dimension(self) -> int:
        return self.b.shape[0]

    def value(self, x):
        return 0.5 * float(x @ (self.A @ x)) + float(self.b @ x)

    def gradient(self, x):
        return self.A @ x + self.b


@dataclass(frozen=True, eq=False)
class LogisticBlock(ComponentOracle):
    """Logistic loss over a block of samples plus a share of the l2 penalty.

    ``f_i(x) = sum_j log(1 + exp(-y_j <a_j, x>)) + (reg / 2) ||x||^2``
    """

    features: np.ndarray
    labels: np.ndarray
    reg: float
    lipschitz: float

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def value(self, x):
        z = self.labels * (self.features @ x)
        return float(np.sum(np.logaddexp(0.0, -z))) + 0.5 * self.reg * float(x @ x)

    def gradient(self, x):
        z = self.labels * (self.features @ x)
        # d/dz log(1 + e^{-z}) = -sigmoid(-z)
        w = -self.labels * _sigmoid(-z)
        return self.features.T @ w + self.reg * x


def _sigmoid(t):
    return np.exp(-np.logaddexp(0.0, -t))


@dataclass(frozen=True, eq=False)
class Problem:
    """A finite sum of components with the constants the analysis needs.

    ``L`` is always the sum of the component constants, even if the sum has a
    tighter gradient Lipschitz constant.
    """

    components: tuple[ComponentOracle, ...]
    mu: float
    x_star: np.ndarray
    f_star: float
    name: str = "problem"
    L: float = field(init=False)
    Q: float = field(init=False)

    def __post_init__(self):
        if not self.components:
            raise ValueError("a problem needs at least one component")
        n = self.components[0].dimension
        if any(c.dimension != n for c in self.components):
            raise ValueError("all components must share one dimension")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        L = float(sum(c.lipschitz for c in self.components))
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "Q", L / self.mu)
        self.x_star.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return self.components[0].dimension

    def _check_dim(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x

    def component_gradients(self, x: np.ndarray) -> np.ndarray:
        """All component gradients at ``x`` as an ``(m, n)`` array."""
        return np.stack([c.gradient(x) for c in self.components])

    def value(self, x: np.ndarray) -> float:
        x = self._check_dim(x)
        return float(sum(c.value(x) for c in self.components))

    def cost_gap(self, x: np.ndarray) -> float:
        return self.value(x) - self.f_star

    def dist(self, x: np.ndarray) -> float:
        d = x - self.x_star
        return math.sqrt(d.dot(d))

    def full_gradients(self, X: np.ndarray) -> np.ndarray:
        """``grad f`` at every row of ``X``."""
        return np.stack([self.component_gradients(x).sum(axis=0) for x in X])

    def cost_gaps(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.cost_gap(x) for x in X])


class QuadraticSum(Problem):
    """Sum of quadratic components with batched oracles.

    The batched paths give the same numbers as looping over the components
    up to rounding; they exist because the certification runs evaluate every
    component at every iteration.
    """

    def __post_init__(self):
        super().__post_init__()
        As = np.stack([c.A for c in self.components])
        bs = np.stack([c.b for c in self.components])
        object.__setattr__(self, "_As", As)
        object.__setattr__(self, "_bs", bs)
        object.__setattr__(self, "hessian", As.sum(axis=0))
        object.__setattr__(self, "linear", bs.sum(axis=0))

    def component_gradients(self, x):
        return self._As @ x + self._bs

    def value(self, x):
        x = self._check_dim(x)
        return 0.5 * float(x @ (self.hessian @ x)) + float(self.linear @ x)

    def cost_gap(self, x):
        # exact form around the optimum, no cancellation against f_star
        d = x - self.x_star
        return 0.5 * float(d.dot(self.hessian.dot(d)))

    def full_gradients(self, X):
        G = np.zeros_like(X)
        for A, b in zip(self._As, self._bs):
            G += X @ A + b  # A symmetric
        return G

    def cost_gaps(self, X):
        D = X - self.x_star
        return 0.5 * np.einsum("ij,ij->i", D @ self.hessian, D)


class LogisticSum(Problem):
    """l2-regularized logistic regression split into contiguous sample blocks."""

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "_A", np.vstack([c.features for c in self.components]))
        object.__setattr__(self, "_y", np.concatenate([c.labels for c in self.components]))
        object.__setattr__(self, "_lam", float(sum(c.reg for c in self.components)))

    def cost_gap(self, x):
        # softplus(u + t) - softplus(u) = log1p(sigmoid(u) * expm1(t)), termwise
        # accurate; the penalty difference is written as a product.
        if not np.isfinite(self.f_star):
            return super().cost_gap(x)
        d = x - self.x_star
        u = -self._y * (self._A @ self.x_star)
        t = -self._y * (self._A @ d)
        loss = np.sum(np.log1p(_sigmoid(u) * np.expm1(t)))
        return float(loss) + 0.5 * self._lam * float(d @ (x + self.x_star))

    def full_gradients(self, X):
        G = np.zeros_like(X)
        for c in self.components:
            Z = (X @ c.features.T) * c.labels
            G += (-c.labels * _sigmoid(-Z)) @ c.features + c.reg * X
        return G

    def cost_gaps(self, X):
        if not np.isfinite(self.f_star):
            return super().cost_gaps(X)
        D = X - self.x_star
        u = -self._y * (self._A @ self.x_star)
        T = -(D @ self._A.T) * self._y
        loss = np.log1p(_sigmoid(u) * np.expm1(T)).sum(axis=1)
        return loss + 0.5 * self._lam * np.einsum("ij,ij->i", D, X + self.x_star)


def full_gradient(problem: Problem, x: np.ndarray) -> np.ndarray:
    """Exact ``grad f(x)``, summed over the components in index order."""
    x = problem._check_dim(x)
    # axis-0 reduction adds the rows one after another
    return problem.component_gradients(x).sum(axis=0)


def _random_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def make_quadratic_sum(seed: int, m: int, n: int, mu_target: float, L_target: float) -> QuadraticSum:
    """Random quadratic sum whose Hessian has smallest eigenvalue exactly ``mu_target``.

    Components are ``A_i = R_i^T D_i R_i`` with random rotations and
    nonnegative diagonals, all projected off a common random direction ``v``.
    They are then scaled and the last component receives ``mu_target * I``,
    so that ``sum_i L_i = L_target``. Along ``v`` the summed Hessian
    has eigenvalue ``mu_target`` and every other eigenvalue is at least as
    large. For ``n = 1`` the sum is ``mu_target`` itself. Individual ``A_i``
    are usually singular.
    """
    if m < 1 or n < 1:
        raise ValueError(f"need m >= 1 and n >= 1, got m={m}, n={n}")
    if not mu_target > 0:
        raise ValueError(f"mu_target must be positive, got {mu_target}")
    if L_target < mu_target:
        raise ValueError(f"L_target ({L_target}) must be >= mu_target ({mu_target})")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    P = np.eye(n) - np.outer(v, v)
    raw = []
    for _ in range(m):
        R = _random_rotation(rng, n)
        d = rng.uniform(0.0, 1.0, size=n)
        d[rng.random(n) < 0.2] = 0.0
        A = P @ (R.T * d) @ R @ P
        raw.append(0.5 * (A + A.T))
    tops = [float(np.linalg.eigvalsh(A)[-1]) if n > 1 else 0.0 for A in raw]
    total = sum(tops)
    scale = (L_target - mu_target) / total if total > 0 else 0.0
    mats = [scale * A for A in raw]
    mats[-1] = mats[-1] + mu_target * np.eye(n)
    bs = rng.standard_normal((m, n))
    comps = []
    for i, (A, b) in enumerate(zip(mats, bs)):
        lip = scale * tops[i] + (mu_target if i == m - 1 else 0.0)
        comps.append(QuadraticComponent(A=A, b=b, lipschitz=lip))
    H = np.sum(mats, axis=0)
    x_star = np.linalg.solve(H, -bs.sum(axis=0))
    f_star = 0.5 * float(x_star @ (H @ x_star)) + float(bs.sum(axis=0) @ x_star)
    return QuadraticSum(components=tuple(comps), mu=float(mu_target), x_star=x_star,
                        f_star=f_star, name=f"quadratic(seed={seed},m={m},n={n})")


def worst_case_quadratic(mu: float, L: float, m: int = 1, n: int = 2,
                         center: Sequence[float] | None = None) -> QuadraticSum:
    """Quadratic whose Hessian has eigenvalues exactly ``mu`` and ``L`` only.

    Split evenly into ``m`` identical components so ``sum_i L_i = L``. The optimum is
    ``center`` (zero by default).
    """
    if n < 2:
        raise ValueError("need n >= 2 to place both extreme eigenvalues")
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    d = np.full(n, L, dtype=np.float64)
    d[0] = mu
    A = np.diag(d) / m
    c = np.zeros(n) if center is None else np.asarray(center, dtype=np.float64)
    b = -A @ c
    comps = tuple(QuadraticComponent(A=A.copy(), b=b.copy(), lipschitz=L / m) for _ in range(m))
    H = np.diag(d)
    f_star = 0.5 * float(c @ (H @ c)) + float(m * b @ c)
    return QuadraticSum(components=comps, mu=float(mu), x_star=c.copy(), f_star=f_star,
                        name=f"worst_case(mu={mu},L={L})")


def reference_optimum(components: Sequence[ComponentOracle], mu: float, L: float,
                      x0: np.ndarray | None = None, max_iters: int = 2_000_000) -> np.ndarray:
    """Full gradient descent with stepsize ``2 / (mu + L)`` until
    ``||grad f(x)|| <= 1e-12 * max(1, ||x||)``."""
    n = components[0].dimension
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    step = 2.0 / (mu + L)
    for _ in range(max_iters):
        g = np.zeros(n)
        for c in components:
            g += c.gradient(x)
        if np.linalg.norm(g) <= 1e-12 * max(1.0, float(np.linalg.norm(x))):
            return x
        x = x - step * g
    raise RuntimeError(f"reference solve did not reach tolerance in {max_iters} iterations")


def make_logistic_l2(features: np.ndarray, labels: np.ndarray, lam: float, m: int) -> LogisticSum:
    """l2-regularized logistic regression with the samples split into ``m`` contiguous blocks."""
    A = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError("features must be N x n and labels of length N")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    N = A.shape[0]
    if m < 1 or N < m:
        raise ValueError(f"cannot split {N} samples into {m} nonempty blocks")
    reg = lam / m
    comps = []
    for idx in np.array_split(np.arange(N), m):
        Ab = A[idx].copy()
        lip = 0.25 * float(np.sum(Ab * Ab)) + reg
        comps.append(LogisticBlock(features=Ab, labels=y[idx].copy(), reg=reg, lipschitz=lip))
    L = float(sum(c.lipschitz for c in comps))
    x_star = reference_optimum(comps, lam, L)
    probe = LogisticSum(components=tuple(comps), mu=float(lam), x_star=x_star, f_star=np.nan)
    f_star = probe.value(x_star)
    return LogisticSum(components=tuple(comps), mu=float(lam), x_star=x_star, f_star=f_star,
                       name=f"logistic(N={N},n={A.shape[1]},m={m},lambda={lam})")


def synthetic_logistic_data(seed: int, N: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian features with labels from a noisy random linear rule."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((N, n))
    w = rng.standard_normal(n)
    y = np.where(A @ w + 0.5 * rng.standard_normal(N) >= 0, 1.0, -1.0)
    return A, y


def load_logistic_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``label,x1,...,xn`` rows; labels must parse as -1 or +1."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise ValueError(f"{path}: header must be 'label,x1,...,xn'")
        rows = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            lab = float(row[0])
            if lab not in (-1.0, 1.0):
                raise ValueError(f"{path}:{lineno}: label {row[0]!r} is not -1 or +1")
            labels.append(lab)
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise ValueError(f"{path}: no samples")
    return np.array(rows), np.array(labels)


def finite_difference_gradient(fun, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def gradcheck_error(oracle: ComponentOracle, x: np.ndarray, h: float = 1e-5) -> float:
    """Relative error between the analytic gradient and central differences."""
    fd = finite_difference_gradient(oracle.value, x, h)
    g = oracle.gradient(x)
    return float(np.linalg.norm(g - fd) / max(float(np.linalg.norm(fd)), 1e-8))
