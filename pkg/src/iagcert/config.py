"""Experiment configuration: one TOML file describes one experiment.

Example::

    seed = 7

    [problem]
    kind = "quadratic"          # quadratic | logistic | worst_case
    m = 5
    n = 10
    mu = 1.0
    L = 10.0

    [method]
    name = "IAG"                # or names = ["IAG", "IG"] for compare
    gamma = "gamma_star"        # gamma_star | gd_optimal | <number>
    beta = 0.0

    [schedule]
    kind = "cyclic"             # cyclic | adversarial | full
    # K = 6                     (adversarial only)

    [x0]
    kind = "random"             # zeros | random | given
    scale = 1.0

    [stop]
    tolerance = 1e-10
    max_iters = 1000000

    [output]
    dir = "out"

Every random element (problem data, adversarial order, starting point) is
derived from the top-level ``seed``.
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import theory
from .problems import (Problem, load_logistic_csv, make_logistic_l2, make_quadratic_sum,
                       synthetic_logistic_data, worst_case_quadratic)
from .solvers import METHODS, Schedule, StoppingRule, adversarial_schedule, cyclic_schedule, full_schedule


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the file, line and field."""


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    m: int
    n: int | None = None
    mu: float | None = None
    L: float | None = None
    lam: float | None = None
    data: str | None = None
    N: int | None = None


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "cyclic"
    K: int | None = None


@dataclass(frozen=True)
class X0Spec:
    kind: str = "zeros"
    value: tuple[float, ...] | None = None
    scale: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    methods: tuple[str, ...]
    gamma: str | float
    beta: float = 0.0
    schedule: ScheduleSpec = ScheduleSpec()
    x0: X0Spec = X0Spec()
    stop: StoppingRule = StoppingRule()
    out_dir: str = "out"
    seed: int = 0
    source: str = "<config>"

    @property
    def method(self) -> str:
        return self.methods[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d["stop"] = {"tolerance": self.stop.tolerance, "max_iters": self.stop.max_iters}
        return d

    def seeds(self) -> dict[str, int]:
        children = np.random.SeedSequence(self.seed).spawn(3)
        names = ("problem", "schedule", "x0")
        return {k: int(c.generate_state(1)[0]) for k, c in zip(names, children)}


class _Reader:
    """Typed field access with ``file:line: [section] key`` diagnostics."""

    def __init__(self, text: str, source: str):
        self.lines = text.splitlines()
        self.source = source

    def where(self, section: str | None, key: str | None = None) -> str:
        line = self._locate(section, key)
        loc = f"{self.source}:{line}" if line else self.source
        field = f"[{section}] {key}" if section and key else (f"[{section}]" if section else key)
        return f"{loc}: {field}"

    def _locate(self, section, key):
        current = None
        for no, raw in enumerate(self.lines, start=1):
            s = raw.strip()
            m = re.match(r"^\[([^\]]+)\]", s)
            if m:
                current = m.group(1).strip()
                if key is None and current == section:
                    return no
                continue
            if key and current == section and re.match(rf"^{re.escape(key)}\s*=", s):
                return no
        return None

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}: {msg}")

    def get(self, table, section, key, kind, default=..., check=None, msg=""):
        if key not in table:
            if default is ...:
                self.fail(section, key, "required field is missing")
            return default
        v = table[key]
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
            self.fail(section, key, f"expected {kind.__name__}, got {v!r}")
        if check is not None and not check(v):
            self.fail(section, key, f"{msg}, got {v!r}")
        return v


def _positive(v):
    return v > 0


def parse_config(text: str, source: str = "<config>", seed: int | None = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    r = _Reader(text, source)
    known = {"seed", "problem", "method", "schedule", "x0", "stop", "output"}
    for key in raw:
        if key not in known:
            r.fail(None, key, "unknown field")
    top_seed = r.get(raw, None, "seed", int, 0)
    if seed is not None:
        top_seed = seed

    def table(name, required=False):
        if name not in raw:
            if required:
                raise ConfigError(f"{source}: [{name}] section is missing")
            return {}
        if not isinstance(raw[name], dict):
            r.fail(None, name, "expected a table")
        return raw[name]

    pt = table("problem", required=True)
    kind = r.get(pt, "problem", "kind", str, check=lambda v: v in ("quadratic", "logistic", "worst_case"),
                 msg="expected quadratic, logistic or worst_case")
    m = r.get(pt, "problem", "m", int, 1 if kind == "worst_case" else ..., _positive, "must be a positive integer")
    if kind == "quadratic":
        n = r.get(pt, "problem", "n", int, check=_positive, msg="must be a positive integer")
        mu = r.get(pt, "problem", "mu", float, check=_positive, msg="must be positive")
        L = r.get(pt, "problem", "L", float, check=lambda v: v >= mu, msg=f"must be >= mu ({mu})")
        problem = ProblemSpec(kind, m, n=n, mu=mu, L=L)
    elif kind == "worst_case":
        n = r.get(pt, "problem", "n", int, 2, lambda v: v >= 2, "must be >= 2")
        mu = r.get(pt, "problem", "mu", float, check=_positive, msg="must be positive")
        L = r.get(pt, "problem", "L", float, check=lambda v: v >= mu, msg=f"must be >= mu ({mu})")
        problem = ProblemSpec(kind, m, n=n, mu=mu, L=L)
    else:
        lam = r.get(pt, "problem", "lambda", float, check=_positive, msg="must be positive")
        data = r.get(pt, "problem", "data", str, None)
        if data is None:
            N = r.get(pt, "problem", "N", int, check=lambda v: v >= m, msg=f"must be >= m ({m})")
            n = r.get(pt, "problem", "n", int, check=_positive, msg="must be a positive integer")
            problem = ProblemSpec(kind, m, n=n, lam=lam, N=N)
        else:
            base = Path(source).parent if source != "<config>" else Path(".")
            path = Path(data) if Path(data).is_absolute() else base / data
            if not path.is_file():
                r.fail("problem", "data", f"file {str(path)!r} not found")
            problem = ProblemSpec(kind, m, lam=lam, data=str(path))

    mt = table("method", required=True)
    if "names" in mt:
        names = r.get(mt, "method", "names", list)
        if "name" in mt:
            r.fail("method", "name", "give either name or names, not both")
    else:
        names = [r.get(mt, "method", "name", str)]
    for nm in names:
        if nm not in METHODS:
            r.fail("method", "names" if "names" in mt else "name", f"unknown method {nm!r}; expected one of {METHODS}")
    gamma = mt.get("gamma", "gamma_star")
    if isinstance(gamma, str):
        if gamma not in ("gamma_star", "gd_optimal"):
            r.fail("method", "gamma", f"expected gamma_star, gd_optimal or a positive number, got {gamma!r}")
    else:
        gamma = r.get(mt, "method", "gamma", float, check=_positive, msg="must be positive")
    beta = r.get(mt, "method", "beta", float, 0.0, lambda v: v >= 0, "must be nonnegative")
    if beta and not any(nm in ("IAG-M", "IG-M") for nm in names):
        r.fail("method", "beta", "momentum is only used by IAG-M and IG-M")

    st = table("schedule")
    skind = r.get(st, "schedule", "kind", str, "cyclic", lambda v: v in ("cyclic", "adversarial", "full"),
                  "expected cyclic, adversarial or full")
    K = None
    if skind == "adversarial":
        K = r.get(st, "schedule", "K", int, check=lambda v: v >= m - 1, msg=f"must be >= m - 1 ({m - 1})")
    elif "K" in st:
        r.fail("schedule", "K", f"K is implied by a {skind} schedule")
    schedule = ScheduleSpec(skind, K)
    sched_K = {"cyclic": m - 1, "full": 0, "adversarial": K}[skind]
    if gamma == "gamma_star" and sched_K < 1:
        r.fail("method", "gamma", "gamma_star needs a delay bound K >= 1")
    if gamma == "gd_optimal" and sched_K != 0 and any(nm != "GD" for nm in names):
        r.fail("method", "gamma", "gd_optimal needs method GD or a schedule with K = 0")

    xt = table("x0")
    xkind = r.get(xt, "x0", "kind", str, "zeros", lambda v: v in ("zeros", "random", "given"),
                  "expected zeros, random or given")
    value = None
    if xkind == "given":
        vals = r.get(xt, "x0", "value", list)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            r.fail("x0", "value", "expected a list of numbers")
        value = tuple(float(v) for v in vals)
        if problem.n is not None and len(value) != problem.n:
            r.fail("x0", "value", f"expected {problem.n} entries, got {len(value)}")
    scale = r.get(xt, "x0", "scale", float, 1.0, _positive, "must be positive")
    x0 = X0Spec(xkind, value, scale)

    stt = table("stop")
    tol = r.get(stt, "stop", "tolerance", float, 1e-10, lambda v: v >= 0, "must be nonnegative")
    max_iters = r.get(stt, "stop", "max_iters", int, 1_000_000, lambda v: v >= 0, "must be nonnegative")

    ot = table("output")
    out_dir = r.get(ot, "output", "dir", str, "out")
    return ExperimentConfig(problem=problem, methods=tuple(names), gamma=gamma, beta=beta, schedule=schedule,
                            x0=x0, stop=StoppingRule(tol, max_iters), out_dir=out_dir, seed=top_seed,
                            source=source)


def load_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path), seed)


# --------------------------------------------------------------------------
# materialization

def build_problem(cfg: ExperimentConfig) -> Problem:
    p = cfg.problem
    seed = cfg.seeds()["problem"]
    if p.kind == "quadratic":
        return make_quadratic_sum(seed, p.m, p.n, p.mu, p.L)
    if p.kind == "worst_case":
        return worst_case_quadratic(p.mu, p.L, m=p.m, n=p.n)
    if p.data is not None:
        A, y = load_logistic_csv(p.data)
    else:
        A, y = synthetic_logistic_data(seed, p.N, p.n)
    if len(y) < p.m:
        raise ConfigError(f"{cfg.source}: [problem] m: {len(y)} samples cannot fill {p.m} blocks")
    return make_logistic_l2(A, y, p.lam, p.m)


def build_schedule(cfg: ExperimentConfig, m: int) -> Schedule:
    s = cfg.schedule
    if s.kind == "cyclic":
        return cyclic_schedule(m)
    if s.kind == "full":
        return full_schedule(m)
    return adversarial_schedule(m, s.K, cfg.seeds()["schedule"])


def build_x0(cfg: ExperimentConfig, n: int) -> np.ndarray:
    x = cfg.x0
    if x.kind == "zeros":
        return np.zeros(n)
    if x.kind == "given":
        if len(x.value) != n:
            raise ConfigError(f"{cfg.source}: [x0] value: expected {n} entries, got {len(x.value)}")
        return np.array(x.value)
    return x.scale * np.random.default_rng(cfg.seeds()["x0"]).standard_normal(n)


def resolve_gamma(cfg: ExperimentConfig, problem: Problem, K: int) -> float:
    if cfg.gamma == "gamma_star":
        return theory.gamma_star(problem.mu, problem.L, K)
    if cfg.gamma == "gd_optimal":
        return theory.gd_certificate(problem.mu, problem.L)[1]
    return float(cfg.gamma)
