"""Experiment drivers behind the command line: run, certify, compare, gradcheck."""
from __future__ import annotations

import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import theory
from .config import (ConfigError, ExperimentConfig, build_problem, build_schedule, build_x0, load_config,
                     resolve_gamma)
from .problems import Problem, gradcheck_error
from .solvers import DivergenceError, Trace, run, write_trace_rows

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
GRADCHECK_TOL = 1e-6
DRIFT_TOL = 1e-12


def trace_checks(trace: Trace, problem: Problem, gamma_mode) -> tuple[list[theory.Check], theory.RateCertificate | None]:
    """Every inequality that applies to ``trace``, each listed with its status."""
    checks = []
    cert = None
    method, K = trace.method, trace.K
    if method in ("IG", "IG-M"):
        return checks, None
    checks.append(theory.Check("table_consistency", trace.max_table_drift <= DRIFT_TOL,
                               detail=f"max drift {trace.max_table_drift:.3e}"))
    v = trace.schedule_violation
    checks.append(theory.Check("delay_bound", v is None, None if v is None else v.k,
                               "" if v is None else f"component {v.i} too stale"))
    checks.append(theory.simple_error_bound_check(trace))
    checks.append(theory.error_bound_check(trace, "iagm_error_bound" if method == "IAG-M" else "iag_error_bound"))
    if K >= 1:
        cert = theory.certificate(problem.mu, problem.L, K, trace.gamma)
        if method == "IAG":
            if math.isclose(trace.gamma, cert.gamma_star, rel_tol=1e-12):
                checks.append(theory.theorem1_check(trace, cert))
            elif cert.s_below_one:
                checks.append(theory.lemma1_bound_check(trace, cert))
    rate, step = theory.gd_certificate(problem.mu, problem.L)
    if K == 0 and method in ("GD", "IAG") and math.isclose(trace.gamma, step, rel_tol=1e-12):
        # one step carries absolute rounding of order eps * ||x*||, which moves the
        # ratio dist_{k+1} / dist_k by more than the tolerance once dist_k is tiny
        floor = 16 * np.finfo(float).eps / theory.GD_RATIO_ATOL * max(1.0, float(np.linalg.norm(problem.x_star)))
        checks.append(theory.gd_contraction_check(trace, floor=floor))
    return checks, cert


def _observed(trace: Trace) -> float | None:
    try:
        return theory.observed_rate(trace)
    except ValueError:
        return None


def _iterations_to_tolerance(trace: Trace) -> int | None:
    return trace.final_k if trace.converged else None


def run_summary(trace: Trace, checks: list[theory.Check]) -> dict:
    return {
        "method": trace.method,
        "gamma": trace.gamma,
        "beta": trace.beta,
        "K": trace.K,
        "final_k": trace.final_k,
        "converged": trace.converged,
        "iterations_to_tolerance": _iterations_to_tolerance(trace),
        "final_dist": float(trace.dist[-1]),
        "observed_rate": _observed(trace),
        "checks": [c.to_dict() for c in checks],
        "violation_counts": {c.name: c.violations for c in checks},
    }


def _problem_info(problem: Problem) -> dict:
    return {"name": problem.name, "m": problem.m, "n": problem.n, "L": problem.L, "mu": problem.mu,
            "Q": problem.Q}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _prepare(config_path, seed):
    cfg = load_config(config_path, seed)
    problem = build_problem(cfg)
    schedule = build_schedule(cfg, problem.m)
    x0 = build_x0(cfg, problem.n)
    gamma = resolve_gamma(cfg, problem, schedule.K)
    return cfg, problem, schedule, x0, gamma


def _out_dir(cfg: ExperimentConfig, out) -> Path:
    d = Path(out if out is not None else cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_run(config_path, out=None, seed=None) -> int:
    """Run one experiment and write ``trace.csv`` and ``report.json``."""
    try:
        cfg, problem, schedule, x0, gamma = _prepare(config_path, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if len(cfg.methods) != 1:
        print(f"error: {cfg.source}: [method] names: run takes exactly one method, use compare", file=sys.stderr)
        return EXIT_CONFIG
    beta = cfg.beta if cfg.method in ("IAG-M", "IG-M") else 0.0
    t0 = time.perf_counter()
    try:
        trace = run(problem, cfg.method, gamma, beta, schedule, x0, cfg.stop)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        outdir = _out_dir(cfg, out)
        _write_json(outdir / "report.json", {"config": cfg.to_dict(), "problem": _problem_info(problem),
                                             "status": "diverged", "last_finite_k": exc.last_finite_k})
        return EXIT_DIVERGED
    wall = time.perf_counter() - t0
    checks, cert = trace_checks(trace, problem, cfg.gamma)
    outdir = _out_dir(cfg, out)
    trace.write_csv(outdir / "trace.csv")
    report = {
        "config": cfg.to_dict(),
        "problem": _problem_info(problem),
        "schedule": schedule.name,
        "certificate": None if cert is None else cert.to_dict(),
        "status": "ok" if all(c.ok for c in checks) else "violations",
        "wall_time": wall,
        **run_summary(trace, checks),
    }
    _write_json(outdir / "report.json", report)
    for c in checks:
        log.info("%-20s %s", c.name, "ok" if c.ok else f"VIOLATED at k={c.first_violation_k}")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_CHECKS


def certify(mu: float, L: float, K: int, gamma: float | None = None) -> dict:
    if K == 0:
        rate, step = theory.gd_certificate(mu, L)
        g = step if gamma is None else gamma
        return {"mu": mu, "L": L, "Q": L / mu, "K": 0, "gamma": g, "gd_stepsize": step, "per_step_bound": rate,
                "message": "K = 0: gradient descent rate at stepsize 2/(mu+L)"}
    return theory.certificate(mu, L, K, gamma).to_dict()


def cmd_certify(mu, L, K, gamma=None) -> int:
    try:
        out = certify(mu, L, K, gamma)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def compare_verdict(summaries: dict[str, dict], tolerance_dist: float = 1e-8) -> dict:
    verdict = {}
    ranked = sorted(summaries, key=lambda m: (summaries[m]["iterations_to_tolerance"] is None,
                                              summaries[m]["iterations_to_tolerance"] or 0))
    verdict["ranking_by_iterations_to_tolerance"] = ranked
    if "IAG" in summaries and "IG" in summaries:
        iag, ig = summaries["IAG"]["final_dist"], summaries["IG"]["final_dist"]
        verdict["iag_vs_ig"] = {
            "iag_final_dist": iag,
            "ig_final_dist": ig,
            "iag_reached_tolerance": iag <= tolerance_dist,
            "ig_over_iag": ig / iag if iag > 0 else math.inf,
        }
    return verdict


def cmd_compare(config_path, out=None, seed=None) -> int:
    """Run every listed method on one problem and starting point."""
    try:
        cfg, problem, schedule, x0, gamma = _prepare(config_path, seed)
        if len(cfg.methods) < 2:
            raise ConfigError(f"{cfg.source}: [method] names: compare needs at least two methods")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    traces, summaries = [], {}
    all_ok = True
    t0 = time.perf_counter()
    for method in cfg.methods:
        beta = cfg.beta if method in ("IAG-M", "IG-M") else 0.0
        try:
            tr = run(problem, method, gamma, beta, schedule, x0, cfg.stop)
        except DivergenceError as exc:
            print(f"error: {method}: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        checks, _ = trace_checks(tr, problem, cfg.gamma)
        all_ok &= all(c.ok for c in checks)
        traces.append(tr)
        summaries[method] = run_summary(tr, checks)
    outdir = _out_dir(cfg, out)
    with open(outdir / "compare.csv", "w", newline="") as fh:
        write_trace_rows(csv.writer(fh), traces, method_column=True)
    report = {"config": cfg.to_dict(), "problem": _problem_info(problem), "schedule": schedule.name,
              "gamma": gamma, "runs": summaries, "verdict": compare_verdict(summaries),
              "wall_time": time.perf_counter() - t0}
    _write_json(outdir / "compare.json", report)
    return EXIT_OK if all_ok else EXIT_CHECKS


def gradcheck_problem(problem: Problem, seed: int = 0, points: int = 20) -> dict:
    """Worst central-difference relative error per component over random points."""
    rng = np.random.default_rng(seed)
    scale = 1.0 + float(np.linalg.norm(problem.x_star)) / math.sqrt(problem.n)
    xs = [problem.x_star + scale * rng.standard_normal(problem.n) for _ in range(points)]
    errors = [max(gradcheck_error(c, x) for x in xs) for c in problem.components]
    return {"problem": problem.name, "points": points, "tolerance": GRADCHECK_TOL,
            "component_errors": errors, "max_error": max(errors),
            "pass": bool(max(errors) <= GRADCHECK_TOL)}


def cmd_gradcheck(config_path, seed=None) -> int:
    try:
        cfg = load_config(config_path, seed)
        problem = build_problem(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rep = gradcheck_problem(problem, cfg.seeds()["x0"])
    print(json.dumps(rep, indent=2))
    return EXIT_OK if rep["pass"] else EXIT_CHECKS
