"""Observed IAG rate against the certified per-step bound over a grid of Q and K.

Usage: python scripts/rate_sweep.py [--out rate_sweep.csv] [--iters 20000]
"""
import argparse
import csv

import numpy as np

from iagcert import theory
from iagcert.problems import make_quadratic_sum
from iagcert.solvers import StoppingRule, cyclic_schedule, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="rate_sweep.csv")
    ap.add_argument("--iters", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = []
    for Q in (2.0, 10.0, 100.0):
        for m in (2, 4, 8):
            p = make_quadratic_sum(args.seed, m, 10, 1.0, Q)
            cert = theory.certificate(p.mu, p.L, m - 1)
            x0 = np.random.default_rng(args.seed).standard_normal(p.n)
            tr = run(p, "IAG", cert.gamma_star, schedule=cyclic_schedule(m), x0=x0,
                     stop=StoppingRule(1e-12, args.iters))
            obs = theory.observed_rate(tr)
            rows.append((Q, m - 1, cert.gamma_star, cert.per_step_bound, cert.r_star, obs, tr.final_k))
            print(f"Q={Q:6.1f} K={m - 1}  certified={cert.per_step_bound:.8f}  r*={cert.r_star:.8f}  "
                  f"observed={obs:.8f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("Q", "K", "gamma_star", "per_step_bound", "r_star", "observed_rate", "iterations"))
        w.writerows(rows)


if __name__ == "__main__":
    main()
