#!/usr/bin/env python3
"""Singular singleton-constraint instance.

Solves the constrained problem whose only admissible path is
t -> sqrt(t) (value sqrt(2) * (1 - t0^(1/4)) for the |a|^(3/2) running
cost), compares the exact short-circuit against the penalty schedule,
and demonstrates that every constant-direction path derivative quotient
diverges: constant perturbations leave the singleton constraint set
immediately.
"""

import argparse
import math
import sys

import numpy as np

from pdhjb import (BolzaProblem, DiscretePath, DocOptions, TerminalCost,
                   TimeGrid, bolza_value_functional, make_lagrangian,
                   make_terminal_cost, solve_doc_constrained, upper_dini)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--t0", type=float, default=0.0625)
    args = parser.parse_args()
    t0 = args.t0

    lag = make_lagrangian("power:1.5")
    h = make_terminal_cost("sqrt_singleton")
    prob = BolzaProblem(lag, h, 1.0, 1)
    grid = TimeGrid.geometric(0.0, 1.0, 10_000, 1.002)
    x0 = DiscretePath(grid, np.sqrt(grid.nodes)[:, None])
    expect = math.sqrt(2.0) * (1.0 - t0 ** 0.25)

    est = solve_doc_constrained(prob, t0, x0, 64)
    print(f"short-circuit value  {est.value:.8f}  (closed form {expect:.8f}, "
          f"err {abs(est.value - expect):.2e})")

    h_pen = TerminalCost("constrained", h.fn, "sqrt_penalty",
                         distance=h.distance, target_path=None,
                         smooth_distance=h.smooth_distance)
    est_pen = solve_doc_constrained(
        BolzaProblem(lag, h_pen, 1.0, 1), t0, x0, 32,
        DocOptions(restarts=2, maxiter=300))
    print(f"penalty-route value  {est_pen.value:.8f}  "
          f"(rel err {abs(est_pen.value - expect) / expect:.2%}, "
          f"penalty gap {est_pen.penalty_gap:.2e})")

    off_target = solve_doc_constrained(prob, 0.25, DiscretePath.zero(), 16)
    print(f"off-target value     {off_target.value}")

    u = bolza_value_functional(prob, 64)
    for a in (-1.0, 0.5, 1.0, 2.0):
        est_d = upper_dini(u, t0, x0, a)
        print(f"upper Dini quotient, direction a={a:+.1f}: "
              f"diverged={est_d.diverged}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
