#!/usr/bin/env python3
"""Viscosity convergence study on the linear-quadratic instance.

Prints the gap table against the closed form log(1 + 2(T - t0)) / (2n)
and emits CSV/JSON results.
"""

import argparse
import math
import sys
from pathlib import Path

from pdhjb import emit_results, load_config, run_convergence


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config",
                        default=str(Path(__file__).resolve().parents[1]
                                    / "configs" / "lq_convergence.toml"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    cfg = load_config(args.config).with_overrides(seed=args.seed, out=args.out)
    result = run_convergence(cfg)
    emit_results(cfg, cfg.output.directory, convergence=result)

    tau = cfg.problem.horizon - min(d.t0 for d in cfg.initial_data)
    print(f"{'n':>6} {'gap':>12} {'closed form':>12} {'|err|':>10} {'3*SE':>10}")
    for row in result.rows:
        closed = math.log(1.0 + 2.0 * tau) / (2.0 * row.n)
        print(f"{row.n:>6d} {row.gap:>12.6f} {closed:>12.6f} "
              f"{abs(row.gap - closed):>10.2e} {3.0 * row.se:>10.2e}")
    if result.failures:
        print("failures:", result.failures, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
