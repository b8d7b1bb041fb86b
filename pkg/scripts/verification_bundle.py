#!/usr/bin/env python3
"""Solution-property verification bundle, honest and fault-injected.

Runs the integral sub/supersolution checks, dynamic-programming
residuals, and the rescaling identity on the configured instance, then
repeats with a shifted candidate to confirm the checks have teeth.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from pdhjb import emit_results, load_config, run_verify


def summarize(tag, res):
    print(f"[{tag}] passed={res['passed']}")
    for key in ("subsolution_soc", "minimax_super", "minimax_sub"):
        print(f"  {key}: {res[key]['violations']} violations "
              f"/ {len(res[key]['entries'])} samples")
    print(f"  dpp ok={res['dpp']['ok']}  rescaling ok={res['rescaling']['ok']}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config",
                        default=str(Path(__file__).resolve().parents[1]
                                    / "configs" / "verify_quadratic.toml"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    cfg = load_config(args.config).with_overrides(seed=args.seed, out=args.out)
    honest = run_verify(cfg)
    emit_results(cfg, cfg.output.directory, verify=honest)
    summarize("honest", honest)

    injected_cfg = replace(cfg, verify=replace(cfg.verify, inject_offset=0.1))
    injected = run_verify(injected_cfg)
    summarize("injected +0.1", injected)

    ok = honest["passed"] and not injected["passed"]
    print("bundle:", "ok" if ok else "FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
