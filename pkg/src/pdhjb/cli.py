"""Command-line entry point.

Exit codes: 0 success, 1 quantitative violations, 2 configuration error,
3 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, PdhjbError, ResourceError
from .harness import (emit_results, run_bolza, run_convergence, run_legendre,
                      run_soc, run_verify)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdhjb",
        description="Numerical laboratory for path-dependent optimal control: "
                    "deterministic and stochastic values, derivative "
                    "estimators, and convergence/verification harnesses.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("legendre", "tabulate the Hamiltonian on a momentum grid"),
            ("bolza", "solve the deterministic problems"),
            ("soc", "solve the stochastic tree problems"),
            ("converge", "run the viscosity convergence study"),
            ("verify", "run the solution-property verification bundle")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="TOML config file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--out", default=None,
                         help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed,
                                                      out=args.out)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        code = EXIT_OK
        if args.command == "legendre":
            res = run_legendre(cfg)
            emit_results(cfg, cfg.output.directory, legendre=res)
            if res["has_closed_form"] and res["max_discrepancy"] > 1e-6:
                code = EXIT_VIOLATIONS
            print(f"legendre: {len(res['rows'])} points, "
                  f"max closed/numeric discrepancy {res['max_discrepancy']:.3e}")
        elif args.command == "bolza":
            res = run_bolza(cfg)
            emit_results(cfg, cfg.output.directory, bolza=res)
            for row in res["rows"]:
                print(f"bolza[{row['datum']}]: value {row['value']:.10g}")
        elif args.command == "soc":
            res = run_soc(cfg)
            emit_results(cfg, cfg.output.directory, soc=res)
            for row in res["rows"]:
                print(f"soc[{row['datum']}, n={row['n']}]: "
                      f"value {row['value']:.10g} "
                      f"in [{row['lower']:.4g}, {row['upper']:.4g}]")
        elif args.command == "converge":
            res = run_convergence(cfg)
            emit_results(cfg, cfg.output.directory, convergence=res)
            for n in sorted(res.sup_gap):
                print(f"converge: n={n:<6d} sup |v_n - v_0| = {res.sup_gap[n]:.6g}")
            final_n = max(res.sup_gap) if res.sup_gap else None
            if res.failures:
                code = EXIT_VIOLATIONS
                for f in res.failures:
                    print(f"converge failure: {f}", file=sys.stderr)
            elif final_n is not None and \
                    res.sup_gap[final_n] > cfg.tolerances.gap:
                code = EXIT_VIOLATIONS
                print(f"converge: final gap {res.sup_gap[final_n]:.6g} exceeds "
                      f"tolerance {cfg.tolerances.gap:g}", file=sys.stderr)
        elif args.command == "verify":
            res = run_verify(cfg)
            emit_results(cfg, cfg.output.directory, verify=res)
            for key in ("subsolution_soc", "minimax_super", "minimax_sub"):
                print(f"verify {key}: {res[key]['violations']} violations "
                      f"in {len(res[key]['entries'])} samples")
            print(f"verify dpp: ok={res['dpp']['ok']}  "
                  f"rescaling: ok={res['rescaling']['ok']}")
            if not res["passed"]:
                code = EXIT_VIOLATIONS
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except PdhjbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATIONS


if __name__ == "__main__":
    sys.exit(main())
