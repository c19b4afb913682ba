"""Command-line front end: ``perturbmc {validate,figure,verify}``.

Exit codes: 0 success, 1 validation failure (bad input or a failed check),
2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import RunConfig, input_arrays, load_model, parse_floats, parse_lags
from .errors import NumericalError, PerturbMCError, ValidationError
from .figures import FIGURES, run_figure
from .markov import check_ergodic, stationary_distribution, validate_stochastic
from .verify import SUITES, Check, run_suite

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
ROW_TOL = 1e-10


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="queue",
                   help="builtin name, JSON object or path to a JSON model file")
    p.add_argument("--input", default="three-state",
                   help="builtin name, JSON object or path to a JSON input file")
    p.add_argument("--gamma", type=float, help="parameter of the three-state input")
    p.add_argument("--epsilon", type=float, help="input scale in [0, 1]")
    p.add_argument("--epsilon-grid", help="comma-separated epsilon values (not epsilon^2)")
    p.add_argument("--lags", help="'L' for -L..L or 'a:b'")
    p.add_argument("--grid", type=int, default=1024, help="frequency grid size")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--steps", type=int, default=1_000_000, help="Monte Carlo path length")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perturbmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("validate", help="check the model and input assumptions")
    _add_common(p)
    p = sub.add_parser("figure", help="write plot data for one figure")
    _add_common(p)
    p.add_argument("--figure", required=True, choices=FIGURES)
    p = sub.add_parser("verify", help="run a verification suite")
    _add_common(p)
    p.add_argument("--suite", required=True, choices=SUITES)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(
        model=args.model,
        input=args.input,
        gamma=args.gamma,
        epsilon=args.epsilon,
        epsilon_grid=parse_floats(args.epsilon_grid),
        lags=parse_lags(args.lags),
        grid=args.grid,
        seed=args.seed,
        out=args.out,
        steps=args.steps,
    )


def validation_checks(cfg: RunConfig) -> list:
    """Assumption checks on the nominal chain and the input."""
    checks = []
    family = load_model(cfg.model)
    P0 = family.P0.entries
    rep = check_ergodic(P0)
    checks.append(Check("A1 single recurrent class", rep.unichain,
                        f"strongly connected: {str(rep.irreducible).lower()}"))
    checks.append(Check("A1 aperiodic", rep.aperiodic, ""))
    e1 = float(np.max(np.abs(family.E.sum(axis=1))))
    checks.append(Check("E 1 = 0", e1 < ROW_TOL, f"max |row sum| {e1:.1e}"))
    w1 = float(np.max(np.abs(family.W.sum(axis=1))))
    checks.append(Check("W 1 = 0", w1 < ROW_TOL, f"max |row sum| {w1:.1e}"))

    states, K, _ = input_arrays(cfg.input, cfg.gamma)
    try:
        validate_stochastic(K)
        kr = check_ergodic(K)
        ok = kr.unichain and kr.aperiodic
        checks.append(Check("input chain ergodic", ok, ""))
    except ValidationError as exc:
        checks.append(Check("input chain ergodic", False, str(exc)))
        return checks
    mu = stationary_distribution(K, check=False)
    mean = float(mu @ states)
    checks.append(Check("A2 zero-mean input", abs(mean) < 1e-12, f"mean {mean:.3g}"))
    bound = float(np.max(np.abs(states)))
    checks.append(Check("input states in [-1, 1]", bound <= 1.0, f"max |z| {bound:g}"))
    eps = [cfg.epsilon] if cfg.epsilon is not None else list(cfg.epsilon_grid or [])
    for e in eps:
        try:
            for z in states:
                family.transition(e * z)
            checks.append(Check(f"P_zeta stochastic at epsilon {e:g}", True, ""))
        except ValidationError as exc:
            checks.append(Check(f"P_zeta stochastic at epsilon {e:g}", False, str(exc)))
    return checks


def _report(checks) -> int:
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def cmd_validate(cfg: RunConfig) -> int:
    return _report(validation_checks(cfg))


def cmd_figure(cfg: RunConfig, figure: str) -> int:
    for p in run_figure(cfg, figure):
        print(p)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    return _report(run_suite(suite, cfg.seed, cfg.steps))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "figure":
            return cmd_figure(cfg, args.figure)
        return cmd_verify(cfg, args.suite)
    # LinAlgError derives from ValueError, so it is caught first
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PerturbMCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
