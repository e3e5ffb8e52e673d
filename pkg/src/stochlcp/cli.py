"""Command-line interface: ``stochlcp {generate,solve,bench,market,validate}``.

Exit codes: 0 success, 2 a solver stopped at its iteration cap, 1 any
error (including bad arguments).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .bench import parse_grid, run_benchmark, write_bench_csv
from .game import GameSchemaError, load_game, save_game
from .generator import GeneratorSpec, generate_instance
from .market import (
    MODES,
    MarketDataError,
    MarketRunConfig,
    load_market_data,
    run_month,
    validate_data,
    write_share_triples,
)
from .solvers import ABASolver, PHASolver, SolverConfig, write_trace_csv

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _months(text):
    """``2019-01``, ``2019-01,2019-03`` or ``2019-01..2019-12``."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if ".." in part:
            lo, hi = (np.datetime64(p, "M") for p in part.split(".."))
            out.extend(str(m) for m in np.arange(lo, hi + 1))
        else:
            out.append(str(np.datetime64(part, "M")))
    return out


def _write_json(obj, path):
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _add_solver_flags(p):
    p.add_argument("--max-iter", type=_positive_int, default=400)
    p.add_argument("--tol", type=_positive_float, default=1e-6, help="residual tolerance")
    p.add_argument("--tol-step", type=_positive_float, default=1e-6, help="step tolerance")
    p.add_argument("--step-t", type=_positive_float, default=1.0, help="PHA proximal parameter")


def build_parser():
    parser = _Parser(prog="stochlcp", description="Two-stage stochastic LCP games: generate, solve, benchmark.")
    parser.add_argument("--threads", type=_positive_int, default=None, help="BLAS thread cap (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a random benchmark instance as JSON")
    p.add_argument("--J", type=_positive_int, required=True)
    p.add_argument("--nu", type=_positive_int, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", "-o", required=True)

    p = sub.add_parser("solve", help="compute an equilibrium of a game JSON file")
    p.add_argument("game")
    p.add_argument("--algo", choices=("aba", "pha"), default="aba")
    _add_solver_flags(p)
    p.add_argument("--out", "-o", default=None, help="solution JSON (default: stdout)")
    p.add_argument("--trace", default=None, help="per-iteration CSV")

    p = sub.add_parser("bench", help="ABA vs PHA over a (J, nu) grid")
    p.add_argument("--grid", type=parse_grid, default="5:5,5:50,10:100", help="e.g. 5:5,10:100")
    p.add_argument("--reps", type=_positive_int, default=10)
    p.add_argument("--seed", type=_seed, default=0, help="instance k uses seed + k")
    _add_solver_flags(p)
    p.add_argument("--jobs", type=_positive_int, default=1, help="cells in parallel; CPU columns become unreliable")
    p.add_argument("--no-timing", action="store_true", help="leave CPU columns empty for byte-stable output")
    p.add_argument("--out", "-o", default=None, help="CSV path (default: stdout)")

    p = sub.add_parser("market", help="monthly oil-market share recovery")
    p.add_argument("--data-dir", default=None, help="defaults to $STOCHLCP_DATA_DIR or the bundled data")
    p.add_argument("--month", type=_months, required=True, help="YYYY-MM, a comma list or a range A..B")
    p.add_argument("--mode", choices=MODES + ("both",), default="in_sample")
    p.add_argument("--nu", type=_positive_int, default=800)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--zeta-range", type=float, nargs=2, default=(0.05, 0.1), metavar=("LO", "HI"))
    p.add_argument("--share-units", choices=("fraction", "percent"), default="fraction")
    p.add_argument("--anchor-2020", choices=("rolling", "fixed"), default="rolling")
    p.add_argument("--max-iter", type=_positive_int, default=400)
    p.add_argument("--out", "-o", default=None, help="JSON report (default: stdout)")
    p.add_argument("--triples", default=None, help="CSV of real/in-sample/out-of-sample shares")

    p = sub.add_parser("validate", help="check data CSVs and game JSON files")
    p.add_argument("--data-dir", default=None)
    p.add_argument("games", nargs="*", help="game JSON files to schema-check")
    return parser


def cmd_generate(args):
    game = generate_instance(GeneratorSpec(args.J, args.nu, args.seed))
    save_game(game, args.out)
    print(f"J: {game.J}\nnu: {game.nu}\ndim: {game.dim}")
    return EXIT_OK


def cmd_solve(args):
    game = load_game(args.game)
    cfg = SolverConfig(args.max_iter, args.tol, args.tol_step, args.step_t)
    if args.algo == "aba":
        est = ABASolver(max_iter=cfg.max_iter, tol_residual=cfg.tol_residual, tol_step=cfg.tol_step)
    else:
        est = PHASolver(
            max_iter=cfg.max_iter, tol_residual=cfg.tol_residual, tol_step=cfg.tol_step, step_t=cfg.pha_step_t
        )
    sol = est.fit(game).solution_
    report = {"J": game.J, "nu": game.nu, "dim": game.dim, **sol.to_dict()}
    _write_json(report, args.out)
    if args.trace:
        write_trace_csv(sol.trace, args.trace)
    print(
        f"{sol.algorithm}: {sol.termination_reason} after {sol.n_iter} iterations, residual {sol.residual:.3e}",
        file=sys.stderr,
    )
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def cmd_bench(args):
    cfg = SolverConfig(args.max_iter, args.tol, args.tol_step, args.step_t)
    rows = run_benchmark(args.grid, args.reps, args.seed, cfg, n_threads=args.threads, n_jobs=args.jobs)
    write_bench_csv(rows, args.out if args.out else sys.stdout, include_timing=not args.no_timing)
    for r in rows:
        if r.aba_failures or r.pha_failures:
            msg = f"cell J={r.J} nu={r.nu}: {r.aba_failures} ABA and {r.pha_failures} PHA runs failed"
            print(msg, file=sys.stderr)
    return EXIT_OK


def cmd_market(args):
    data = load_market_data(args.data_dir)
    modes = MODES if args.mode == "both" else (args.mode,)
    results, reports = [], []
    for month in args.month:
        for mode in modes:
            cfg = MarketRunConfig(
                month=month,
                mode=mode,
                nu=args.nu,
                zeta_range=tuple(args.zeta_range),
                seed=args.seed,
                share_units=args.share_units,
                anchor_2020=args.anchor_2020,
                max_iter=args.max_iter,
            )
            try:
                res = run_month(data, cfg)
            except MarketDataError as exc:
                # a range may start where no previous month exists
                if len(args.month) * len(modes) == 1:
                    raise
                print(f"{month} {mode}: skipped ({exc})", file=sys.stderr)
                continue
            results.append(res)
            reports.append(res.to_dict())
    _write_json(reports[0] if len(reports) == 1 else reports, args.out)
    if args.triples:
        write_share_triples(results, args.triples)
    return EXIT_OK if all(r.converged for r in results) else EXIT_NOT_CONVERGED


def cmd_validate(args):
    problems = validate_data(args.data_dir)
    for path in args.games:
        try:
            load_game(path)
        except (GameSchemaError, OSError, ValueError) as exc:
            problems.append(f"{path}: {exc}")
    for msg in problems:
        print(msg, file=sys.stderr)
    if not problems:
        print("ok")
    return EXIT_ERROR if problems else EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "market": cmd_market,
    "validate": cmd_validate,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits 0; usage errors exit 1
        return exc.code
    try:
        with threadpool_limits(limits=args.threads):
            return _COMMANDS[args.command](args)
    except (GameSchemaError, MarketDataError, ValueError, OSError, RuntimeError) as exc:
        print(f"stochlcp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
