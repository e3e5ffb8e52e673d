"""Benchmark harness: ABA against PHA on seeded generator grids.

Each grid cell ``(J, nu)`` draws ``repetitions`` instances with seeds
``base_seed + k`` and reports per-algorithm means of iterations, wall-clock
seconds and final residual, plus the mean residual at the common initial
point.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import check_positive_int
from .generator import GeneratorSpec, generate_instance
from .solvers import ABASolver, PHASolver, SolverConfig

__all__ = ["BenchRow", "CSV_HEADER", "run_benchmark", "write_bench_csv", "parse_grid"]

CSV_HEADER = ["J", "nu", "dim", "aba_iter", "aba_cpu", "aba_res", "pha_iter", "pha_cpu", "pha_res", "init_res"]


@dataclass(frozen=True)
class BenchRow:
    J: int
    nu: int
    dim: int
    aba_iter: float
    aba_cpu: float
    aba_res: float
    pha_iter: float
    pha_cpu: float
    pha_res: float
    init_res: float
    aba_converged: int = 0
    pha_converged: int = 0
    aba_failures: int = 0
    pha_failures: int = 0
    repetitions: int = 0
    pha_max_drift: float = 0.0  # largest |mean_l w_l| seen in any PHA iteration
    cpu_reliable: bool = True


def parse_grid(text: str) -> list[tuple[int, int]]:
    """``"5:5,10:100"`` -> ``[(5, 5), (10, 100)]``."""
    grid = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        try:
            J, nu = (int(v) for v in item.split(":"))
        except ValueError:
            raise ValueError(f"grid entry {item!r} is not of the form J:nu") from None
        grid.append((check_positive_int(J, "J"), check_positive_int(nu, "nu")))
    return grid


def _mean(values):
    return float(np.mean(values)) if values else math.nan


def _run_cell(J, nu, repetitions, base_seed, cfg, n_threads):
    stats = {name: {"iter": [], "cpu": [], "res": [], "conv": 0, "fail": 0} for name in ("aba", "pha")}
    init = []
    drift = 0.0
    with threadpool_limits(limits=n_threads):
        for k in range(repetitions):
            game = generate_instance(GeneratorSpec(J, nu, base_seed + k))
            solvers = {
                "aba": ABASolver(max_iter=cfg.max_iter, tol_residual=cfg.tol_residual, tol_step=cfg.tol_step),
                "pha": PHASolver(
                    max_iter=cfg.max_iter,
                    tol_residual=cfg.tol_residual,
                    tol_step=cfg.tol_step,
                    step_t=cfg.pha_step_t,
                ),
            }
            for name, est in solvers.items():
                st = stats[name]
                t0 = time.perf_counter()
                try:
                    est.fit(game)
                except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError):
                    st["fail"] += 1
                    continue
                st["cpu"].append(time.perf_counter() - t0)
                st["iter"].append(est.n_iter_)
                st["res"].append(est.residual_)
                st["conv"] += int(est.converged_)
                if name == "aba":
                    init.append(est.solution_.initial_residual)
                else:
                    drift = max(drift, float(est.multiplier_drift_.max(initial=0.0)))
    a, p = stats["aba"], stats["pha"]
    return BenchRow(
        J=J,
        nu=nu,
        dim=J * (2 * nu + 1),
        aba_iter=_mean(a["iter"]),
        aba_cpu=_mean(a["cpu"]),
        aba_res=_mean(a["res"]),
        pha_iter=_mean(p["iter"]),
        pha_cpu=_mean(p["cpu"]),
        pha_res=_mean(p["res"]),
        init_res=_mean(init),
        aba_converged=a["conv"],
        pha_converged=p["conv"],
        aba_failures=a["fail"],
        pha_failures=p["fail"],
        repetitions=repetitions,
        pha_max_drift=drift,
    )


def run_benchmark(
    grid, repetitions: int = 10, base_seed: int = 0, cfg: SolverConfig = None, n_threads=None, n_jobs: int = 1
):
    """Run both solvers on every grid cell.

    Solver exceptions are counted in ``aba_failures``/``pha_failures`` and
    excluded from the means; a cell where every run failed reports NaN.
    With ``n_jobs > 1`` cells run in separate processes and the rows are
    marked ``cpu_reliable=False``.
    """
    check_positive_int(repetitions, "repetitions")
    check_positive_int(n_jobs, "n_jobs")
    cfg = cfg or SolverConfig()
    grid = [(check_positive_int(J, "J"), check_positive_int(nu, "nu")) for J, nu in grid]
    if n_jobs == 1:
        return [_run_cell(J, nu, repetitions, base_seed, cfg, n_threads) for J, nu in grid]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futures = [pool.submit(_run_cell, J, nu, repetitions, base_seed, cfg, n_threads or 1) for J, nu in grid]
        rows = [f.result() for f in futures]
    return [BenchRow(**{**r.__dict__, "cpu_reliable": False}) for r in rows]


def _fmt(value):
    return repr(float(value))


def write_bench_csv(rows, path_or_file, include_timing: bool = True) -> None:
    """Write rows under ``CSV_HEADER``.

    Floats use the shortest round-trip form. With ``include_timing=False``
    the CPU columns are left empty so repeated runs compare byte for byte.
    """
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            cpu = (lambda v: f"{v:.4f}") if include_timing else (lambda v: "")
            w.writerow(
                [
                    r.J,
                    r.nu,
                    r.dim,
                    _fmt(r.aba_iter),
                    cpu(r.aba_cpu),
                    _fmt(r.aba_res),
                    _fmt(r.pha_iter),
                    cpu(r.pha_cpu),
                    _fmt(r.pha_res),
                    _fmt(r.init_res),
                ]
            )
    finally:
        if own:
            fh.close()
