"""Two-stage stochastic quadratic games solved as linear complementarity problems."""

from .bench import BenchRow, run_benchmark, write_bench_csv
from .game import (
    FirstStageParams,
    GameSchemaError,
    ScenarioData,
    TwoStageGame,
    assemble_big_lcp,
    build_scenario_matrix,
    check_diagonal_dominance,
    load_game,
    save_game,
)
from .generator import GeneratorSpec, generate_instance
from .lcp import (
    LcpConvergenceError,
    LcpError,
    LcpProblem,
    LcpSolution,
    NotPositiveDefiniteError,
    enumerate_active_sets,
    lcp_residual,
    solve_lcp_pd,
)
from .second_stage import least_norm_multiplier, perturbation_bound, solve_box_qp, solve_second_stage
from .solvers import ABASolver, EquilibriumSolution, PHASolver, SolverConfig, contraction_report, solve_aba, solve_pha

__version__ = "0.1.0"

__all__ = [
    "ABASolver",
    "BenchRow",
    "EquilibriumSolution",
    "FirstStageParams",
    "GameSchemaError",
    "GeneratorSpec",
    "LcpConvergenceError",
    "LcpError",
    "LcpProblem",
    "LcpSolution",
    "NotPositiveDefiniteError",
    "PHASolver",
    "ScenarioData",
    "SolverConfig",
    "TwoStageGame",
    "assemble_big_lcp",
    "build_scenario_matrix",
    "check_diagonal_dominance",
    "contraction_report",
    "enumerate_active_sets",
    "generate_instance",
    "lcp_residual",
    "least_norm_multiplier",
    "load_game",
    "perturbation_bound",
    "run_benchmark",
    "save_game",
    "solve_aba",
    "solve_box_qp",
    "solve_lcp_pd",
    "solve_pha",
    "solve_second_stage",
    "write_bench_csv",
]
