"""Equilibrium solvers for the scenario-based two-stage LCP.

Two algorithms, both exposed as estimators with ``fit(game)``:

``ABASolver``
    Alternates between the scenario box QPs (with least-norm multipliers)
    for the current production ``x`` and a J-dimensional first-stage LCP
    driven by the average multiplier.
``PHASolver``
    Progressive hedging: one proximal 3J-dimensional LCP per scenario,
    averaging of the first-stage copies and a multiplier update that keeps
    the scenario multipliers mean-zero.

Both stop when the natural residual of the assembled problem drops to
``tol_residual``, when consecutive iterates differ by at most ``tol_step``,
or after ``max_iter`` iterations. Hitting the cap is reported through
``converged_``, not raised.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from threadpoolctl import threadpool_limits

from ._validation import check_game, check_positive, check_positive_int
from .game import TwoStageGame
from .lcp import solve_lcp_batch
from .second_stage import QP_TOL, least_norm_multiplier_batch, solve_box_qp_batch

__all__ = [
    "SolverConfig",
    "TraceRow",
    "EquilibriumSolution",
    "ABASolver",
    "PHASolver",
    "default_initial_point",
    "solve_aba",
    "solve_pha",
    "contraction_report",
    "write_trace_csv",
]

_INNER_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 400
    tol_residual: float = 1e-6
    tol_step: float = 1e-6
    pha_step_t: float = 1.0

    def __post_init__(self):
        check_positive_int(self.max_iter, "max_iter")
        check_positive(self.tol_residual, "tol_residual")
        check_positive(self.tol_step, "tol_step")
        check_positive(self.pha_step_t, "pha_step_t")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    residual: float
    step_norm: float
    elapsed_seconds: float


@dataclass
class EquilibriumSolution:
    x: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    residual: float
    n_iter: int
    converged: bool
    termination_reason: str
    algorithm: str
    trace: list = field(default_factory=list)
    initial_residual: float = float("nan")

    @property
    def shares(self) -> np.ndarray:
        total = self.x.sum()
        return 100.0 * self.x / total if total > 0 else np.zeros_like(self.x)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "converged": self.converged,
            "termination_reason": self.termination_reason,
            "n_iter": self.n_iter,
            "residual": self.residual,
            "initial_residual": self.initial_residual,
            "x": self.x.tolist(),
            "y": self.Y.tolist(),
            "s": self.S.tolist(),
        }


def write_trace_csv(trace, path_or_file) -> None:
    """Write ``iteration,residual,step_norm,elapsed_seconds`` rows."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual", "step_norm", "elapsed_seconds"])
        for row in trace:
            w.writerow([row.iteration, repr(row.residual), repr(row.step_norm), f"{row.elapsed_seconds:.6f}"])
    finally:
        if own:
            fh.close()


def default_initial_point(game: TwoStageGame) -> np.ndarray:
    """``max(0, -(C + r e')^{-1} a)``."""
    fs = game.first_stage
    try:
        return np.maximum(0.0, -np.linalg.solve(fs.jacobian, fs.a))
    except np.linalg.LinAlgError as exc:
        raise ValueError("C + r e' is singular; no default initial point") from exc


def _scenario_hessians(game):
    J = game.J
    hess = np.zeros((game.nu, J, J))
    hess += game.gamma[:, None, None]
    idx = np.arange(J)
    hess[:, idx, idx] += game.h + game.gamma[:, None]
    return hess


class _EquilibriumSolver(BaseEstimator):
    algorithm = ""

    def _check_params(self):
        return SolverConfig(
            max_iter=self.max_iter,
            tol_residual=self.tol_residual,
            tol_step=self.tol_step,
            pha_step_t=getattr(self, "step_t", 1.0),
        )

    def _initial_x(self, game):
        if self.x0 is None:
            return default_initial_point(game)
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (game.J,) or np.any(x0 < 0) or not np.all(np.isfinite(x0)):
            raise ValueError(f"x0 must be a nonnegative vector of length {game.J}")
        return x0.copy()

    def fit(self, game, y=None):
        """Compute an equilibrium of ``game`` (a TwoStageGame or its dict form)."""
        game = check_game(game)
        cfg = self._check_params()
        with threadpool_limits(limits=self.n_threads):
            sol = self._solve(game, cfg)
        self.solution_ = sol
        self.x_ = sol.x
        self.y_ = sol.Y
        self.s_ = sol.S
        self.residual_ = sol.residual
        self.n_iter_ = sol.n_iter
        self.converged_ = sol.converged
        self.termination_reason_ = sol.termination_reason
        self.trace_ = sol.trace
        return self

    def predict(self, game=None):
        """Market shares in percent implied by the fitted production."""
        return self.solution_.shares

    def _finish(self, game, x, Y, S, k, reason, trace, init_res):
        return EquilibriumSolution(
            x=x,
            Y=Y,
            S=S,
            residual=game.residual(x, Y, S),
            n_iter=k,
            converged=reason != "max_iter",
            termination_reason=reason,
            algorithm=self.algorithm,
            trace=trace,
            initial_residual=init_res,
        )


class ABASolver(_EquilibriumSolver):
    """Alternating block algorithm.

    Parameters
    ----------
    max_iter, tol_residual, tol_step : stopping rules.
    qp_tol : float
        Fixed-point tolerance of the scenario QPs.
    x0 : array-like, optional
        Initial production; defaults to ``default_initial_point``.
    n_threads : int, optional
        Cap on BLAS threads during ``fit``.
    store_history : bool
        Keep every first-stage iterate in ``x_history_``.
    """

    algorithm = "aba"

    def __init__(
        self,
        max_iter=400,
        tol_residual=1e-6,
        tol_step=1e-6,
        qp_tol=QP_TOL,
        x0=None,
        n_threads=None,
        store_history=False,
    ):
        self.max_iter = max_iter
        self.tol_residual = tol_residual
        self.tol_step = tol_step
        self.qp_tol = qp_tol
        self.x0 = x0
        self.n_threads = n_threads
        self.store_history = store_history

    def _solve(self, game, cfg):
        fs = game.first_stage
        h, gam, rho = game.h, game.gamma, game.rho
        x = self._initial_x(game)
        Y = np.zeros((game.nu, game.J))
        init_res = game.residual(x, Y, np.zeros_like(Y))
        history = [x.copy()]
        trace = []
        prev = None
        start = time.perf_counter()
        reason = "max_iter"
        for k in range(1, cfg.max_iter + 1):
            Y, _ = solve_box_qp_batch(h, gam, rho, x[None, :], tol=self.qp_tol, y0=Y)
            S = least_norm_multiplier_batch(h, gam, rho, x[None, :], Y)
            v = game.pack(x, Y, S)
            res = game.residual(x, Y, S)
            step = float(np.linalg.norm(v - prev)) if prev is not None else float("inf")
            trace.append(TraceRow(k, res, step, time.perf_counter() - start))
            if res <= cfg.tol_residual:
                reason = "residual"
                break
            if step <= cfg.tol_step:
                reason = "step"
                break
            prev = v
            q = fs.a - S.mean(axis=0)
            xs, _, _ = solve_lcp_batch(
                fs.jacobian[None], q[None], v0=x[None], tol=_INNER_TOL * (1 + np.abs(q).max())
            )
            x = xs[0]
            history.append(x.copy())
        if self.store_history:
            self.x_history_ = np.array(history)
        return self._finish(game, x, Y, S, k, reason, trace, init_res)


class PHASolver(_EquilibriumSolver):
    """Progressive hedging with proximal step ``step_t``.

    ``v0`` (shape ``(nu, 2J)``) and ``w0`` (shape ``(nu, J)``, rows averaging
    to zero) override the zero defaults. ``multiplier_drift_`` records
    ``max |mean_l w_l|`` after every iteration.
    """

    algorithm = "pha"

    def __init__(
        self,
        max_iter=400,
        tol_residual=1e-6,
        tol_step=1e-6,
        step_t=1.0,
        x0=None,
        v0=None,
        w0=None,
        n_threads=None,
    ):
        self.max_iter = max_iter
        self.tol_residual = tol_residual
        self.tol_step = tol_step
        self.step_t = step_t
        self.x0 = x0
        self.v0 = v0
        self.w0 = w0
        self.n_threads = n_threads

    def _solve(self, game, cfg):
        J, nu, t = game.J, game.nu, cfg.pha_step_t
        fs = game.first_stage
        x = self._initial_x(game)
        V = np.zeros((nu, 2 * J)) if self.v0 is None else np.array(self.v0, dtype=float).reshape(nu, 2 * J)
        W = np.zeros((nu, J)) if self.w0 is None else np.array(self.w0, dtype=float).reshape(nu, J)
        if np.abs(W.mean(axis=0)).max() > 1e-12:
            raise ValueError("w0 rows must average to zero")

        eye = np.eye(J)
        sub = np.zeros((nu, 3 * J, 3 * J))
        sub[:, :J, :J] = fs.jacobian + t * eye
        sub[:, :J, 2 * J :] = -eye
        sub[:, J : 2 * J, J : 2 * J] = _scenario_hessians(game) + t * eye
        sub[:, J : 2 * J, 2 * J :] = eye
        sub[:, 2 * J :, :J] = eye
        sub[:, 2 * J :, J : 2 * J] = -eye
        sub[:, 2 * J :, 2 * J :] = t * eye

        init_res = game.residual(x, V[:, :J], V[:, J:])
        warm = np.hstack([np.tile(x, (nu, 1)), V])
        prev = np.concatenate([game.pack(x, V[:, :J], V[:, J:]), W.reshape(-1)])
        trace, drift = [], []
        start = time.perf_counter()
        reason = "max_iter"
        for k in range(1, cfg.max_iter + 1):
            q = np.hstack([fs.a + W - t * x[None, :], game.rho - t * V[:, :J], -t * V[:, J:]])
            tol = _INNER_TOL * (1 + np.abs(q).max())
            sol, _, _ = solve_lcp_batch(sub, q, v0=warm, tol=tol)
            warm = sol
            xhat, V = sol[:, :J], sol[:, J:]
            x = xhat.mean(axis=0)
            W = W + t * (xhat - x[None, :])
            drift.append(float(np.abs(W.mean(axis=0)).max()))
            Y, S = V[:, :J], V[:, J:]
            # the PHA state is (z, w): a still z with moving w is not a fixed point
            v = np.concatenate([game.pack(x, Y, S), W.reshape(-1)])
            res = game.residual(x, Y, S)
            step = float(np.linalg.norm(v - prev))
            prev = v
            trace.append(TraceRow(k, res, step, time.perf_counter() - start))
            if res <= cfg.tol_residual:
                reason = "residual"
                break
            if step <= cfg.tol_step:
                reason = "step"
                break
        self.multiplier_drift_ = np.array(drift)
        self.w_ = W
        # y_l is bounded by its scenario copy xhat_l; any excess over the averaged x
        # shows up in the residual through the x - y block
        return self._finish(game, x, V[:, :J].copy(), V[:, J:].copy(), k, reason, trace, init_res)


def _config_kwargs(cfg):
    d = asdict(cfg or SolverConfig())
    d.pop("pha_step_t")
    return d


def solve_aba(game: TwoStageGame, cfg: SolverConfig = None, **kwargs) -> EquilibriumSolution:
    return ABASolver(**_config_kwargs(cfg), **kwargs).fit(game).solution_


def solve_pha(game: TwoStageGame, cfg: SolverConfig = None, **kwargs) -> EquilibriumSolution:
    step_t = (cfg or SolverConfig()).pha_step_t
    return PHASolver(**_config_kwargs(cfg), step_t=step_t, **kwargs).fit(game).solution_


def _principal_inverse_norms(M, masks):
    """``||M_K^{-1}||_2`` for each mask row; nan where ``M_K`` is singular."""
    sizes = masks.sum(axis=1)
    B = np.where(masks[:, :, None] & masks[:, None, :], M[None], 0.0)
    sv = np.linalg.svd(B, compute_uv=False)
    smallest = sv[np.arange(len(masks)), sizes - 1]
    ok = smallest > 1e-12 * sv[:, 0]
    return np.where(ok, 1.0 / np.where(ok, smallest, 1.0), np.nan)


def contraction_report(game: TwoStageGame, n_samples: int = 64, random_state=0, exact_limit: int = 4096):
    """Estimate ``||C2^{-1}||^2 * sigma`` from the ABA local convergence theory.

    ``C2' C2`` is the symmetric part of ``C + r e'`` and ``sigma`` averages,
    over scenarios, the largest inverse norm of a nonsingular principal
    submatrix of the scenario matrix. All ``2^(2J)`` submatrices are checked
    when ``2^(2J) <= exact_limit``; otherwise ``n_samples`` random index sets
    plus the full set are checked, which yields a lower bound.
    """
    fs = game.first_stage
    J = game.J
    lam = np.linalg.eigvalsh(0.5 * (fs.jacobian + fs.jacobian.T))[0]
    c2inv_sq = float(1.0 / lam) if lam > 0 else float("inf")
    n = 2 * J
    exact = (1 << n) <= exact_limit
    rng = np.random.default_rng(random_state)
    if exact:
        codes = np.arange(1, 1 << n)
        base_masks = (codes[:, None] & (1 << np.arange(n))) != 0
    hess = _scenario_hessians(game)
    sigmas = np.empty(game.nu)
    for k in range(game.nu):
        M = np.block([[hess[k], np.eye(J)], [-np.eye(J), np.zeros((J, J))]])
        if exact:
            masks = base_masks
        else:
            masks = rng.random((n_samples, n)) < 0.5
            masks = np.vstack([np.ones(n, dtype=bool), masks[masks.any(axis=1)]])
        sigmas[k] = np.nanmax(_principal_inverse_norms(M, masks))
    sigma = float(sigmas.mean())
    return {
        "c2_inv_norm_sq": c2inv_sq,
        "sigma": sigma,
        "value": c2inv_sq * sigma,
        "exact": exact,
        "note": "exact maximum" if exact else "sampled lower bound on sigma",
    }
