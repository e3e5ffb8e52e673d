"""Scenario subproblem: box-constrained QP and least-norm multipliers.

For fixed production ``x >= 0`` the scenario LCP is the optimality system of

    min 0.5 y'(H + gamma ee')y + rho'y   s.t.  0 <= y <= x

whose minimizer ``y`` together with ``s = max(0, -rho - (H + gamma ee')y)``
is the least-norm solution of the scenario LCP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_finite_vector, check_nonnegative, check_positive
from .game import ScenarioData, build_scenario_matrix
from .lcp import lcp_residual

__all__ = [
    "SecondStageSolution",
    "QPConvergenceError",
    "solve_box_qp",
    "solve_box_qp_batch",
    "least_norm_multiplier",
    "least_norm_multiplier_batch",
    "solve_second_stage",
    "perturbation_bound",
]

QP_TOL = 1e-10
QP_MAX_ITER = 10_000
_POLISH_EVERY = 25
_TIE = 1e-9


class QPConvergenceError(RuntimeError):
    def __init__(self, message, y=None, residual=np.inf):
        super().__init__(message)
        self.y = y
        self.residual = residual


@dataclass(frozen=True)
class SecondStageSolution:
    y: np.ndarray
    s: np.ndarray
    kkt_residual: float


def _grad(h, gamma, rho, Y):
    return (h + gamma[:, None]) * Y + gamma[:, None] * Y.sum(axis=1, keepdims=True) + rho


def _fixed_point_residual(h, gamma, rho, X, Y):
    return np.linalg.norm(Y - np.clip(Y - _grad(h, gamma, rho, Y), 0.0, X), axis=1)


def _polish(h, gamma, rho, X, Y):
    """Exact solve on the current active set.

    With the bound-active coordinates fixed, the free block of the Hessian is
    ``diag(d_F) + gamma ee'`` and Sherman-Morrison gives the solution.
    """
    g = _grad(h, gamma, rho, Y)
    lower = (Y <= 0.0) & (g >= 0.0)
    upper = (Y >= X) & (g <= 0.0)
    free = ~(lower | upper)
    d = h + gamma[:, None]
    fixed_sum = np.where(upper, X, 0.0).sum(axis=1)
    b = np.where(free, -rho - gamma[:, None] * fixed_sum[:, None], 0.0)
    dinv = np.where(free, 1.0 / d, 0.0)
    u = dinv * b
    denom = 1.0 + gamma * dinv.sum(axis=1)
    yF = u - dinv * (gamma * u.sum(axis=1) / denom)[:, None]
    Z = np.where(free, yF, np.where(upper, X, 0.0))
    return np.clip(Z, 0.0, X)


def solve_box_qp_batch(h, gamma, rho, X, tol=QP_TOL, max_iter=QP_MAX_ITER, y0=None):
    """Solve one box QP per row of ``h``/``rho`` with FISTA plus active-set polishing.

    Parameters
    ----------
    h, rho : arrays of shape (nu, J)
    gamma : array of shape (nu,)
    X : array broadcastable to (nu, J)
        Upper bounds, nonnegative.

    Returns
    -------
    Y : ndarray of shape (nu, J)
    residual : ndarray of shape (nu,)
        ``||y - clip(y - grad(y), 0, x)||`` per scenario.
    """
    h = np.asarray(h, float)
    rho = np.asarray(rho, float)
    gamma = np.asarray(gamma, float)
    nu, J = rho.shape
    X = np.broadcast_to(np.asarray(X, float), (nu, J))
    lip = (h + gamma[:, None]).max(axis=1) + gamma * J
    step = (1.0 / lip)[:, None]

    Y = np.zeros((nu, J)) if y0 is None else np.clip(y0, 0.0, X)
    res = _fixed_point_residual(h, gamma, rho, X, Y)
    active = np.flatnonzero(res > tol)
    Z = Y.copy()
    t = np.ones(nu)
    it = 0
    while active.size and it < max_iter:
        hA, gA, rA, XA = h[active], gamma[active], rho[active], X[active]
        YA, ZA, tA, sA = Y[active], Z[active], t[active], step[active]
        for _ in range(_POLISH_EVERY):
            Ynew = np.clip(ZA - sA * _grad(hA, gA, rA, ZA), 0.0, XA)
            # gradient-based adaptive restart
            restart = np.sum((ZA - Ynew) * (Ynew - YA), axis=1) > 0
            tA = np.where(restart, 1.0, tA)
            tnext = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tA**2))
            ZA = Ynew + ((tA - 1.0) / tnext)[:, None] * (Ynew - YA)
            YA, tA = Ynew, tnext
        it += _POLISH_EVERY
        resA = _fixed_point_residual(hA, gA, rA, XA, YA)
        P = _polish(hA, gA, rA, XA, YA)
        resP = _fixed_point_residual(hA, gA, rA, XA, P)
        better = resP < resA
        YA[better] = P[better]
        ZA[better] = P[better]
        resA = np.minimum(resA, resP)
        Y[active], Z[active], t[active] = YA, ZA, tA
        res[active] = resA
        active = active[resA > tol]
    if active.size:
        raise QPConvergenceError(
            f"box QP did not reach tol={tol:g} in {max_iter} iterations "
            f"({active.size} scenarios, worst residual {res[active].max():.3e})",
            y=Y,
            residual=res,
        )
    return Y, res


def least_norm_multiplier_batch(h, gamma, rho, X, Y):
    h = np.asarray(h, float)
    gamma = np.asarray(gamma, float)
    X = np.broadcast_to(np.asarray(X, float), Y.shape)
    S = np.maximum(0.0, -_grad(h, gamma, np.asarray(rho, float), Y))
    # the multiplier of y <= x can only be positive where the bound binds
    slack = X - Y > _TIE * (1.0 + X)
    return np.where(slack, 0.0, S)


def solve_box_qp(s: ScenarioData, x, tol: float = QP_TOL) -> np.ndarray:
    """Unique minimizer of ``0.5 y'(H + gamma ee')y + rho'y`` over ``[0, x]``."""
    x = as_finite_vector(x, "x", size=s.J)
    check_nonnegative(x, "x")
    check_positive(tol, "tol")
    Y, _ = solve_box_qp_batch(s.h[None], np.array([s.gamma]), s.rho[None], x[None], tol=tol)
    return Y[0]


def least_norm_multiplier(s: ScenarioData, x, y) -> np.ndarray:
    """``max(0, -rho - (H + gamma ee')y)``, zeroed where ``y`` is strictly below ``x``."""
    x = as_finite_vector(x, "x", size=s.J)
    y = as_finite_vector(y, "y", size=s.J)
    return least_norm_multiplier_batch(s.h[None], np.array([s.gamma]), s.rho[None], x[None], y[None])[0]


def solve_second_stage(s: ScenarioData, x, tol: float = QP_TOL) -> SecondStageSolution:
    y = solve_box_qp(s, x, tol)
    mult = least_norm_multiplier(s, x, y)
    res = lcp_residual(build_scenario_matrix(s, x), np.concatenate([y, mult]))
    return SecondStageSolution(y=y, s=mult, kkt_residual=res)


def perturbation_bound(s: ScenarioData, s_bar: ScenarioData, x, Gamma: float) -> float:
    """Upper bound on ``||y* - u||`` between the QP solutions for two data sets.

    ``Gamma * (||rho - rho_bar|| + ||x|| ||H - H_bar|| + J ||x|| |gamma - gamma_bar|)``
    where ``||H - H_bar||`` is the largest diagonal difference. Requires
    ``Gamma * gamma >= 1`` for both data sets.
    """
    x = as_finite_vector(x, "x", size=s.J)
    check_nonnegative(x, "x")
    if s_bar.J != s.J:
        raise ValueError("scenario dimensions differ")
    # Gamma = 1 / gamma evaluated in floating point can land just below 1
    if Gamma * s.gamma < 1 - 1e-12 or Gamma * s_bar.gamma < 1 - 1e-12:
        raise ValueError(
            f"Gamma={Gamma} violates Gamma * gamma >= 1 (gamma={s.gamma}, gamma_bar={s_bar.gamma})"
        )
    dH = np.max(np.abs((s.h + s.gamma) - (s_bar.h + s_bar.gamma)))
    xn = np.linalg.norm(x)
    return float(
        Gamma
        * (np.linalg.norm(s.rho - s_bar.rho) + xn * dH + s.J * xn * abs(s.gamma - s_bar.gamma))
    )
