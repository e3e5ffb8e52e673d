"""Two-stage stochastic quadratic game and its complementarity blocks.

Each agent ``i`` pays a first-stage production cost
``0.5 c_i x_i^2 + a_i x_i + r_i x_i sum(x)`` and, in scenario ``l``, earns
``(alpha - gamma sum(y)) y_i - 0.5 h_i y_i^2 - beta_i y_i`` for supplying
``0 <= y_i <= x_i``. Scenarios are equally likely. Only ``rho = -alpha + beta``
enters the equilibrium conditions, so scenarios store ``rho``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._validation import as_finite_vector, check_nonnegative
from .lcp import LcpProblem

__all__ = [
    "FirstStageParams",
    "ScenarioData",
    "TwoStageGame",
    "GameSchemaError",
    "check_diagonal_dominance",
    "build_scenario_matrix",
    "assemble_big_lcp",
    "evaluate_profits",
    "best_response_profit",
    "game_to_dict",
    "game_from_dict",
    "save_game",
    "load_game",
]


class GameSchemaError(ValueError):
    """Malformed serialized game; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class FirstStageParams:
    c: np.ndarray
    a: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        c = as_finite_vector(self.c, "c")
        a = as_finite_vector(self.a, "a", size=c.size)
        r = as_finite_vector(self.r, "r", size=c.size)
        if np.any(c <= 0):
            raise ValueError("c must be positive elementwise")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "r", r)

    @property
    def J(self) -> int:
        return self.c.size

    @cached_property
    def jacobian(self) -> np.ndarray:
        """``C + r e'`` with ``C = diag(c + r)``."""
        return np.diag(self.c + self.r) + np.outer(self.r, np.ones(self.J))


@dataclass(frozen=True)
class ScenarioData:
    h: np.ndarray
    gamma: float
    rho: np.ndarray

    def __post_init__(self):
        h = as_finite_vector(self.h, "h")
        rho = as_finite_vector(self.rho, "rho", size=h.size)
        gamma = float(self.gamma)
        if np.any(h <= 0):
            raise ValueError("h must be positive elementwise")
        if not np.isfinite(gamma) or gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "gamma", gamma)

    @property
    def J(self) -> int:
        return self.h.size

    @property
    def H(self) -> np.ndarray:
        return np.diag(self.h + self.gamma)

    @property
    def hessian(self) -> np.ndarray:
        """``H + gamma e e'``, the second-stage QP Hessian."""
        return self.H + self.gamma * np.ones((self.J, self.J))


@dataclass(frozen=True)
class TwoStageGame:
    first_stage: FirstStageParams
    scenarios: tuple = field(default_factory=tuple)

    def __post_init__(self):
        scen = tuple(self.scenarios)
        if not scen:
            raise ValueError("a game needs at least one scenario")
        for k, s in enumerate(scen):
            if s.J != self.first_stage.J:
                raise ValueError(f"scenario {k} has dimension {s.J}, expected {self.first_stage.J}")
        object.__setattr__(self, "scenarios", scen)

    @property
    def J(self) -> int:
        return self.first_stage.J

    @property
    def nu(self) -> int:
        return len(self.scenarios)

    @property
    def dim(self) -> int:
        return self.J * (2 * self.nu + 1)

    # stacked scenario arrays for the vectorized solvers
    @cached_property
    def h(self) -> np.ndarray:
        return np.stack([s.h for s in self.scenarios])

    @cached_property
    def gamma(self) -> np.ndarray:
        return np.array([s.gamma for s in self.scenarios])

    @cached_property
    def rho(self) -> np.ndarray:
        return np.stack([s.rho for s in self.scenarios])

    def pack(self, x, Y, S) -> np.ndarray:
        """Stack ``(x, y_1, s_1, ..., y_nu, s_nu)`` into one vector."""
        return np.concatenate([np.asarray(x, float), np.hstack([Y, S]).reshape(-1)])

    def unpack(self, v):
        v = np.asarray(v, dtype=float)
        J = self.J
        blocks = v[J:].reshape(self.nu, 2 * J)
        return v[:J].copy(), blocks[:, :J].copy(), blocks[:, J:].copy()

    def residual_vector(self, x, Y, S) -> np.ndarray:
        """``min(v, Mv + q)`` for the assembled LCP, computed blockwise."""
        fs = self.first_stage
        x = np.asarray(x, float)
        Y = np.asarray(Y, float)
        S = np.asarray(S, float)
        w_x = fs.jacobian @ x - S.mean(axis=0) + fs.a
        w_y = (self.h + self.gamma[:, None]) * Y + self.gamma[:, None] * Y.sum(axis=1, keepdims=True)
        w_y += S + self.rho
        w_s = x[None, :] - Y
        return self.pack(np.minimum(x, w_x), np.minimum(Y, w_y), np.minimum(S, w_s))

    def residual(self, x, Y, S) -> float:
        """Natural-map residual of the assembled LCP without assembling it."""
        return float(np.linalg.norm(self.residual_vector(x, Y, S)))


def check_diagonal_dominance(fs: FirstStageParams):
    """Diagonal-dominance test for ``C + r e'``.

    Returns ``(holds, diagnostic)``. ``holds`` is the strict row test
    ``c_i + 2 r_i > 0.5 * sum_{j != i} |r_j + r_i|``. The diagnostic also
    reports whether the symmetric part ``C + (r e' + e r')/2`` admits a
    Cholesky factorization, which is what the solvers actually need.
    """
    r = fs.r
    off = 0.5 * np.abs(r[:, None] + r[None, :])
    np.fill_diagonal(off, 0.0)
    margins = fs.c + 2 * r - off.sum(axis=1)
    sym = 0.5 * (fs.jacobian + fs.jacobian.T)
    try:
        np.linalg.cholesky(sym)
        pd = True
    except np.linalg.LinAlgError:
        pd = False
    holds = bool(np.all(margins > 0))
    return holds, {
        "diagonally_dominant": holds,
        "row_margins": margins,
        "symmetric_part_pd": pd,
        "min_eig_symmetric_part": float(np.linalg.eigvalsh(sym)[0]),
    }


def build_scenario_matrix(s: ScenarioData, x) -> LcpProblem:
    """Scenario LCP ``M = [[H + gamma ee', I], [-I, 0]]``, ``q = (rho, x)``."""
    x = as_finite_vector(x, "x", size=s.J)
    check_nonnegative(x, "x")
    J = s.J
    M = np.block([[s.hessian, np.eye(J)], [-np.eye(J), np.zeros((J, J))]])
    return LcpProblem(M, np.concatenate([s.rho, x]))


def assemble_big_lcp(g: TwoStageGame) -> LcpProblem:
    """Dense ``n x n`` LCP with ``n = J(2 nu + 1)``.

    Variable order is ``(x, y_1, s_1, ..., y_nu, s_nu)``. Only meant for
    small instances and for checking the blockwise residual.
    """
    J, nu = g.J, g.nu
    n = g.dim
    M = np.zeros((n, n))
    q = np.zeros(n)
    M[:J, :J] = g.first_stage.jacobian
    q[:J] = g.first_stage.a
    eye = np.eye(J)
    for k, s in enumerate(g.scenarios):
        o = J + 2 * J * k
        M[:J, o + J : o + 2 * J] = -eye / nu
        M[o + J : o + 2 * J, :J] = eye
        blk = build_scenario_matrix(s, np.zeros(J)).M
        M[o : o + 2 * J, o : o + 2 * J] = blk
        q[o : o + J] = s.rho
    return LcpProblem(M, q)


def _split_alpha_beta(g, alpha, beta):
    if alpha is None and beta is None:
        return -g.rho, None
    alpha = np.broadcast_to(np.asarray(alpha, float), (g.nu,))
    beta = np.broadcast_to(np.asarray(beta, float), (g.nu, g.J))
    if not np.allclose(-alpha[:, None] + beta, g.rho, rtol=1e-9, atol=1e-9):
        raise ValueError("alpha and beta are inconsistent with the scenarios' rho = -alpha + beta")
    return alpha[:, None] - beta, (alpha, beta)


def evaluate_profits(g: TwoStageGame, x, Y, alpha=None, beta=None) -> np.ndarray:
    """Per-agent expected profit ``E[F_i(x, xi)] - theta_i(x)``.

    ``Y`` has one row per scenario. Revenue depends on ``alpha`` and ``beta``
    only through ``alpha - beta_i = -rho_i``; when given they are checked
    against the stored ``rho``.
    """
    x = as_finite_vector(x, "x", size=g.J)
    Y = np.asarray(Y, dtype=float).reshape(g.nu, g.J)
    if np.any(Y < -1e-12) or np.any(Y > x[None, :] + 1e-12):
        raise ValueError("second-stage supply must satisfy 0 <= y <= x")
    margin, _ = _split_alpha_beta(g, alpha, beta)
    price_drop = g.gamma[:, None] * Y.sum(axis=1, keepdims=True)
    F = (margin - price_drop) * Y - 0.5 * g.h * Y**2
    fs = g.first_stage
    theta = 0.5 * fs.c * x**2 + fs.a * x + fs.r * x * x.sum()
    return F.mean(axis=0) - theta


def best_response_profit(g: TwoStageGame, x, Y, agent: int, x_new: float, alpha=None, beta=None):
    """Profit of ``agent`` after moving its production to ``x_new``.

    The agent re-optimizes its own supply in every scenario against the
    others' fixed supplies; everyone else keeps ``x`` and ``Y``.
    """
    x = np.array(x, dtype=float)
    Y = np.array(Y, dtype=float).reshape(g.nu, g.J)
    margin, _ = _split_alpha_beta(g, alpha, beta)
    i = agent
    others = Y.sum(axis=1) - Y[:, i]
    yi = (margin[:, i] - g.gamma * others) / (g.h[:, i] + 2 * g.gamma)
    Y[:, i] = np.clip(yi, 0.0, x_new)
    x[i] = x_new
    return float(evaluate_profits(g, x, Y, alpha, beta)[i])


def game_to_dict(g: TwoStageGame) -> dict:
    fs = g.first_stage
    return {
        "J": g.J,
        "c": fs.c.tolist(),
        "a": fs.a.tolist(),
        "r": fs.r.tolist(),
        "scenarios": [
            {"h": s.h.tolist(), "gamma": s.gamma, "rho": s.rho.tolist()} for s in g.scenarios
        ],
    }


def _num_list(obj, field, J):
    if not isinstance(obj, list):
        raise GameSchemaError(field, "expected a list of numbers")
    if len(obj) != J:
        raise GameSchemaError(field, f"expected {J} entries, got {len(obj)}")
    for k, val in enumerate(obj):
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not np.isfinite(val):
            raise GameSchemaError(f"{field}[{k}]", f"not a finite number: {val!r}")
    return obj


def game_from_dict(d: dict) -> TwoStageGame:
    """Parse the JSON game schema ``{J, c, a, r, scenarios: [{h, gamma, rho}]}``."""
    if not isinstance(d, dict):
        raise GameSchemaError("<root>", "expected an object")
    for key in ("J", "c", "a", "r", "scenarios"):
        if key not in d:
            raise GameSchemaError(key, "missing")
    J = d["J"]
    if isinstance(J, bool) or not isinstance(J, int) or J < 1:
        raise GameSchemaError("J", f"must be a positive integer, got {J!r}")
    c, a, r = (_num_list(d[k], k, J) for k in ("c", "a", "r"))
    scen = d["scenarios"]
    if not isinstance(scen, list) or not scen:
        raise GameSchemaError("scenarios", "must be a non-empty list")
    parsed = []
    for k, s in enumerate(scen):
        where = f"scenarios[{k}]"
        if not isinstance(s, dict):
            raise GameSchemaError(where, "expected an object")
        for key in ("h", "gamma", "rho"):
            if key not in s:
                raise GameSchemaError(f"{where}.{key}", "missing")
        gam = s["gamma"]
        if isinstance(gam, bool) or not isinstance(gam, (int, float)) or not gam > 0:
            raise GameSchemaError(f"{where}.gamma", f"must be a positive number, got {gam!r}")
        h = _num_list(s["h"], f"{where}.h", J)
        if min(h) <= 0:
            raise GameSchemaError(f"{where}.h", "entries must be positive")
        parsed.append(ScenarioData(h=h, gamma=gam, rho=_num_list(s["rho"], f"{where}.rho", J)))
    if min(c) <= 0:
        raise GameSchemaError("c", "entries must be positive")
    return TwoStageGame(FirstStageParams(c=c, a=a, r=r), tuple(parsed))


def save_game(g: TwoStageGame, path) -> None:
    # json writes floats in shortest round-trip form, so reloading is exact
    Path(path).write_text(json.dumps(game_to_dict(g)))


def load_game(path) -> TwoStageGame:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GameSchemaError("<root>", f"invalid JSON: {exc}") from exc
    return game_from_dict(d)
