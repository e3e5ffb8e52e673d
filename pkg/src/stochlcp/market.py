"""Monthly oil-market calibration and share recovery.

A month is turned into a 15-producer game:

* first stage: ``c_i = k_i / share_i`` with ``k = (0.11, 0.115, 0.095, 0.1, ...)``,
  ``a_i = c_i`` except ``a_USA = 6 c_USA`` and ``a_Canada = 2 c_Canada``, and
  ``r`` from the schedule (zero where the schedule has no entry);
* scenarios: a historical day of the month's window is resampled, its
  demand and residual contributions move the prior-day price to
  ``alpha = alpha0 (1 + d + r)``, and ``gamma = |alpha - alpha0| / (xi eta)``
  with ``xi ~ U[0.99, 1.01]``; ``h = beta = zeta a`` with one ``zeta`` per run.

Data files (all CSV, see ``load_market_data``) ship in ``stochlcp/data``;
``STOCHLCP_DATA_DIR`` points the loaders elsewhere.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from ._validation import check_positive_int
from .game import FirstStageParams, ScenarioData, TwoStageGame
from .solvers import ABASolver, EquilibriumSolution, PHASolver, contraction_report

__all__ = [
    "PRODUCERS",
    "MarketDataError",
    "ProducerTable",
    "RSchedule",
    "PriceSeries",
    "MarketData",
    "MarketRunConfig",
    "MarketResult",
    "load_market_data",
    "calibrate_first_stage",
    "sample_scenarios",
    "build_month_game",
    "run_month",
    "share_rank_correlation",
    "write_share_triples",
    "validate_data",
    "default_data_dir",
]

PRODUCERS = (
    "Saudi Arabia",
    "Russia",
    "USA",
    "Iraq",
    "China",
    "Canada",
    "UAE",
    "Iran",
    "Kuwait",
    "Nigeria",
    "Mexico",
    "UK",
    "Venezuela",
    "Indonesia",
    "other",
)
_COST_SCALE = np.array([0.11, 0.115, 0.095] + [0.1] * 12)
_LINEAR_FACTOR = np.ones(15)
_LINEAR_FACTOR[2] = 6.0  # USA
_LINEAR_FACTOR[5] = 2.0  # Canada
GAMMA_FLOOR = 1e-12
SHARE_TOLERANCE = 0.5
DATA_ENV = "STOCHLCP_DATA_DIR"
MODES = ("in_sample", "out_of_sample")


class MarketDataError(ValueError):
    pass


def _month(text):
    try:
        return str(np.datetime64(text, "M"))
    except ValueError:
        raise MarketDataError(f"invalid month {text!r}, expected YYYY-MM") from None


def _prev_month(month):
    return str(np.datetime64(month, "M") - 1)


def _read_csv(path, columns, n_keys=1):
    path = Path(path)
    if not path.exists():
        raise MarketDataError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(columns) - set(reader.fieldnames or ())
        if missing:
            raise MarketDataError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    for i, row in enumerate(rows, start=2):
        for col in columns[n_keys:]:
            try:
                row[col] = float(row[col])
            except (TypeError, ValueError):
                raise MarketDataError(f"{path}:{i}: column {col!r} is not a number") from None
            if not np.isfinite(row[col]):
                raise MarketDataError(f"{path}:{i}: column {col!r} is not finite")
    return rows


@dataclass(frozen=True)
class ProducerTable:
    """Monthly market shares in percent, one row of 15 values per month."""

    producers: tuple
    shares: dict  # month -> ndarray (percent)

    def __post_init__(self):
        if tuple(self.producers) != PRODUCERS:
            raise MarketDataError(f"producers must be {list(PRODUCERS)}")
        for month, v in self.shares.items():
            if np.shape(v) != (len(PRODUCERS),):
                raise MarketDataError(f"month {month}: expected {len(PRODUCERS)} shares")

    def month(self, month) -> np.ndarray:
        month = _month(month)
        if month not in self.shares:
            raise MarketDataError(f"no market shares for {month}")
        return self.shares[month]

    def bad_months(self, tol=SHARE_TOLERANCE):
        return {m: float(v.sum()) for m, v in self.shares.items() if abs(v.sum() - 100.0) > tol}

    @classmethod
    def from_csv(cls, path):
        rows = _read_csv(path, ["producer", "month", "share_percent"], 2)
        return cls(PRODUCERS, _pivot(rows, "share_percent", path))


@dataclass(frozen=True)
class RSchedule:
    """Strategic-response values per month; months without rows mean ``r = 0``."""

    values: dict  # month -> ndarray

    def month(self, month) -> np.ndarray:
        return self.values.get(_month(month), np.zeros(len(PRODUCERS)))

    @classmethod
    def from_csv(cls, path):
        return cls(_pivot(_read_csv(path, ["producer", "month", "r_value"], 2), "r_value", path))


def _pivot(rows, col, path):
    index = {p: i for i, p in enumerate(PRODUCERS)}
    out: dict = {}
    for row in rows:
        if row["producer"] not in index:
            raise MarketDataError(f"{path}: unknown producer {row['producer']!r}")
        month = _month(row["month"])
        out.setdefault(month, np.full(len(PRODUCERS), np.nan))[index[row["producer"]]] = row[col]
    for month, v in out.items():
        if np.isnan(v).any():
            missing = [PRODUCERS[i] for i in np.flatnonzero(np.isnan(v))]
            raise MarketDataError(f"{path}: month {month} lacks {missing}")
    return out


@dataclass(frozen=True)
class PriceSeries:
    """Daily benchmark prices and fractional price-change contributions."""

    dates: np.ndarray  # datetime64[D], sorted
    prices: np.ndarray
    contrib_dates: np.ndarray
    demand: np.ndarray
    supply: np.ndarray
    residual: np.ndarray
    total_supply: dict  # month -> eta

    def window(self, month):
        """Contribution days of ``month`` with their prior-day price."""
        month = _month(month)
        sel = np.flatnonzero(self.contrib_dates.astype("datetime64[M]").astype(str) == month)
        # index of the last price strictly before each contribution day
        prior = np.searchsorted(self.dates, self.contrib_dates[sel], side="left") - 1
        keep = prior >= 0
        sel, prior = sel[keep], prior[keep]
        if not sel.size:
            raise MarketDataError(f"no price/contribution data for {month}")
        return self.prices[prior], self.demand[sel], self.residual[sel]

    def eta(self, month):
        month = _month(month)
        if month not in self.total_supply:
            raise MarketDataError(f"no total supply for {month}")
        return self.total_supply[month]

    def decomposition_error(self):
        """Largest ``|return - (d + s + r)|`` over days with a prior price."""
        idx = np.searchsorted(self.dates, self.contrib_dates)
        ok = (idx > 0) & (idx < len(self.dates))
        ok[ok] &= self.dates[idx[ok]] == self.contrib_dates[ok]
        ret = self.prices[idx[ok]] / self.prices[idx[ok] - 1] - 1.0
        total = self.demand[ok] + self.supply[ok] + self.residual[ok]
        return float(np.max(np.abs(ret - total))) if ok.any() else 0.0

    @classmethod
    def from_csv(cls, prices_path, contrib_path, supply_path):
        p = _read_csv(prices_path, ["date", "price"])
        c = _read_csv(contrib_path, ["date", "demand_contrib", "supply_contrib", "residual_contrib"])
        s = _read_csv(supply_path, ["month", "total_supply"])
        dates = np.array([r["date"] for r in p], dtype="datetime64[D]")
        order = np.argsort(dates, kind="stable")
        prices = np.array([r["price"] for r in p])[order]
        if np.any(prices <= 0):
            raise MarketDataError(f"{prices_path}: prices must be positive")
        cd = np.array([r["date"] for r in c], dtype="datetime64[D]")
        co = np.argsort(cd, kind="stable")
        supply = {_month(r["month"]): r["total_supply"] for r in s}
        if any(v <= 0 for v in supply.values()):
            raise MarketDataError(f"{supply_path}: total supply must be positive")
        return cls(
            dates=dates[order],
            prices=prices,
            contrib_dates=cd[co],
            demand=np.array([r["demand_contrib"] for r in c])[co],
            supply=np.array([r["supply_contrib"] for r in c])[co],
            residual=np.array([r["residual_contrib"] for r in c])[co],
            total_supply=supply,
        )


@dataclass(frozen=True)
class MarketData:
    shares: ProducerTable
    rsched: RSchedule
    prices: PriceSeries


def default_data_dir():
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("stochlcp") / "data"))


def load_market_data(data_dir=None) -> MarketData:
    """Read ``shares.csv``, ``r_schedule.csv``, ``prices.csv``,
    ``contributions.csv`` and ``supply.csv`` from ``data_dir``."""
    d = Path(data_dir) if data_dir is not None else default_data_dir()
    return MarketData(
        shares=ProducerTable.from_csv(d / "shares.csv"),
        rsched=RSchedule.from_csv(d / "r_schedule.csv"),
        prices=PriceSeries.from_csv(d / "prices.csv", d / "contributions.csv", d / "supply.csv"),
    )


@dataclass(frozen=True)
class MarketRunConfig:
    """Settings of one monthly run.

    ``share_units`` chooses whether the cost recipe divides by shares as
    fractions (default) or as percentages. ``anchor_2020`` selects the
    out-of-sample share month for 2020: ``"rolling"`` uses the previous
    month, ``"fixed"`` always uses December 2019.
    """

    month: str
    mode: str = "in_sample"
    nu: int = 800
    zeta_range: tuple = (0.05, 0.1)
    seed: int = 0
    share_units: str = "fraction"
    anchor_2020: str = "rolling"
    max_iter: int = 400
    tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "month", _month(self.month))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        check_positive_int(self.nu, "nu")
        lo, hi = self.zeta_range
        if not 0 < lo <= hi < 1:
            raise ValueError("zeta_range must satisfy 0 < lo <= hi < 1")
        if self.share_units not in ("fraction", "percent"):
            raise ValueError("share_units must be 'fraction' or 'percent'")
        if self.anchor_2020 not in ("rolling", "fixed"):
            raise ValueError("anchor_2020 must be 'rolling' or 'fixed'")

    @property
    def share_month(self) -> str:
        """Month whose shares calibrate the costs."""
        if self.month >= "2020-01":
            if self.mode == "in_sample":
                return "2020-01"
            return "2019-12" if self.anchor_2020 == "fixed" else _prev_month(self.month)
        return self.month if self.mode == "in_sample" else _prev_month(self.month)

    @property
    def window_month(self) -> str:
        """Month whose trading days feed the scenario resampling."""
        return self.month if self.mode == "in_sample" else _prev_month(self.month)


def calibrate_first_stage(shares: ProducerTable, rsched: RSchedule, cfg: MarketRunConfig) -> FirstStageParams:
    lam = shares.month(cfg.share_month)
    if np.any(lam <= 0):
        raise MarketDataError(f"shares for {cfg.share_month} must be positive")
    if cfg.share_units == "fraction":
        lam = lam / 100.0
    c = _COST_SCALE / lam
    return FirstStageParams(c=c, a=_LINEAR_FACTOR * c, r=rsched.month(cfg.month))


def sample_scenarios(prices: PriceSeries, cfg: MarketRunConfig, a, rng=None):
    """Return ``(scenarios, draws)`` where ``draws`` records ``zeta``, ``xi`` and the resampled days."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    alpha0, d, r = prices.window(cfg.window_month)
    eta = prices.eta(cfg.window_month)
    zeta = rng.uniform(*cfg.zeta_range)
    days = rng.integers(0, len(alpha0), size=cfg.nu)
    xi = rng.uniform(0.99, 1.01, size=cfg.nu)
    alpha = alpha0[days] * (1.0 + d[days] + r[days])
    gamma = np.maximum(np.abs(alpha - alpha0[days]) / (xi * eta), GAMMA_FLOOR)
    h = beta = zeta * np.asarray(a, float)
    scenarios = tuple(ScenarioData(h=h, gamma=g, rho=-al + beta) for al, g in zip(alpha, gamma))
    return scenarios, {"zeta": zeta, "xi": xi, "days": days, "alpha": alpha, "gamma": gamma}


def build_month_game(data: MarketData, cfg: MarketRunConfig):
    rng = np.random.default_rng(cfg.seed)
    fs = calibrate_first_stage(data.shares, data.rsched, cfg)
    scenarios, draws = sample_scenarios(data.prices, cfg, fs.a, rng)
    return TwoStageGame(fs, scenarios), draws


@dataclass
class MarketResult:
    month: str
    mode: str
    computed_shares: np.ndarray
    real_shares: np.ndarray
    equilibrium: EquilibriumSolution
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.equilibrium.converged

    def to_dict(self) -> dict:
        real = self.real_shares
        return {
            "month": self.month,
            "mode": self.mode,
            "computed_shares": dict(zip(PRODUCERS, map(float, self.computed_shares))),
            "real_shares": None if real is None else dict(zip(PRODUCERS, map(float, real))),
            "residual": self.equilibrium.residual,
            "iterations": self.equilibrium.n_iter,
            "converged": self.converged,
            "algorithm": self.equilibrium.algorithm,
            "diagnostics": self.diagnostics,
        }


def run_month(data: MarketData, cfg: MarketRunConfig, contraction_samples: int = 16) -> MarketResult:
    """Calibrate, solve with ABA (PHA if ABA does not converge) and report shares."""
    game, draws = build_month_game(data, cfg)
    sol = ABASolver(max_iter=cfg.max_iter, tol_residual=cfg.tol, tol_step=cfg.tol).fit(game).solution_
    attempts = {"aba": {"converged": sol.converged, "iterations": sol.n_iter, "residual": sol.residual}}
    if not sol.converged:
        pha = PHASolver(max_iter=cfg.max_iter, tol_residual=cfg.tol, tol_step=cfg.tol).fit(game).solution_
        attempts["pha"] = {"converged": pha.converged, "iterations": pha.n_iter, "residual": pha.residual}
        if pha.converged or pha.residual < sol.residual:
            sol = pha
    try:
        real = data.shares.month(cfg.month)
    except MarketDataError:
        real = None
    diagnostics = {
        "attempts": attempts,
        "share_month": cfg.share_month,
        "window_month": cfg.window_month,
        "zeta": float(draws["zeta"]),
        "gamma_range": [float(draws["gamma"].min()), float(draws["gamma"].max())],
    }
    if contraction_samples:
        diagnostics["contraction"] = contraction_report(game, n_samples=contraction_samples, random_state=cfg.seed)
    return MarketResult(cfg.month, cfg.mode, sol.shares, real, sol, diagnostics)


def share_rank_correlation(result: MarketResult) -> float:
    if result.real_shares is None:
        raise MarketDataError(f"no real shares for {result.month}")
    return float(spearmanr(result.computed_shares, result.real_shares).statistic)


def write_share_triples(results, path_or_file) -> None:
    """CSV ``month,producer,real,in_sample,out_of_sample``; missing runs stay empty."""
    table: dict = {}
    for res in results:
        entry = table.setdefault(res.month, {"real": res.real_shares})
        entry[res.mode] = res.computed_shares
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "producer", "real", "in_sample", "out_of_sample"])
        for month in sorted(table):
            entry = table[month]
            for i, name in enumerate(PRODUCERS):
                cells = [entry.get(k) for k in ("real", "in_sample", "out_of_sample")]
                w.writerow([month, name] + ["" if v is None else f"{v[i]:.4f}" for v in cells])
    finally:
        if own:
            fh.close()


def validate_data(data_dir=None) -> list[str]:
    """Schema and consistency problems of a data directory; empty when clean."""
    d = Path(data_dir) if data_dir is not None else default_data_dir()
    problems = []
    try:
        shares = ProducerTable.from_csv(d / "shares.csv")
        for month, total in sorted(shares.bad_months().items()):
            problems.append(f"shares for {month} sum to {total:.2f}, outside 100 +/- {SHARE_TOLERANCE}")
    except MarketDataError as exc:
        problems.append(str(exc))
    try:
        RSchedule.from_csv(d / "r_schedule.csv")
    except MarketDataError as exc:
        problems.append(str(exc))
    try:
        prices = PriceSeries.from_csv(d / "prices.csv", d / "contributions.csv", d / "supply.csv")
        err = prices.decomposition_error()
        # contributions are stored to about 1e-6
        if err > 1e-4:
            problems.append(f"price change differs from the sum of contributions by {err:.2e}")
    except MarketDataError as exc:
        problems.append(str(exc))
    return problems
