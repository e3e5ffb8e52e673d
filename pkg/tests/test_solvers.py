import io

import numpy as np
import pytest
from sklearn.base import clone

from stochlcp.game import FirstStageParams, ScenarioData, TwoStageGame, assemble_big_lcp, game_to_dict
from stochlcp.generator import GeneratorSpec, generate_instance
from stochlcp.lcp import enumerate_active_sets, lcp_residual
from stochlcp.solvers import (
    ABASolver,
    PHASolver,
    SolverConfig,
    contraction_report,
    default_initial_point,
    solve_aba,
    solve_pha,
    write_trace_csv,
)

TIGHT = dict(tol_residual=1e-11, tol_step=1e-300)


def trivial_game():
    fs = FirstStageParams(c=[1.0, 2.0], a=[0.5, 0.0], r=[0.0, 0.0])
    return TwoStageGame(fs, (ScenarioData(h=[1.0, 1.0], gamma=1.0, rho=[0.0, 2.0]),) * 3)


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.max_iter, cfg.tol_residual, cfg.tol_step, cfg.pha_step_t) == (400, 1e-6, 1e-6, 1.0)

    @pytest.mark.parametrize("kw", [dict(max_iter=0), dict(tol_residual=0.0), dict(tol_step=-1.0), dict(pha_step_t=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_estimator_validates_on_fit(self):
        with pytest.raises(ValueError):
            ABASolver(max_iter=0).fit(trivial_game())


class TestInitialPoint:
    def test_nonnegative_a(self):
        np.testing.assert_array_equal(default_initial_point(trivial_game()), 0.0)

    def test_scalar(self):
        g = TwoStageGame(FirstStageParams(c=[1.0], a=[-2.0], r=[0.0]), (ScenarioData(h=[1.0], gamma=1.0, rho=[0.0]),))
        np.testing.assert_allclose(default_initial_point(g), [2.0])

    def test_generator_instances(self):
        for seed in range(100):
            x0 = default_initial_point(generate_instance(GeneratorSpec(5, 1, seed)))
            assert np.all(np.isfinite(x0)) and np.all(x0 >= 0)


class TestTrivial:
    @pytest.mark.parametrize("cls", [ABASolver, PHASolver])
    def test_zero_solution_in_one_iteration(self, cls):
        est = cls().fit(trivial_game())
        assert est.converged_ and est.n_iter_ == 1 and est.termination_reason_ == "residual"
        np.testing.assert_array_equal(est.x_, 0.0)
        np.testing.assert_array_equal(est.y_, 0.0)
        np.testing.assert_array_equal(est.s_, 0.0)


class TestOracle:
    @pytest.mark.parametrize("seed", range(3))
    def test_small_instance(self, seed):
        g = generate_instance(GeneratorSpec(2, 2, seed))
        (ref,) = enumerate_active_sets(assemble_big_lcp(g), include=range(2))
        assert np.all(ref.v[:2] > 0)
        for est in (ABASolver(max_iter=2000, **TIGHT), PHASolver(max_iter=20000, **TIGHT)):
            est.fit(g)
            np.testing.assert_allclose(g.pack(est.x_, est.y_, est.s_), ref.v, atol=1e-8)


class TestTable1Regime:
    def test_aba_iterations(self):
        for seed in range(3):
            est = ABASolver().fit(generate_instance(GeneratorSpec(5, 50, seed)))
            assert est.converged_ and est.residual_ <= 1e-6
            assert 5 <= est.n_iter_ <= 60

    def test_pha_small(self):
        est = PHASolver().fit(generate_instance(GeneratorSpec(5, 5, 0)))
        assert est.converged_ and est.n_iter_ <= 400

    def test_solvers_agree(self):
        g = generate_instance(GeneratorSpec(5, 5, 1))
        a = ABASolver(**TIGHT).fit(g)
        p = PHASolver(max_iter=5000, tol_residual=1e-9, tol_step=1e-300).fit(g)
        assert a.converged_ and p.converged_
        np.testing.assert_allclose(a.x_, p.x_, atol=1e-4)


class TestInvariants:
    def test_solution_feasibility_and_residual(self):
        g = generate_instance(GeneratorSpec(3, 4, 5))
        for est in (ABASolver(), PHASolver()):
            sol = est.fit(g).solution_
            assert np.all(sol.x >= 0) and np.all(sol.S >= 0)
            assert np.all(sol.Y >= 0)
            # PHA bounds y by the scenario copies of x; the gap to the average is part of the residual
            slack = 1e-12 if est.algorithm == "aba" else sol.residual
            assert np.all(sol.Y <= sol.x[None] + slack)
            ref = lcp_residual(assemble_big_lcp(g), g.pack(sol.x, sol.Y, sol.S))
            assert sol.residual == pytest.approx(ref, rel=1e-9, abs=1e-14)
            assert len(sol.trace) == sol.n_iter

    def test_pha_multiplier_mean_is_zero(self):
        est = PHASolver().fit(generate_instance(GeneratorSpec(5, 20, 3)))
        assert len(est.multiplier_drift_) == est.n_iter_
        assert est.multiplier_drift_.max() <= 1e-12
        assert np.abs(est.w_.mean(axis=0)).max() <= 1e-12

    def test_pha_rejects_unbalanced_w0(self):
        g = generate_instance(GeneratorSpec(2, 3, 0))
        with pytest.raises(ValueError):
            PHASolver(w0=np.ones((3, 2))).fit(g)

    def test_aba_step_stop_implies_small_residual(self):
        for seed in range(5):
            est = ABASolver(tol_residual=1e-300, tol_step=1e-6).fit(generate_instance(GeneratorSpec(4, 10, seed)))
            assert est.termination_reason_ == "step"
            assert est.residual_ <= 10 * 1e-6

    def test_cap_is_flagged_not_raised(self):
        est = PHASolver(max_iter=3).fit(generate_instance(GeneratorSpec(5, 5, 0)))
        assert not est.converged_ and est.termination_reason_ == "max_iter" and est.n_iter_ == 3

    def test_unique_limit_from_different_starts(self):
        g = generate_instance(GeneratorSpec(4, 6, 2))
        a = ABASolver(**TIGHT).fit(g)
        b = ABASolver(x0=np.full(4, 3.0), **TIGHT).fit(g)
        assert np.all(a.x_ > 0)
        np.testing.assert_allclose(a.x_, b.x_, atol=1e-6)

    def test_contraction_implies_monotone_error(self):
        for seed in range(5):
            g = generate_instance(GeneratorSpec(3, 4, seed))
            rep = contraction_report(g)
            assert rep["exact"] and rep["value"] < 1
            est = ABASolver(store_history=True, **TIGHT).fit(g)
            assert np.all(est.x_ > 0)
            err = [np.linalg.norm(x - est.x_) for x in est.x_history_[:-1]]
            err = [e for e in err if e > 1e-9]
            assert all(b < a for a, b in zip(err[1:], err[2:]))

    def test_contraction_report_sampled(self):
        rep = contraction_report(generate_instance(GeneratorSpec(10, 3, 0)), n_samples=16)
        assert not rep["exact"] and rep["value"] > 0 and "lower bound" in rep["note"]


class TestEstimatorApi:
    def test_params_round_trip(self):
        est = PHASolver(max_iter=7, step_t=0.5)
        params = est.get_params()
        assert params["max_iter"] == 7 and params["step_t"] == 0.5
        assert clone(est).get_params() == params
        est.set_params(max_iter=9)
        assert est.max_iter == 9

    def test_predict_returns_shares(self):
        est = ABASolver().fit(generate_instance(GeneratorSpec(4, 3, 0)))
        shares = est.predict()
        assert shares.sum() == pytest.approx(100.0) and np.all(shares >= 0)

    def test_fit_accepts_dict(self):
        g = generate_instance(GeneratorSpec(3, 3, 0))
        a = ABASolver().fit(game_to_dict(g))
        np.testing.assert_array_equal(a.x_, ABASolver().fit(g).x_)

    def test_fit_rejects_other_types(self):
        with pytest.raises(TypeError):
            ABASolver().fit([1, 2, 3])

    def test_functional_wrappers(self):
        g = generate_instance(GeneratorSpec(3, 3, 0))
        cfg = SolverConfig(max_iter=50)
        assert solve_aba(g, cfg).algorithm == "aba"
        assert solve_pha(g, cfg).n_iter <= 50

    def test_repeat_runs_are_identical(self):
        g = generate_instance(GeneratorSpec(5, 10, 4))
        a = PHASolver(n_threads=1).fit(g)
        b = PHASolver(n_threads=1).fit(g)
        np.testing.assert_array_equal(a.x_, b.x_)
        assert a.n_iter_ == b.n_iter_

    def test_trace_csv(self):
        est = ABASolver().fit(generate_instance(GeneratorSpec(2, 2, 0)))
        buf = io.StringIO()
        write_trace_csv(est.trace_, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iteration,residual,step_norm,elapsed_seconds"
        assert len(lines) == est.n_iter_ + 1
