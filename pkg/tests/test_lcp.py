import numpy as np
import pytest

from stochlcp.lcp import (
    LcpConvergenceError,
    LcpProblem,
    NotPositiveDefiniteError,
    enumerate_active_sets,
    lcp_residual,
    natural_residual,
    solve_lcp_batch,
    solve_lcp_pd,
)


def random_pd(rng, n):
    A = rng.standard_normal((n, n))
    skew = A - A.T
    L = rng.standard_normal((n, n))
    return L @ L.T + 0.5 * np.eye(n) + skew


class TestProblem:
    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            LcpProblem(np.ones((2, 3)), np.ones(2))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            LcpProblem(np.eye(2), np.ones(3))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            LcpProblem(np.array([[np.nan]]), np.ones(1))


class TestResidual:
    def test_exact_solution(self):
        assert lcp_residual(LcpProblem([[2.0]], [-1.0]), [0.5]) == 0.0

    def test_zero_with_nonnegative_q(self):
        assert lcp_residual(LcpProblem(np.eye(2), [1.0, 2.0]), [0.0, 0.0]) == 0.0

    def test_formula(self):
        assert lcp_residual(LcpProblem(np.eye(2), [-1.0, -1.0]), [0.0, 0.0]) == pytest.approx(np.sqrt(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            lcp_residual(LcpProblem(np.eye(2), [1.0, 1.0]), [0.0])

    def test_scaling_keeps_exact_solutions(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            prob = LcpProblem(random_pd(rng, n), rng.standard_normal(n))
            (sol,) = enumerate_active_sets(prob)
            lam = rng.uniform(0.1, 10.0, n)
            scaled = LcpProblem(lam[:, None] * prob.M, lam * prob.q)
            assert natural_residual(prob.M, prob.q, sol.v) < 1e-12
            assert lcp_residual(scaled, sol.v) <= 1e-11 * (1 + lam.max())
            (back,) = enumerate_active_sets(scaled)
            np.testing.assert_allclose(back.v, sol.v, atol=1e-9)


class TestSolvePd:
    def test_interior(self):
        sol = solve_lcp_pd(LcpProblem([[1.0]], [-2.0]))
        assert sol.v == pytest.approx([2.0]) and sol.residual == pytest.approx(0.0, abs=1e-12)

    def test_zero(self):
        sol = solve_lcp_pd(LcpProblem(np.eye(2), [3.0, 5.0]))
        np.testing.assert_array_equal(sol.v, [0.0, 0.0])

    def test_nonsymmetric_example_matches_oracle(self):
        prob = LcpProblem([[2.0, 1.0], [-1.0, 2.0]], [-1.0, -4.0])
        (ref,) = enumerate_active_sets(prob)
        np.testing.assert_allclose(solve_lcp_pd(prob).v, ref.v, atol=1e-8)

    def test_random_instances_match_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            prob = LcpProblem(random_pd(rng, n), rng.standard_normal(n) * 3)
            sols = enumerate_active_sets(prob)
            assert len(sols) == 1
            got = solve_lcp_pd(prob)
            np.testing.assert_allclose(got.v, sols[0].v, atol=1e-8)
            assert got.residual <= 1e-10

    def test_solution_invariants(self):
        rng = np.random.default_rng(1)
        prob = LcpProblem(random_pd(rng, 5), rng.standard_normal(5))
        sol = solve_lcp_pd(prob)
        assert np.all(sol.v >= 0)
        assert sol.residual == pytest.approx(lcp_residual(prob, sol.v), abs=1e-14)

    def test_not_positive_definite_reported(self):
        # -I has no solution for q = (-1, -1) reachable by the Newton iteration
        prob = LcpProblem(-np.eye(2), [1.0, -1.0])
        with pytest.raises(NotPositiveDefiniteError) as info:
            solve_lcp_pd(prob)
        assert info.value.v is not None

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        M = np.stack([random_pd(rng, 4) for _ in range(6)])
        q = rng.standard_normal((6, 4))
        v, res, _ = solve_lcp_batch(M, q)
        for k in range(6):
            np.testing.assert_allclose(v[k], solve_lcp_pd(LcpProblem(M[k], q[k])).v, atol=1e-10)
        assert np.all(res <= 1e-10)

    def test_iteration_cap_raises_convergence_error(self):
        # from v = 0 the first active-set guess is wrong, so one step is not enough
        M = np.array([[[2.0, 1.0], [-1.0, 2.0]]])
        with pytest.raises(LcpConvergenceError) as info:
            solve_lcp_batch(M, np.array([[-1.0, -4.0]]), max_iter=1)
        assert info.value.residual[0] > 0


class TestEnumeration:
    def test_trivial(self):
        (s,) = enumerate_active_sets(LcpProblem(np.eye(1), [1.0]))
        assert s.v == pytest.approx([0.0])
        (s,) = enumerate_active_sets(LcpProblem(np.eye(1), [-1.0]))
        assert s.v == pytest.approx([1.0])

    def test_scenario_matrix_at_zero_production(self):
        # with x = 0 the solution set is {(0, s): s >= -rho, s >= 0}; the vertex is s = max(0, -rho)
        J = 2
        H = np.array([[3.0, 1.0], [1.0, 4.0]])
        rho = np.array([-2.0, 1.0])
        M = np.block([[H, np.eye(J)], [-np.eye(J), np.zeros((J, J))]])
        sols = enumerate_active_sets(LcpProblem(M, np.concatenate([rho, np.zeros(J)])))
        assert sols
        for s in sols:
            np.testing.assert_allclose(s.v[:J], 0.0, atol=1e-12)
            assert np.all(s.v[J:] >= -rho - 1e-12)
        assert any(np.allclose(s.v[J:], [2.0, 0.0]) for s in sols)

    def test_returned_solutions_satisfy_lcp(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(1, 8))
            A = rng.standard_normal((n, n))
            prob = LcpProblem(A @ A.T, rng.standard_normal(n))
            for s in enumerate_active_sets(prob):
                w = prob.M @ s.v + prob.q
                tol = 1e-10
                assert np.all(s.v >= 0)
                assert np.all(w >= -tol * (1 + np.linalg.norm(prob.q)))
                assert abs(s.v @ w) <= tol * (1 + np.linalg.norm(s.v) * np.linalg.norm(prob.q))

    def test_degenerate_returns_all_vertices(self):
        # M = 0, q = 0: every v >= 0 solves, the basic candidate is v = 0 only
        sols = enumerate_active_sets(LcpProblem(np.zeros((2, 2)), np.zeros(2)))
        assert len(sols) == 1 and np.all(sols[0].v == 0)

    def test_include_restricts_search(self):
        prob = LcpProblem([[1.0, 0.0], [0.0, 1.0]], [-1.0, 2.0])
        assert enumerate_active_sets(prob, include=[1]) == []
        (s,) = enumerate_active_sets(prob, include=[0])
        np.testing.assert_allclose(s.v, [1.0, 0.0])

    def test_too_large(self):
        with pytest.raises(ValueError):
            enumerate_active_sets(LcpProblem(np.eye(25), np.ones(25)), max_dim=20)
