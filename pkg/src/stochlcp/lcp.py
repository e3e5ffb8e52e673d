"""Dense linear complementarity problems.

Find ``v >= 0`` with ``Mv + q >= 0`` and ``v'(Mv + q) = 0``.

The solver is a semismooth Newton method on the natural (min) map, batched
so that many small problems of equal size can be solved in one call. A
brute-force active-set enumeration is provided as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LcpProblem",
    "LcpSolution",
    "LcpError",
    "LcpConvergenceError",
    "NotPositiveDefiniteError",
    "lcp_residual",
    "natural_residual",
    "solve_lcp_pd",
    "solve_lcp_batch",
    "enumerate_active_sets",
]

_NEWTON_MAX_ITER = 200
_MAX_LS_FAILURES = 5
_PGS_SWEEPS = 50
_ARMIJO = 1e-4


class LcpError(RuntimeError):
    """Base class for LCP solver failures.

    Carries the best iterate found and its natural-map residual.
    """

    def __init__(self, message, v=None, residual=np.inf):
        super().__init__(message)
        self.v = v
        self.residual = residual


class LcpConvergenceError(LcpError):
    pass


class NotPositiveDefiniteError(LcpError):
    """The matrix failed the positive-definiteness probe and the solve stalled."""


@dataclass(frozen=True)
class LcpProblem:
    M: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        q = np.array(self.q, dtype=float).reshape(-1)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"M must be square, got shape {M.shape}")
        if M.shape[0] != q.shape[0]:
            raise ValueError(f"M is {M.shape[0]}x{M.shape[1]} but q has length {q.shape[0]}")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(q))):
            raise ValueError("M and q must be finite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class LcpSolution:
    v: np.ndarray
    residual: float
    n_iter: int = 0


def natural_residual(M, q, v):
    """Euclidean norm of ``min(Mv + q, v)``; no validation."""
    return float(np.linalg.norm(np.minimum(M @ v + q, v)))


def lcp_residual(prob: LcpProblem, v) -> float:
    """Natural-map residual ``||min(Mv + q, v)||``; zero iff ``v`` solves the LCP."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != prob.n:
        raise ValueError(f"v has length {v.shape[0]}, problem has dimension {prob.n}")
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    return natural_residual(prob.M, prob.q, v)


def _min_sym_eig(M):
    return np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))[..., 0]


def _pgs(M, q, v, sweeps):
    # projected Gauss-Seidel, in place over a batch
    n = v.shape[1]
    diag = np.einsum("bii->bi", M)
    for _ in range(sweeps):
        for i in range(n):
            r = np.einsum("bj,bj->b", M[:, i, :], v) + q[:, i]
            v[:, i] = np.maximum(0.0, v[:, i] - r / diag[:, i])
    return v


def _batched_solve(A, b):
    """Batched ``A x = b``; singular members are isolated by bisection."""
    try:
        return np.linalg.solve(A, b[..., None])[..., 0], np.ones(len(A), dtype=bool)
    except np.linalg.LinAlgError:
        if len(A) == 1:
            return np.zeros_like(b), np.zeros(1, dtype=bool)
    mid = len(A) // 2
    x1, ok1 = _batched_solve(A[:mid], b[:mid])
    x2, ok2 = _batched_solve(A[mid:], b[mid:])
    return np.concatenate([x1, x2]), np.concatenate([ok1, ok2])


def solve_lcp_batch(M, q, v0=None, tol=1e-10, max_iter=_NEWTON_MAX_ITER, check_pd=True):
    """Solve a batch of LCPs ``(M[b], q[b])`` of equal dimension.

    Semismooth Newton on ``min(v, Mv + q)`` with Armijo backtracking. An
    element whose line search fails gets projected Gauss-Seidel sweeps; after
    five failures it stays on Gauss-Seidel.

    Parameters
    ----------
    M : array of shape (b, n, n)
    q : array of shape (b, n)
    v0 : array of shape (b, n), optional
        Warm start.
    tol : float
        Absolute residual target per problem.

    Returns
    -------
    v : ndarray of shape (b, n)
    residual : ndarray of shape (b,)
    n_iter : int
        Newton iterations used by the slowest element.

    Raises
    ------
    NotPositiveDefiniteError
        Some element did not converge and its matrix failed the PD probe.
    LcpConvergenceError
        Some element did not converge within ``max_iter``.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    nb, n = q.shape
    v = np.zeros((nb, n)) if v0 is None else np.maximum(np.array(v0, dtype=float), 0.0)
    eye = np.eye(n)
    # round-off floor: an exact active-set solve cannot beat this
    scale = 1.0 + np.abs(q).max(axis=1) + np.abs(M).max(axis=(1, 2))
    floor = 1e-13 * scale * np.sqrt(n)
    fails = np.zeros(nb, dtype=int)
    prev_active = np.zeros((nb, n), dtype=bool)

    it = 0
    for it in range(1, max_iter + 1):
        w = np.einsum("bij,bj->bi", M, v) + q
        phi = np.minimum(v, w)
        res = np.linalg.norm(phi, axis=1)
        active = w < v
        stalled_exact = (active == prev_active).all(axis=1) & (res <= floor)
        todo = ~((res <= tol) | stalled_exact)
        if not todo.any():
            break
        prev_active = active
        idx = np.flatnonzero(todo)

        pgs_only = idx[fails[idx] > _MAX_LS_FAILURES]
        if pgs_only.size:
            v[pgs_only] = _pgs(M[pgs_only], q[pgs_only], v[pgs_only], _PGS_SWEEPS)
        idx = idx[fails[idx] <= _MAX_LS_FAILURES]
        if not idx.size:
            continue

        Mi, vi, phii = M[idx], v[idx], phi[idx]
        jac = np.where(active[idx][:, :, None], Mi, eye)
        d, ok = _batched_solve(jac, -phii)
        theta0 = 0.5 * res[idx] ** 2
        alpha = np.ones(len(idx))
        accepted = ~ok
        for _ in range(30):
            pending = ~accepted
            if not pending.any():
                break
            vt = vi[pending] + alpha[pending, None] * d[pending]
            wt = np.einsum("bij,bj->bi", Mi[pending], vt) + q[idx[pending]]
            th = 0.5 * np.sum(np.minimum(vt, wt) ** 2, axis=1)
            good = th <= (1.0 - 2.0 * _ARMIJO * alpha[pending]) * theta0[pending]
            sel = np.flatnonzero(pending)[good]
            vi[sel] = vt[good]
            accepted[sel] = True
            alpha[np.flatnonzero(pending)[~good]] *= 0.5
        failed = ~accepted | ~ok
        v[idx] = vi
        if failed.any():
            bad = idx[failed]
            fails[bad] += 1
            v[bad] = _pgs(M[bad], q[bad], v[bad], _PGS_SWEEPS)

    v = np.maximum(v, 0.0)
    w = np.einsum("bij,bj->bi", M, v) + q
    res = np.linalg.norm(np.minimum(v, w), axis=1)
    bad = res > np.maximum(tol, 10 * floor)
    if bad.any():
        worst = int(np.argmax(np.where(bad, res, -np.inf)))
        msg = f"{int(bad.sum())} of {nb} LCPs did not converge (worst residual {res[worst]:.3e})"
        if check_pd and np.any(_min_sym_eig(M[bad]) <= 0.0):
            raise NotPositiveDefiniteError(
                msg + "; matrix is not positive definite", v=v, residual=res
            )
        raise LcpConvergenceError(msg, v=v, residual=res)
    return v, res, it


def solve_lcp_pd(prob: LcpProblem, tol: float = 1e-10, v0=None) -> LcpSolution:
    """Solve an LCP whose matrix is positive definite (symmetry not required)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    v, res, it = solve_lcp_batch(
        prob.M[None], prob.q[None], None if v0 is None else np.asarray(v0, float)[None], tol=tol
    )
    return LcpSolution(v=v[0], residual=float(res[0]), n_iter=it)


def _subset_masks(free, n, chunk):
    bits = 1 << np.arange(len(free))
    for start in range(0, 1 << len(free), chunk):
        codes = np.arange(start, min(start + chunk, 1 << len(free)))
        K = np.zeros((len(codes), n), dtype=bool)
        K[:, free] = (codes[:, None] & bits) != 0
        yield K


def _repeated_singletons(K, nz):
    """Flag subsets whose principal submatrix is structurally singular.

    A column of ``M_KK`` that is entirely zero, or two columns whose only
    nonzero sits in the same row, make the submatrix singular.
    """
    Kf = K.astype(float)
    count = Kf @ nz
    row = (Kf * np.arange(1, K.shape[1] + 1)) @ nz
    bad = (K & (count == 0)).any(axis=1)
    single = K & (count == 1)
    key = np.where(single, row, -np.arange(1, K.shape[1] + 1))
    key.sort(axis=1)
    return bad | (np.diff(key, axis=1) == 0).any(axis=1)


def enumerate_active_sets(
    prob: LcpProblem, max_dim: int = 21, tol: float = 1e-10, include=()
) -> list[LcpSolution]:
    """Return every basic complementary solution of the LCP.

    For each index subset ``K`` solve ``(Mv + q)_K = 0`` with ``v = 0`` off
    ``K``; keep candidates with ``v >= 0``, ``Mv + q >= 0`` and residual at
    most ``tol``. Subsets whose principal submatrix is singular are skipped.
    Candidates within 1e-9 of each other are merged.

    ``include`` lists indices forced into every subset. Any solution whose
    components at those indices are positive is still found, at a fraction
    of the cost.
    """
    n = prob.n
    include = np.asarray(include, dtype=int)
    free = np.setdiff1d(np.arange(n), include)
    if len(free) > max_dim:
        raise ValueError(f"enumeration needs 2^{len(free)} solves; exceeds max_dim={max_dim}")
    M, q = prob.M, prob.q
    nz = (M != 0).astype(float)
    eye = np.eye(n)
    found: list[np.ndarray] = []
    for K in _subset_masks(free, n, chunk=1 << 14):
        K[:, include] = True
        K = K[~(_repeated_singletons(K, nz) | _repeated_singletons(K, nz.T))]
        if not len(K):
            continue
        A = np.where(K[:, :, None], M[None], eye[None])
        b = np.where(K, -q[None], 0.0)
        v, ok = _batched_solve(A, b)
        v = v[ok & np.isfinite(v).all(axis=1)]
        w = v @ M.T + q
        feas = (v >= -1e-12).all(axis=1) & (w >= -tol).all(axis=1)
        v = np.maximum(v[feas], 0.0)
        res = np.linalg.norm(np.minimum(v, v @ M.T + q), axis=1)
        for cand in v[res <= tol]:
            if not any(np.max(np.abs(cand - f)) <= 1e-9 for f in found):
                found.append(cand)
    return [LcpSolution(v=f, residual=natural_residual(M, q, f)) for f in found]
