"""Fitting engines for the topic factor model.

Estimates rank-K factors of the frequency matrix X three ways: a plain
truncated SVD baseline, a one-step graph denoising followed by an SVD,
and the iterative graph-aligned SVD that alternates a graph
total-variation smoothing of the left factor with SVD updates of both
factors, choosing the penalty each iteration by spanning-tree
cross-validation.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import FrequencyMatrix
from .errors import DimensionMismatch, InvalidParameter, RankDeficientWarning
from .graph import incidence, mst_folds
from .tv_denoise import TvProblem, TvSolverCache, solve_tv

logger = logging.getLogger(__name__)

_ORTHO_TOL = 1e-10
_RANK_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Rank-K factors: orthonormal U (n x K), V (p x K), values desc."""

    U: np.ndarray
    V: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        s = np.asarray(self.singular_values, dtype=float)
        K = U.shape[1]
        if V.shape[1] != K or s.shape != (K,):
            raise DimensionMismatch("factor shapes disagree on K")
        for name, M in (("U", U), ("V", V)):
            gram = M.T @ M
            if np.max(np.abs(gram - np.eye(K))) > _ORTHO_TOL:
                raise InvalidParameter("%s columns are not orthonormal" % name)
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise InvalidParameter(
                "singular values must be nonnegative and nonincreasing"
            )
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "singular_values", s)

    @property
    def K(self):
        return self.U.shape[1]


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the iterative fitter.

    ``rho_grid``, ``eps`` and ``t_max`` default to data-driven values
    at fit time when left as None; ``cv_seed`` drives every random
    choice of the cross-validation (fold sources). The denoiser runs at
    ``tv_tol`` for the solutions that feed the SVD steps and at the
    looser ``cv_tol`` inside cross-validation, where only the ranking
    of penalties matters.
    """

    K: int
    rho_grid: tuple | None = None
    b: int = 5
    eps: float | None = None
    t_max: int | None = None
    cv_seed: int = 0
    tv_tol: float = 1e-7
    tv_max_iter: int = 5000
    cv_tol: float = 1e-3
    cv_max_iter: int = 600
    cv_every_iteration: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise InvalidParameter("K must be at least 1")
        if self.b < 2:
            raise InvalidParameter("fold count b must be at least 2")
        if self.rho_grid is not None:
            grid = tuple(float(r) for r in self.rho_grid)
            if not grid:
                raise InvalidParameter("rho_grid must be nonempty")
            if any(r <= 0 for r in grid):
                raise InvalidParameter("rho_grid entries must be positive")
            if any(a > b for a, b in zip(grid, grid[1:])):
                raise InvalidParameter("rho_grid must be sorted ascending")
            object.__setattr__(self, "rho_grid", grid)


@dataclass(frozen=True)
class IterationRecord:
    """One outer iteration: chosen penalty, score, CV curve, cost."""

    t: int
    rho: float
    score: float
    cv_errors: tuple | None
    solver_iterations: int
    solver_converged: bool
    seconds: float


@dataclass
class FitTrace:
    """Per-iteration records plus exit flags of one fit."""

    records: list = field(default_factory=list)
    converged: bool = False
    solver_all_converged: bool = True
    total_seconds: float = 0.0

    @property
    def rho_path(self):
        return [r.rho for r in self.records]

    @property
    def iterations(self):
        return len(self.records)

    def to_csv(self, path):
        n_grid = 0
        for r in self.records:
            if r.cv_errors is not None:
                n_grid = max(n_grid, len(r.cv_errors))
        with open(path, "w") as fh:
            head = ["t", "rho", "score", "solver_iterations", "solver_converged",
                    "seconds"]
            head += ["cverr_%d" % i for i in range(n_grid)]
            fh.write(",".join(head) + "\n")
            for r in self.records:
                row = [
                    "%d" % r.t,
                    "%.17g" % r.rho,
                    "%.17g" % r.score,
                    "%d" % r.solver_iterations,
                    "%d" % int(r.solver_converged),
                    "%.6f" % r.seconds,
                ]
                errs = r.cv_errors or ()
                row += ["%.17g" % e for e in errs]
                row += [""] * (n_grid - len(errs))
                fh.write(",".join(row) + "\n")


def default_t_max(n, N, K):
    """Iteration budget max(1, ceil(2 ln(n N / K^2)))."""
    value = 2.0 * math.log(max(n * N / (K * K), 1e-300))
    return max(1, math.ceil(value))


def default_rho_grid(K, n, N, size=12):
    """12 log-spaced penalties spanning [1e-4, 10] x sqrt(K log(n) / N)."""
    scale = math.sqrt(K * math.log(max(n, 2)) / N)
    return tuple(np.geomspace(1e-4 * scale, 10.0 * scale, size))


def _as_freqs(X):
    if isinstance(X, FrequencyMatrix):
        return X.freqs, X
    return np.asarray(X, dtype=float), None


def _sign_fix(U, V=None):
    """Make each U column's largest-magnitude entry positive."""
    for k in range(U.shape[1]):
        i = int(np.abs(U[:, k]).argmax())
        if U[i, k] < 0:
            U[:, k] = -U[:, k]
            if V is not None:
                V[:, k] = -V[:, k]
    return U, V


def initialize_V(X, K):
    """Spectral initialization of the right factor.

    Top-K eigenvectors of X'X - (n/N) D0, where D0 is the diagonal of
    column means; the subtraction debiases the multinomial noise
    variance. Documents are assumed to have (roughly) equal lengths;
    the mean length is used otherwise.
    """
    if not isinstance(X, FrequencyMatrix):
        raise InvalidParameter("initialize_V needs a FrequencyMatrix")
    n, p = X.n, X.p
    if not 1 <= K <= min(n, p):
        raise InvalidParameter("need 1 <= K <= min(n, p)")
    freqs = X.freqs
    d0 = freqs.mean(axis=0)
    M0 = freqs.T @ freqs - (n / X.mean_length) * np.diag(d0)
    eigvals, eigvecs = np.linalg.eigh(M0)
    order = np.argsort(eigvals)[::-1]
    top = order[:K]
    if np.sum(eigvals > _RANK_EPS) < K:
        warnings.warn(
            "fewer than K=%d informative eigenvalues; padding with trailing "
            "eigenvectors" % K,
            RankDeficientWarning,
        )
    V = eigvecs[:, top].copy()
    _sign_fix(V)
    return V


def _truncated_svd(M, K, warn_deficient=True):
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if warn_deficient and (s.shape[0] < K or s[K - 1] <= _RANK_EPS * max(s[0], 1.0)):
        warnings.warn("input has numerical rank below K=%d" % K,
                      RankDeficientWarning)
    U = U[:, :K].copy()
    V = Vt[:K].T.copy()
    s = s[:K].copy()
    _sign_fix(U, V)
    return U, V, s


def fit_plsi(X, K):
    """Plain rank-K SVD of the frequency matrix."""
    freqs, _ = _as_freqs(X)
    if not 1 <= K <= min(freqs.shape):
        raise InvalidParameter("need 1 <= K <= min(n, p)")
    U, V, s = _truncated_svd(freqs, K)
    return SvdFactors(U, V, s)


def _warm_tuple(sol, cache):
    """(U, Z, dual) start for the next solve; None when unavailable."""
    if sol is None or sol.dual is None:
        return None
    return (sol.U, cache.gamma @ sol.U, sol.dual)


def _is_fused(sol, cache):
    """True when the solution is constant on every graph component."""
    if cache.gamma.shape[0] == 0:
        return True
    GU = cache.gamma @ sol.U
    if GU.size == 0:
        return True
    return float(np.abs(GU).max()) < 1e-10


def _grid_chain(Y, grid, cache, tol, max_iter, prev=None):
    """Solve the whole penalty grid on one target, warm-started.

    Each penalty starts from the solution of the previous one (or from
    ``prev``, last call's chain on a nearby target). Once a solution is
    fully fused it is reused verbatim for every larger penalty — a
    fused optimum stays optimal as the penalty grows, its dual
    certificate only gains slack.
    """
    sols = []
    fused = None
    for gi, rho in enumerate(grid):
        if fused is not None:
            sols.append(fused)
            continue
        warm = None
        if prev is not None and prev[gi] is not None:
            warm = _warm_tuple(prev[gi], cache)
        if warm is None and sols:
            warm = _warm_tuple(sols[-1], cache)
        sol = solve_tv(TvProblem(Y, cache.incidence, rho), tol=tol,
                       max_iter=max_iter, cache=cache, warm=warm)
        sols.append(sol)
        if sol.converged and _is_fused(sol, cache):
            fused = sol
    return sols


def cross_validate_rho(X, g, V_prev, rho_grid, b, seed, tv_tol=1e-7,
                       tv_max_iter=5000, cache=None, base_chain=None):
    """Select the TV penalty by minimum-spanning-tree cross-validation.

    Nodes are split into ``b`` folds by tree distance mod b from a
    random source. Held-out rows are interpolated by the mean of their
    non-held-out graph neighbors, the denoiser runs on the interpolated
    matrix for every penalty in ``rho_grid``, and the error of a
    penalty is the squared Frobenius distance between the held-out rows
    of X and the denoised reconstruction. Ties prefer the smaller
    penalty. With ``V_prev=None`` the denoiser acts on all p columns
    and the reconstruction is the denoised matrix itself (the one-step
    criterion). ``base_chain`` optionally passes solutions of the same
    grid on the full data, used as warm starts for the fold solves.

    Returns
    -------
    (rho_hat, cv_errors) : (float, ndarray)
        The winning penalty and the per-penalty summed errors.
    """
    freqs, _ = _as_freqs(X)
    grid = [float(r) for r in rho_grid]
    if not grid:
        raise InvalidParameter("rho_grid must be nonempty")
    if any(r < 0 for r in grid):
        raise InvalidParameter("penalties must be nonnegative")
    if any(a > b_ for a, b_ in zip(grid, grid[1:])):
        raise InvalidParameter("rho_grid must be sorted ascending")
    if g.n_nodes != freqs.shape[0]:
        raise DimensionMismatch("graph and matrix disagree on n")
    if V_prev is not None:
        V_prev = np.asarray(V_prev, dtype=float)

    if cache is None:
        cache = TvSolverCache(incidence(g, weighted=False))
    folds = mst_folds(g, b, seed)
    neighbors = g.neighbors
    errors = np.zeros(len(grid))
    for k in range(b):
        held = np.flatnonzero(folds.fold_of == k)
        if held.size == 0:
            continue
        held_mask = np.zeros(g.n_nodes, dtype=bool)
        held_mask[held] = True
        Xk = freqs.copy()
        n_fallback = 0
        for i in held:
            avail = [j for j in neighbors[i] if not held_mask[j]]
            if avail:
                Xk[i] = freqs[avail].mean(axis=0)
            else:
                n_fallback += 1
        if n_fallback:
            logger.warning(
                "fold %d: %d held-out rows had no neighbor outside the fold; "
                "kept their observed rows", k, n_fallback,
            )
        Y = Xk @ V_prev if V_prev is not None else Xk
        sols = _grid_chain(Y, grid, cache, tv_tol, tv_max_iter,
                           prev=base_chain)
        for gi, sol in enumerate(sols):
            recon = sol.U @ V_prev.T if V_prev is not None else sol.U
            diff = freqs[held] - recon[held]
            errors[gi] += float(np.sum(diff * diff))
    best = int(np.argmin(errors))
    return grid[best], errors


def fit_gplsi(X, g, cfg):
    """Iterative graph-aligned SVD.

    Each iteration selects a penalty by cross-validation, denoises
    X V^{t-1} along the graph, and refreshes both factors by truncated
    SVDs; the loop stops when the projected reconstruction
    P_u X P_v stabilizes (score below eps) or the iteration budget
    t_max is reached. The final factors are polar-aligned so that
    U' X V is symmetric, its diagonal supplies the singular values, and
    columns are ordered by decreasing value.

    Returns
    -------
    (SvdFactors, FitTrace)
    """
    if not isinstance(X, FrequencyMatrix):
        raise InvalidParameter("fit_gplsi needs a FrequencyMatrix")
    freqs = X.freqs
    n, p = freqs.shape
    K = cfg.K
    if not 1 <= K <= min(n, p):
        raise InvalidParameter("need 1 <= K <= min(n, p)")
    if g.n_nodes != n:
        raise DimensionMismatch("graph has %d nodes for %d documents"
                                % (g.n_nodes, n))
    N_mean = X.mean_length
    eps = cfg.eps if cfg.eps is not None else 1e-6 * float(np.linalg.norm(freqs))
    t_max = cfg.t_max if cfg.t_max is not None else default_t_max(n, N_mean, K)
    grid = cfg.rho_grid if cfg.rho_grid is not None else default_rho_grid(
        K, n, N_mean)

    gamma = incidence(g, weighted=False)
    cache = TvSolverCache(gamma)
    seeds = np.random.default_rng(cfg.cv_seed).integers(0, 2**31 - 1, size=t_max)

    V = initialize_V(X, K)
    trace = FitTrace()
    start = time.perf_counter()
    prev_R = None
    rho_hat = grid[0]
    cv_errors = None
    U_hat = None
    chain = None
    final_sol = None
    for t in range(1, t_max + 1):
        t0 = time.perf_counter()
        Y = freqs @ V
        if cfg.cv_every_iteration or t == 1:
            chain = _grid_chain(Y, grid, cache, cfg.cv_tol, cfg.cv_max_iter,
                                prev=chain)
            rho_hat, errs = cross_validate_rho(
                freqs, g, V, grid, cfg.b, int(seeds[t - 1]),
                tv_tol=cfg.cv_tol, tv_max_iter=cfg.cv_max_iter, cache=cache,
                base_chain=chain,
            )
            cv_errors = tuple(float(e) for e in errs)
            warm = _warm_tuple(chain[grid.index(rho_hat)], cache)
        else:
            cv_errors = None
            warm = _warm_tuple(final_sol, cache)
        sol = solve_tv(
            TvProblem(Y, gamma, rho_hat),
            tol=cfg.tv_tol, max_iter=cfg.tv_max_iter, cache=cache, warm=warm,
        )
        final_sol = sol
        if not sol.converged:
            trace.solver_all_converged = False
        U_hat, _, _ = _truncated_svd(sol.U, K, warn_deficient=False)
        V, _, _ = _truncated_svd(freqs.T @ U_hat, K, warn_deficient=False)
        R = U_hat @ (U_hat.T @ freqs @ V) @ V.T
        score = float(np.linalg.norm(R - prev_R)) if prev_R is not None else np.inf
        trace.records.append(IterationRecord(
            t, float(rho_hat), score, cv_errors, sol.iterations, sol.converged,
            time.perf_counter() - t0,
        ))
        prev_R = R
        if score < eps:
            trace.converged = True
            break
    trace.total_seconds = time.perf_counter() - start

    # Polar alignment: rotate V so U' X V is symmetric PSD, read the
    # singular values off its diagonal, then order columns.
    B = U_hat.T @ freqs @ V
    P, _, Qt = np.linalg.svd(B)
    V = V @ Qt.T @ P.T
    lam = np.diag(U_hat.T @ freqs @ V).copy()
    U_hat = U_hat.copy()
    for k in range(K):
        if lam[k] < 0:
            U_hat[:, k] = -U_hat[:, k]
            lam[k] = -lam[k]
    order = np.argsort(-lam, kind="stable")
    U_hat = U_hat[:, order]
    V = V[:, order]
    lam = lam[order]
    _sign_fix(U_hat, V)
    return SvdFactors(U_hat, V, lam), trace


def fit_onestep(X, g, cfg, full_output=False):
    """One-step graph denoising of X followed by a rank-K SVD.

    The penalty is selected by a single cross-validation pass in which
    the denoiser acts on all p columns, then X itself is denoised once
    with the winner and factored.
    """
    if not isinstance(X, FrequencyMatrix):
        raise InvalidParameter("fit_onestep needs a FrequencyMatrix")
    freqs = X.freqs
    n, p = freqs.shape
    K = cfg.K
    if not 1 <= K <= min(n, p):
        raise InvalidParameter("need 1 <= K <= min(n, p)")
    if g.n_nodes != n:
        raise DimensionMismatch("graph has %d nodes for %d documents"
                                % (g.n_nodes, n))
    N_mean = X.mean_length
    grid = cfg.rho_grid if cfg.rho_grid is not None else default_rho_grid(
        K, n, N_mean)
    seed = int(np.random.default_rng(cfg.cv_seed).integers(0, 2**31 - 1))

    gamma = incidence(g, weighted=False)
    cache = TvSolverCache(gamma)
    start = time.perf_counter()
    grid = [float(r) for r in grid]
    chain = _grid_chain(freqs, grid, cache, cfg.cv_tol, cfg.cv_max_iter)
    rho_hat, errs = cross_validate_rho(
        freqs, g, None, grid, cfg.b, seed,
        tv_tol=cfg.cv_tol, tv_max_iter=cfg.cv_max_iter, cache=cache,
        base_chain=chain,
    )
    sol = solve_tv(TvProblem(freqs, gamma, rho_hat), tol=cfg.tv_tol,
                   max_iter=cfg.tv_max_iter, cache=cache,
                   warm=_warm_tuple(chain[grid.index(rho_hat)], cache))
    U, V, s = _truncated_svd(sol.U, K)
    factors = SvdFactors(U, V, s)
    if not full_output:
        return factors
    trace = FitTrace(converged=True, solver_all_converged=sol.converged)
    trace.records.append(IterationRecord(
        1, float(rho_hat), 0.0, tuple(float(e) for e in errs), sol.iterations,
        sol.converged, time.perf_counter() - start,
    ))
    trace.total_seconds = time.perf_counter() - start
    return factors, trace
