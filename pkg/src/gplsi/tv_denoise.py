"""Graph group-total-variation denoising.

Solves min_U ||U - Y||_F^2 + rho * ||Gamma U||_{2,1}, where the 2,1
norm sums the 2-norms of per-edge row differences. This is the
smoothing step of both the iterative fitter and the one-step fitter.

The solver is ADMM on the splitting Z = Gamma U: the U-update solves
(I + mu * Gamma'Gamma) U = Y + mu * Gamma'(Z - Lam) with a sparse LU
factorization computed once per penalty value, the Z-update is a
row-wise group soft-threshold, and the dual update is standard. The
penalty mu starts at rho and is adapted by residual balancing.
Convergence is declared when both residuals fall below a relatively
scaled tolerance; optimality is certified by the reported KKT residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidParameter, MaxIterationsExceeded, NumericalFailure
from .graph import IncidenceMatrix

# Row norms of Gamma U below this are treated as exactly fused.
_ZERO_ROW_NORM = 1e-10


def group_soft_threshold(v, tau):
    """Proximal operator of tau * ||.||_2.

    Returns the zero vector when ||v||_2 <= tau, otherwise shrinks v
    radially by tau.
    """
    if tau < 0:
        raise InvalidParameter("threshold tau must be nonnegative")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= tau:
        return np.zeros_like(v)
    return (1.0 - tau / norm) * v


def _group_soft_threshold_rows(M, tau):
    """Row-wise group soft-threshold of a 2-D array."""
    norms = np.linalg.norm(M, axis=1)
    scale = np.zeros_like(norms)
    np.divide(norms - tau, norms, out=scale, where=norms > tau)
    return M * scale[:, None]


@dataclass(frozen=True, eq=False)
class TvProblem:
    """Denoising target Y, incidence operator, and penalty rho."""

    Y: np.ndarray
    gamma: IncidenceMatrix
    rho: float

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        object.__setattr__(self, "Y", Y)
        if Y.ndim != 2:
            raise InvalidParameter("Y must be a 2-D matrix")
        if Y.shape[0] != self.gamma.n_nodes:
            raise InvalidParameter(
                "Y has %d rows but the graph has %d nodes"
                % (Y.shape[0], self.gamma.n_nodes)
            )
        if self.rho < 0:
            raise InvalidParameter("rho must be nonnegative")


@dataclass(frozen=True)
class TvSolution:
    """Solver output with residual certificates.

    ``kkt_residual`` is the stationarity gap ||2(U - Y) + Gamma' V||
    plus the complementarity gap of the 2,1 norm, evaluated at the
    tracked dual variable clipped into the rho ball; both terms are
    zero exactly at an optimum.
    """

    U: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    kkt_residual: float
    converged: bool
    objective: float
    trace: tuple
    dual: np.ndarray | None = None

    def save_trace(self, path):
        """Dump the accepted-objective trace as CSV for debugging."""
        with open(path, "w") as fh:
            fh.write("iteration,objective\n")
            for it, obj in self.trace:
                fh.write("%d,%.17g\n" % (it, obj))


class TvSolverCache:
    """Per-graph state reused across solves: factorizations and components.

    Factorizations of (I + mu * L) are keyed by mu, so a rho grid and
    residual-balancing revisits share work. Instances hold no
    problem-specific state and may be reused across many solves on the
    same incidence matrix.
    """

    def __init__(self, gamma):
        self.incidence = gamma
        self.gamma = sp.csr_matrix(gamma.gamma)
        self.gamma_t = self.gamma.T.tocsr()
        self.n = gamma.n_nodes
        self.m = gamma.m
        self.lap = (self.gamma_t @ self.gamma).tocsc()
        self._eye = sp.identity(self.n, format="csc")
        self._factors = {}
        self._components = None

    def factor(self, mu):
        f = self._factors.get(mu)
        if f is None:
            try:
                f = spla.splu((self._eye + mu * self.lap).tocsc())
            except RuntimeError as exc:  # pragma: no cover - rare
                raise NumericalFailure("sparse factorization failed") from exc
            self._factors[mu] = f
        return f

    def components(self):
        """Connected-component labels implied by the incidence rows."""
        if self._components is None:
            parent = np.arange(self.n)

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            coo = self.gamma.tocoo()
            by_row = {}
            for r, c in zip(coo.row, coo.col):
                by_row.setdefault(r, []).append(c)
            for cols in by_row.values():
                a = find(cols[0])
                for c in cols[1:]:
                    b = find(c)
                    if a != b:
                        parent[b] = a
            labels = np.array([find(i) for i in range(self.n)])
            _, labels = np.unique(labels, return_inverse=True)
            self._components = labels
        return self._components


def _component_means(Y, labels):
    n_comp = int(labels.max()) + 1
    sums = np.zeros((n_comp, Y.shape[1]))
    np.add.at(sums, labels, Y)
    counts = np.bincount(labels, minlength=n_comp).astype(float)
    return sums[labels] / counts[labels, None]


def _objective(U, Y, GU, rho):
    fit = U - Y
    return float(np.sum(fit * fit) + rho * np.linalg.norm(GU, axis=1).sum())


def _kkt_residual(U, Y, GU, dual_rows, rho, gamma_t):
    """Optimality certificate built from the tracked dual variable.

    The dual rows are clipped into the rho ball (feasible by
    construction), then the certificate is the stationarity gap
    ||2(U - Y) + Gamma' V|| plus the complementarity gap
    sum_e (rho ||(Gamma U)_e|| - <V_e, (Gamma U)_e>), which is
    nonnegative for feasible V. Both terms vanish exactly at an
    optimum, so a small value certifies near-optimality without
    classifying rows as fused or active.
    """
    if gamma_t.shape[1] == 0 or rho == 0.0 or dual_rows is None:
        return float(2.0 * np.linalg.norm(U - Y))
    lam_norms = np.linalg.norm(dual_rows, axis=1)
    scale = np.minimum(1.0, rho / np.maximum(lam_norms, rho))
    V = dual_rows * scale[:, None]
    stationarity = float(np.linalg.norm(2.0 * (U - Y) + gamma_t @ V))
    comp = float(rho * np.linalg.norm(GU, axis=1).sum() - np.sum(V * GU))
    return stationarity + max(comp, 0.0)


def solve_tv(problem, tol=1e-7, max_iter=5000, *, cache=None, warm=None,
             on_maxiter="return"):
    """Solve the graph TV proximal problem by ADMM.

    Parameters
    ----------
    problem : TvProblem
    tol : float
        Residual tolerance; primal and dual residuals are compared
        against ``tol`` scaled by the size of the current iterates.
    max_iter : int
    cache : TvSolverCache, optional
        Reusable per-graph factorizations (built ad hoc when omitted).
    warm : tuple (U, Z, dual), optional
        Starting point from a previous solve on the same graph; the
        third element is the unscaled dual returned in
        ``TvSolution.dual``.
    on_maxiter : {"return", "raise"}
        Whether hitting ``max_iter`` returns the best iterate flagged
        non-converged or raises MaxIterationsExceeded.

    Returns
    -------
    TvSolution
    """
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    Y = problem.Y
    rho = problem.rho
    if cache is None:
        cache = TvSolverCache(problem.gamma)
    if cache.m == 0 or rho == 0.0:
        return TvSolution(Y.copy(), 0, 0.0, 0.0, 0.0, True, 0.0, ((0, 0.0),))

    gamma_m = cache.gamma
    gamma_t = cache.gamma_t
    K = Y.shape[1]
    mu = rho
    if warm is not None:
        U, Z, lam0 = (np.array(a, dtype=float) for a in warm)
        Lam = lam0 / (2.0 * mu)
    else:
        U = Y.copy()
        Z = gamma_m @ U
        Lam = np.zeros((cache.m, K))
    factor = cache.factor(mu)
    best_obj = np.inf
    best_U = U
    trace = []
    converged = False
    r_pri = r_dual = np.inf
    GU = gamma_m @ U
    iteration = 0

    for iteration in range(1, max_iter + 1):
        rhs = Y + mu * (gamma_t @ (Z - Lam))
        U = factor.solve(rhs)
        GU = gamma_m @ U
        Z_prev = Z
        Z = _group_soft_threshold_rows(GU + Lam, rho / (2.0 * mu))
        Lam = Lam + GU - Z

        r_pri = float(np.linalg.norm(GU - Z))
        r_dual = float(2.0 * mu * np.linalg.norm(gamma_t @ (Z - Z_prev)))

        obj = _objective(U, Y, GU, rho)
        if obj < best_obj:
            best_obj = obj
            best_U = U
            trace.append((iteration, obj))

        eps_pri = tol * max(1.0, float(np.linalg.norm(GU)), float(np.linalg.norm(Z)))
        eps_dual = tol * max(1.0, float(2.0 * mu * np.linalg.norm(gamma_t @ Lam)))
        if r_pri <= eps_pri and r_dual <= eps_dual:
            converged = True
            break

        # Residual balancing keeps the penalty in a productive range.
        if r_pri > 10.0 * r_dual:
            mu *= 2.0
            Lam = Lam / 2.0
            factor = cache.factor(mu)
        elif r_dual > 10.0 * r_pri:
            mu /= 2.0
            Lam = Lam * 2.0
            factor = cache.factor(mu)

    if not converged and on_maxiter == "raise":
        raise MaxIterationsExceeded(
            "TV solver used %d iterations without converging" % max_iter
        )

    U_out = U if converged else best_U
    GU_out = GU if converged else gamma_m @ U_out

    # A penalty large enough to fuse everything has the exact solution
    # U = component means of Y; snap to it when numerically there.
    if np.all(np.linalg.norm(GU_out, axis=1) < _ZERO_ROW_NORM):
        U_out = _component_means(Y, cache.components())
        GU_out = gamma_m @ U_out

    dual_rows = 2.0 * mu * Lam
    kkt = _kkt_residual(U_out, Y, GU_out, dual_rows, rho, gamma_t)
    objective = _objective(U_out, Y, GU_out, rho)
    return TvSolution(
        U_out,
        iteration,
        r_pri,
        r_dual,
        kkt,
        converged,
        objective,
        tuple(trace),
        dual=dual_rows,
    )


def theoretical_rho(inv_scaling, K, n, N, L_prev=0.0, c_star=1.0):
    """Theory-scale penalty 4 c* rho(Gamma) sqrt(K log(n)/N) (1 + L_prev).

    Diagnostic only: the constant c* is unknown in practice, so fitting
    always selects rho by spanning-tree cross-validation instead.
    """
    if n < 2 or N <= 0 or K < 1:
        raise InvalidParameter("need n >= 2, N > 0, K >= 1")
    return 4.0 * c_star * inv_scaling * np.sqrt(K * np.log(n) / N) * (1.0 + L_prev)
