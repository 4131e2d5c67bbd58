"""Independent reference solvers used to cross-check the package.

Everything here is deliberately written against a different
formulation than the shipped code (dual projected gradient instead of
ADMM, scalar search instead of the closed-form shrink, exhaustive
permutations instead of the assignment solver) so agreement between
the two routes carries evidential weight.
"""

import itertools

import numpy as np
from scipy.optimize import minimize


def shrink_by_search(v, tau):
    """Minimize 0.5 * ||z - v||^2 + tau * ||z|| numerically.

    BFGS with the calculus gradient (smooth away from the origin),
    plus the origin itself as a candidate for the nonsmooth point;
    whichever has the lower objective wins. Derivative-free methods
    stall at sqrt(machine eps) on this problem, hence the gradient.
    """
    v = np.asarray(v, dtype=float)
    if tau == 0.0:
        return v.copy()

    def fun(z):
        return 0.5 * ((z - v) ** 2).sum() + tau * np.linalg.norm(z)

    def grad(z):
        nz = np.linalg.norm(z)
        if nz < 1e-300:
            return z - v
        return z - v + tau * z / nz

    res = minimize(fun, x0=v, jac=grad, method="BFGS",
                   options={"gtol": 1e-13, "maxiter": 500})
    candidates = [np.asarray(res.x, dtype=float), np.zeros_like(v)]
    values = [fun(c) for c in candidates]
    return candidates[int(np.argmin(values))]


def tv_denoise_dual(Y, gamma_dense, rho, gap_tol=1e-10, max_iter=200000):
    """Solve min_U ||U - Y||_F^2 + rho * sum_e ||(Gamma U)_e|| via the dual.

    The dual of the group-TV problem is a rho-ball-constrained concave
    quadratic: max_V tr(V' Gamma Y) - ||Gamma' V||^2 / 4 subject to
    ||V_e|| <= rho per edge row, with U(V) = Y - Gamma' V / 2.
    Accelerated projected gradient with a duality-gap stopping rule
    makes the result certifiably optimal, independent of any ADMM
    details.

    Returns (U, gap).
    """
    gamma_dense = np.asarray(gamma_dense, dtype=float)
    m = gamma_dense.shape[0]
    if m == 0 or rho == 0.0:
        return Y.copy(), 0.0
    GY = gamma_dense @ Y
    GGt = gamma_dense @ gamma_dense.T
    lam_max = float(np.linalg.eigvalsh(GGt).max())
    if lam_max <= 0.0:
        return Y.copy(), 0.0
    step = 2.0 / lam_max

    def project(M):
        norms = np.linalg.norm(M, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.minimum(1.0, rho / norms)
        scale[~np.isfinite(scale)] = 1.0
        return M * scale[:, None]

    def primal(V):
        U = Y - 0.5 * gamma_dense.T @ V
        GU = gamma_dense @ U
        val = float(((U - Y) ** 2).sum()
                    + rho * np.linalg.norm(GU, axis=1).sum())
        return U, val

    def dual_value(V):
        return float((V * GY).sum()
                     - 0.25 * ((gamma_dense.T @ V) ** 2).sum())

    V = np.zeros((m, Y.shape[1]))
    W = V.copy()
    t = 1.0
    gap = np.inf
    for it in range(1, max_iter + 1):
        grad = 0.5 * GGt @ W - GY
        V_new = project(W - step * grad)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        W = V_new + ((t - 1.0) / t_new) * (V_new - V)
        V, t = V_new, t_new
        if it % 25 == 0 or it == max_iter:
            U, p = primal(V)
            gap = p - dual_value(V)
            if gap <= gap_tol * max(1.0, abs(p)):
                break
    U, _ = primal(V)
    return U, gap


def best_permutation_alignment(cost):
    """Exhaustive minimum-cost assignment over all K! permutations."""
    K = cost.shape[0]
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(K)):
        total = sum(cost[k, perm[k]] for k in range(K))
        if total < best_cost:
            best_cost, best_perm = total, perm
    return best_perm, float(best_cost)


def morans_I_dense(x, weight_matrix):
    """Moran's I from the textbook double-sum formula on a dense W."""
    x = np.asarray(x, dtype=float)
    W = np.asarray(weight_matrix, dtype=float)
    n = x.size
    d = x - x.mean()
    s0 = W.sum()
    num = float(d @ W @ d)
    den = float((d * d).sum())
    return (n / s0) * num / den


def project_simplex_active_set(v):
    """Euclidean projection onto the probability simplex by active-set
    enumeration: try every candidate support, keep the feasible one."""
    v = np.asarray(v, dtype=float)
    K = v.size
    best, best_dist = None, np.inf
    order = np.argsort(v)[::-1]
    for size in range(1, K + 1):
        support = order[:size]
        theta = (v[support].sum() - 1.0) / size
        z = np.zeros(K)
        z[support] = v[support] - theta
        if (z[support] >= -1e-12).all():
            dist = float(((z - v) ** 2).sum())
            if dist < best_dist:
                best, best_dist = z, dist
    return np.clip(best, 0.0, None)
