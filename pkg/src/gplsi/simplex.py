"""Vertex hunting and mixture recovery on the factor simplex.

Rows of the denoised left factor lie (up to noise) in a simplex whose
K vertices correspond to pure-topic documents. Successive projection
finds the vertices, the mixtures follow from a linear solve against
the vertex matrix, and the topic-word matrix is fit by a projected
gradient descent over row-stochastic matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGeometry,
    DimensionMismatch,
    InvalidParameter,
    SingularH,
)

logger = logging.getLogger(__name__)

_SPA_TIE_TOL = 1e-12
_SINGULAR_TOL = 1e-10
_ZERO_ROW_TOL = 1e-12


@dataclass(frozen=True)
class VertexSet:
    """K simplex vertices and the row indices they came from."""

    H: np.ndarray
    indices: tuple

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.shape[0] != len(self.indices):
            raise DimensionMismatch("one index per vertex required")
        if len(set(self.indices)) != len(self.indices):
            raise InvalidParameter("vertex indices must be distinct")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def K(self):
        return self.H.shape[0]


@dataclass(frozen=True)
class MixtureEstimate:
    """Row-stochastic mixture weights plus the pre-repair solve."""

    W: np.ndarray
    raw_W: np.ndarray
    repair_mass: float


@dataclass(frozen=True)
class TopicEstimate:
    """Row-stochastic topic-word matrix plus solver diagnostics."""

    A: np.ndarray
    residual: float
    iterations: int
    converged: bool


def spa(U, K):
    """Successive projection: K rows of U spanning its extreme points.

    Repeatedly picks the row of largest norm and projects all rows onto
    the orthogonal complement of the pick. Norm ties within 1e-12 go to
    the lowest row index. A selection whose residual norm underflows
    before K picks means the rows do not span K affine directions.
    """
    R = np.array(U, dtype=float, copy=True)
    n = R.shape[0]
    if not 1 <= K <= n:
        raise InvalidParameter("need 1 <= K <= n")
    indices = []
    for _ in range(K):
        norms = np.linalg.norm(R, axis=1)
        best = float(norms.max())
        if best <= _SPA_TIE_TOL:
            raise DegenerateGeometry(
                "rows span fewer than %d directions" % K
            )
        pick = int(np.flatnonzero(norms >= best - _SPA_TIE_TOL)[0])
        indices.append(pick)
        u = R[pick] / np.linalg.norm(R[pick])
        R -= np.outer(R @ u, u)
    H = np.asarray(U, dtype=float)[indices].copy()
    return VertexSet(H, tuple(indices))


def recover_W(U, vertices):
    """Express each row of U in the vertex basis and repair to the simplex.

    Solves U = W H for W, clips negatives, and renormalizes rows to sum
    one. ``repair_mass`` is the total negative mass removed by the clip;
    rows whose clipped sum underflows are replaced by the uniform
    mixture (logged).
    """
    U = np.asarray(U, dtype=float)
    H = vertices.H
    K = vertices.K
    if U.shape[1] != H.shape[1]:
        raise DimensionMismatch("U and vertices disagree on dimension")
    svals = np.linalg.svd(H, compute_uv=False)
    if svals[-1] <= _SINGULAR_TOL:
        raise SingularH(
            "vertex matrix is singular (min singular value %.3e)" % svals[-1]
        )
    raw = np.linalg.solve(H.T, U.T).T
    clipped = np.clip(raw, 0.0, None)
    repair = float(np.sum(clipped - raw))
    sums = clipped.sum(axis=1)
    W = np.empty_like(clipped)
    n_uniform = 0
    for i in range(U.shape[0]):
        if sums[i] <= _ZERO_ROW_TOL:
            W[i] = 1.0 / K
            n_uniform += 1
        else:
            W[i] = clipped[i] / sums[i]
    if n_uniform:
        logger.warning(
            "%d rows collapsed to zero after clipping; set to uniform",
            n_uniform,
        )
    return MixtureEstimate(W, raw, repair)


def project_simplex_rows(M):
    """Euclidean projection of each row onto the probability simplex."""
    M = np.asarray(M, dtype=float)
    K = M.shape[1]
    sorted_desc = -np.sort(-M, axis=1)
    cssum = np.cumsum(sorted_desc, axis=1) - 1.0
    ks = np.arange(1, K + 1)
    cond = sorted_desc - cssum / ks > 0
    rho = K - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = cssum[np.arange(M.shape[0]), rho] / (rho + 1)
    return np.clip(M - theta[:, None], 0.0, None)


def recover_A(X, W, max_iter=10_000, tol=1e-10, callback=None):
    """Least-squares topic-word matrix over row-stochastic A.

    Minimizes ||W A - X||_F^2 by accelerated projected gradient with a
    fixed 1/L step, restarting the momentum whenever the objective
    increases. Stops when the relative objective decrease falls below
    ``tol``. ``callback``, when given, is invoked with the objective
    value after every accepted iterate.
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape[0] != X.shape[0]:
        raise DimensionMismatch("W and X disagree on the number of rows")
    K, p = W.shape[1], X.shape[1]
    G = W.T @ W
    WtX = W.T @ X
    L = 2.0 * float(np.linalg.eigvalsh(G)[-1])
    if L <= 0:
        raise InvalidParameter("W must be nonzero")
    step = 1.0 / L

    def objective(A):
        R = W @ A - X
        return float(np.sum(R * R))

    A = np.full((K, p), 1.0 / p)
    Y = A.copy()
    t_mom = 1.0
    f_prev = objective(A)
    # below the fp resolution of the starting objective, changes are noise
    f_floor = 1e-16 * max(f_prev, 1e-300)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (G @ Y - WtX)
        A_next = project_simplex_rows(Y - step * grad)
        f_next = objective(A_next)
        if f_next > f_prev:
            # restart momentum from the last accepted point
            Y = A.copy()
            t_mom = 1.0
            grad = 2.0 * (G @ Y - WtX)
            A_next = project_simplex_rows(Y - step * grad)
            f_next = objective(A_next)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        Y = A_next + ((t_mom - 1.0) / t_next) * (A_next - A)
        done = abs(f_prev - f_next) <= tol * max(abs(f_prev), f_floor)
        A = A_next
        f_prev = f_next
        t_mom = t_next
        if callback is not None:
            callback(f_next)
        if done:
            converged = True
            break
    return TopicEstimate(A, float(np.sqrt(f_prev)), it, converged)


def mixture_ls(B, A):
    """Row-stochastic W minimizing ||W A - B||_F^2 for fixed A.

    The transform-time counterpart of :func:`recover_A`: accelerated
    projected gradient over rows of W on the probability simplex.
    """
    B = np.asarray(B, dtype=float)
    A = np.asarray(A, dtype=float)
    if B.shape[1] != A.shape[1]:
        raise DimensionMismatch("B and A disagree on the number of columns")
    n, K = B.shape[0], A.shape[0]
    G = A @ A.T
    BAt = B @ A.T
    L = 2.0 * float(np.linalg.eigvalsh(G)[-1])
    if L <= 0:
        raise InvalidParameter("A must be nonzero")
    step = 1.0 / L

    def objective(W):
        R = W @ A - B
        return float(np.sum(R * R))

    W = np.full((n, K), 1.0 / K)
    Y = W.copy()
    t_mom = 1.0
    f_prev = objective(W)
    f_floor = 1e-16 * max(f_prev, 1e-300)
    for _ in range(10_000):
        grad = 2.0 * (Y @ G - BAt)
        W_next = project_simplex_rows(Y - step * grad)
        f_next = objective(W_next)
        if f_next > f_prev:
            Y = W.copy()
            t_mom = 1.0
            grad = 2.0 * (Y @ G - BAt)
            W_next = project_simplex_rows(Y - step * grad)
            f_next = objective(W_next)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        Y = W_next + ((t_mom - 1.0) / t_next) * (W_next - W)
        done = abs(f_prev - f_next) <= 1e-10 * max(abs(f_prev), f_floor)
        W = W_next
        f_prev = f_next
        t_mom = t_next
        if done:
            break
    return W
