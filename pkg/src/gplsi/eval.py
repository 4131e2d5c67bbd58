"""Alignment and scoring of fitted factors against references.

Topics come out of a fit in arbitrary order, so every comparison first
matches estimated topics to reference topics by a minimum-cost
assignment under the columnwise l1 distance. Error metrics are
Frobenius / entrywise-l1 distances after matching, normalized by the
document or word count. Spatial coherence is scored by Moran's I of a
value vector over the document graph and by the share of documents
whose dominant topic disagrees with most of their neighbors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, InvalidParameter, NotOrthonormal, ZeroVariance

_ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class EvalReport:
    """Alignment permutation and the scored metrics of one fit.

    ``morans_I`` and ``pas`` are None when not computed (no graph) or
    not defined (all topic columns constant).
    """

    perm: tuple
    w_l2: float
    w_l1: float
    a_l2: float
    a_l1: float
    sintheta_U: float | None = None
    sintheta_V: float | None = None
    morans_I: float | None = None
    pas: float | None = None

    def __post_init__(self):
        K = len(self.perm)
        if sorted(self.perm) != list(range(K)):
            raise InvalidParameter("perm must be a bijection on 0..K-1")
        object.__setattr__(self, "perm", tuple(int(k) for k in self.perm))

    def as_dict(self):
        out = {
            "perm": list(self.perm),
            "w_l2": self.w_l2,
            "w_l1": self.w_l1,
            "a_l2": self.a_l2,
            "a_l1": self.a_l1,
        }
        for key in ("sintheta_U", "sintheta_V", "morans_I", "pas"):
            out[key] = getattr(self, key)
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def align_columns(M_hat, M_ref):
    """Match estimated columns to reference columns at minimum l1 cost.

    Returns (perm, cost): ``perm[k]`` is the reference column matched
    to estimated column k, and ``cost`` the minimized total
    sum_k ||M_hat[:, k] - M_ref[:, perm[k]]||_1.
    """
    M_hat = np.asarray(M_hat, dtype=float)
    M_ref = np.asarray(M_ref, dtype=float)
    if M_hat.shape != M_ref.shape:
        raise DimensionMismatch("aligned matrices must share a shape")
    K = M_hat.shape[1]
    cost = np.zeros((K, K))
    for l in range(K):
        cost[:, l] = np.abs(M_hat.T - M_ref[:, l]).sum(axis=1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(K, dtype=np.int64)
    perm[rows] = cols
    return perm, float(cost[rows, cols].sum())


def mixture_errors(W_hat, W_ref):
    """(l2, l1) errors of the mixtures, minimized over topic matching.

    l2 is ||W_hat - W_ref P||_F / n with P permuting reference
    columns, l1 the entrywise absolute sum / n, both at the matching
    chosen by :func:`align_columns`.
    """
    W_hat = np.asarray(W_hat, dtype=float)
    W_ref = np.asarray(W_ref, dtype=float)
    if W_hat.shape != W_ref.shape:
        raise DimensionMismatch("mixture matrices must share a shape")
    n = W_hat.shape[0]
    perm, _ = align_columns(W_hat, W_ref)
    diff = W_hat - W_ref[:, perm]
    return (
        float(np.linalg.norm(diff)) / n,
        float(np.abs(diff).sum()) / n,
    )


def topic_errors(A_hat, A_ref):
    """(l2, l1) errors of the topic-word rows, minimized over matching.

    Topics index rows here, so the matching permutes reference rows;
    normalization is by the vocabulary size p.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    A_ref = np.asarray(A_ref, dtype=float)
    if A_hat.shape != A_ref.shape:
        raise DimensionMismatch("topic matrices must share a shape")
    p = A_hat.shape[1]
    perm, _ = align_columns(A_hat.T, A_ref.T)
    diff = A_hat - A_ref[perm]
    return (
        float(np.linalg.norm(diff)) / p,
        float(np.abs(diff).sum()) / p,
    )


def sin_theta(U_hat, U_ref):
    """Frobenius sin-theta distance between two orthonormal column spans.

    Equals sqrt(K - ||U_hat' U_ref||_F^2); evaluated as the norm of the
    residual (I - U_ref U_ref') U_hat, which is the same quantity but
    free of the cancellation that floors the direct formula at
    sqrt(machine eps) near zero.
    """
    U_hat = np.asarray(U_hat, dtype=float)
    U_ref = np.asarray(U_ref, dtype=float)
    if U_hat.shape != U_ref.shape:
        raise DimensionMismatch("bases must share a shape")
    K = U_hat.shape[1]
    for name, M in (("first", U_hat), ("second", U_ref)):
        gram = M.T @ M
        if np.max(np.abs(gram - np.eye(K))) > _ORTHO_TOL:
            raise NotOrthonormal("%s argument is not orthonormal" % name)
    resid = U_hat - U_ref @ (U_ref.T @ U_hat)
    return float(np.linalg.norm(resid))


def morans_I(values, g, row_standardize=False):
    """Moran's spatial autocorrelation of node values on a graph.

    (n / S0) * sum_ij w_ij d_i d_j / sum_i d_i^2 with d the centered
    values, the sums running over both orientations of every edge, and
    S0 the total weight. ``row_standardize`` divides each node's
    outgoing weights by their sum first (off by default; raw weights
    match the reported statistic). Constant values have no centered
    variance and raise ZeroVariance.
    """
    d = np.asarray(values, dtype=float)
    if d.ndim != 1:
        raise InvalidParameter("values must be one-dimensional")
    if d.shape[0] != g.n_nodes:
        raise DimensionMismatch("values and graph disagree on n")
    if not g.edges:
        raise InvalidParameter("graph has no edges")
    d = d - d.mean()
    denom = float(d @ d)
    if denom <= 0.0:
        raise ZeroVariance("values are constant")
    n = g.n_nodes
    cross = 0.0
    S0 = 0.0
    if row_standardize:
        out = np.zeros(n)
        for i, j, w in g.edges:
            out[i] += w
            out[j] += w
        for i, j, w in g.edges:
            wij = w / out[i]
            wji = w / out[j]
            cross += (wij + wji) * d[i] * d[j]
            S0 += wij + wji
    else:
        for i, j, w in g.edges:
            cross += 2.0 * w * d[i] * d[j]
            S0 += 2.0 * w
    return float(n / S0 * cross / denom)


def dominant_topics(W):
    """Argmax topic per document, ties to the lowest index."""
    W = np.asarray(W, dtype=float)
    return np.argmax(W, axis=1)


def pas(topic_of, g, threshold=0.6):
    """Share of connected documents in sharp disagreement with neighbors.

    A document counts when strictly more than ``threshold`` of its
    neighbors carry a different topic label. Isolated documents are
    excluded from the denominator; a graph with no connected documents
    scores 0.
    """
    labels = np.asarray(topic_of)
    if labels.ndim != 1:
        raise InvalidParameter("topic_of must be one-dimensional")
    if labels.shape[0] != g.n_nodes:
        raise DimensionMismatch("labels and graph disagree on n")
    if not 0.0 <= threshold <= 1.0:
        raise InvalidParameter("threshold must lie in [0, 1]")
    neighbors = g.neighbors
    n_scored = 0
    n_flagged = 0
    for i in range(g.n_nodes):
        nbrs = neighbors[i]
        if not nbrs:
            continue
        n_scored += 1
        disagree = sum(1 for j in nbrs if labels[j] != labels[i])
        if disagree > threshold * len(nbrs):
            n_flagged += 1
    if n_scored == 0:
        return 0.0
    return n_flagged / n_scored


def mean_morans_I(W, g, row_standardize=False):
    """Mean Moran's I over mixture columns, skipping constant columns.

    Returns None when every column is constant or the graph has no
    edges.
    """
    W = np.asarray(W, dtype=float)
    if not g.edges:
        return None
    vals = []
    for k in range(W.shape[1]):
        try:
            vals.append(morans_I(W[:, k], g, row_standardize=row_standardize))
        except ZeroVariance:
            continue
    if not vals:
        return None
    return float(np.mean(vals))


def evaluate(W_hat, A_hat, W_ref, A_ref, g=None, U_hat=None, U_ref=None,
             V_hat=None, V_ref=None, threshold=0.6):
    """Score one fit against references; returns an EvalReport."""
    w_l2, w_l1 = mixture_errors(W_hat, W_ref)
    a_l2, a_l1 = topic_errors(A_hat, A_ref)
    su = sin_theta(U_hat, U_ref) if U_hat is not None and U_ref is not None else None
    sv = sin_theta(V_hat, V_ref) if V_hat is not None and V_ref is not None else None
    mi = pa = None
    if g is not None:
        mi = mean_morans_I(W_hat, g)
        pa = pas(dominant_topics(W_hat), g, threshold=threshold)
    perm, _ = align_columns(W_hat, W_ref)
    return EvalReport(
        perm=tuple(int(k) for k in perm),
        w_l2=w_l2, w_l1=w_l1, a_l2=a_l2, a_l1=a_l1,
        sintheta_U=su, sintheta_V=sv, morans_I=mi, pas=pa,
    )
