"""Estimator facade over the functional fitting pipeline.

``TopicModel`` wires the pieces — factor fitting, vertex hunting,
mixture and topic recovery — behind a scikit-learn estimator so the
model can sit in pipelines and grid searches; ``fit_pipeline`` is the
underlying function, also used by the command line.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import CountMatrix, FrequencyMatrix, validate_frequency
from .decomposition import (
    FitConfig,
    FitTrace,
    IterationRecord,
    fit_gplsi,
    fit_onestep,
    fit_plsi,
)
from .errors import InvalidParameter
from .graph import DocumentGraph
from .simplex import mixture_ls, recover_A, recover_W, spa

_METHODS = ("gplsi", "plsi", "onestep")


def _as_frequency(X):
    if isinstance(X, FrequencyMatrix):
        return X
    if isinstance(X, CountMatrix):
        return validate_frequency(X)
    X = np.asarray(X, dtype=float)
    if np.issubdtype(X.dtype, np.integer) or np.all(X == np.floor(X)):
        return validate_frequency(CountMatrix.from_counts(X.astype(np.int64)))
    sums = X.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise InvalidParameter("rows must have positive mass")
    return FrequencyMatrix(X / sums, sums[:, 0])


def fit_pipeline(X, graph, config, method="gplsi"):
    """Run one full fit and return a result dict.

    Keys: W, A, U, V, singular_values, anchors, repair_mass,
    topic_residual, trace, method.
    """
    if method not in _METHODS:
        raise InvalidParameter("unknown method %r" % (method,))
    X = _as_frequency(X)
    if method == "plsi":
        factors = fit_plsi(X, config.K)
        trace = FitTrace(converged=True)
        trace.records.append(IterationRecord(1, 0.0, 0.0, None, 0, True, 0.0))
    elif method == "onestep":
        if graph is None:
            raise InvalidParameter("method %r needs a graph" % (method,))
        factors, trace = fit_onestep(X, graph, config, full_output=True)
    else:
        if graph is None:
            raise InvalidParameter("method %r needs a graph" % (method,))
        factors, trace = fit_gplsi(X, graph, config)
    vertices = spa(factors.U, config.K)
    mixture = recover_W(factors.U, vertices)
    topics = recover_A(X.freqs, mixture.W)
    return {
        "W": mixture.W,
        "A": topics.A,
        "U": factors.U,
        "V": factors.V,
        "singular_values": factors.singular_values,
        "anchors": vertices.indices,
        "repair_mass": mixture.repair_mass,
        "topic_residual": topics.residual,
        "topic_iterations": topics.iterations,
        "trace": trace,
        "method": method,
    }


class TopicModel(BaseEstimator, TransformerMixin):
    """Graph-regularized topic model with a scikit-learn interface.

    Parameters
    ----------
    n_components : int
        Number of topics K.
    method : {"gplsi", "plsi", "onestep"}
        Fitting engine: iterative graph-aligned SVD, plain SVD, or a
        single graph denoising pass before the SVD.
    graph : DocumentGraph or edge list or None
        Document similarity graph; required unless method="plsi".
    rho_grid, n_folds, eps, t_max, cv_seed, tv_tol, tv_max_iter,
    cv_every_iteration
        Forwarded to the fitting configuration; None means the
        data-driven default.
    """

    def __init__(self, n_components=3, method="gplsi", graph=None,
                 rho_grid=None, n_folds=5, eps=None, t_max=None, cv_seed=0,
                 tv_tol=1e-7, tv_max_iter=5000, cv_every_iteration=True):
        self.n_components = n_components
        self.method = method
        self.graph = graph
        self.rho_grid = rho_grid
        self.n_folds = n_folds
        self.eps = eps
        self.t_max = t_max
        self.cv_seed = cv_seed
        self.tv_tol = tv_tol
        self.tv_max_iter = tv_max_iter
        self.cv_every_iteration = cv_every_iteration

    def _config(self):
        grid = self.rho_grid
        if grid is not None:
            grid = tuple(float(r) for r in grid)
        return FitConfig(
            K=int(self.n_components), rho_grid=grid, b=int(self.n_folds),
            eps=self.eps, t_max=self.t_max, cv_seed=int(self.cv_seed),
            tv_tol=float(self.tv_tol), tv_max_iter=int(self.tv_max_iter),
            cv_every_iteration=bool(self.cv_every_iteration),
        )

    def _graph(self, X):
        g = self.graph
        if g is None or isinstance(g, DocumentGraph):
            return g
        n = X.shape[0] if hasattr(X, "shape") else X.n
        return DocumentGraph.from_edges(n, g)

    def fit(self, X, y=None):
        """Fit mixtures and topics from a count or frequency matrix."""
        freqs = _as_frequency(X)
        result = fit_pipeline(freqs, self._graph(freqs.freqs), self._config(),
                              method=self.method)
        self.W_ = result["W"]
        self.A_ = result["A"]
        self.U_ = result["U"]
        self.V_ = result["V"]
        self.singular_values_ = result["singular_values"]
        self.anchors_ = result["anchors"]
        self.repair_mass_ = result["repair_mass"]
        self.trace_ = result["trace"]
        self.rho_path_ = result["trace"].rho_path
        self.n_iter_ = result["trace"].iterations
        self.converged_ = result["trace"].converged
        self.components_ = self.A_
        return self

    def transform(self, X):
        """Mixture weights of (possibly new) documents under the fitted topics."""
        if not hasattr(self, "A_"):
            raise InvalidParameter("model is not fitted")
        freqs = _as_frequency(X)
        return mixture_ls(freqs.freqs, self.A_)

    def fit_transform(self, X, y=None):
        self.fit(X)
        return self.W_

    def predict(self, X):
        """Dominant topic per document (argmax of the mixture row)."""
        return np.argmax(self.transform(X), axis=1)
