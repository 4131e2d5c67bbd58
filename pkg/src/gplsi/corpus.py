"""Document-term data model, synthetic corpus generation, and file I/O.

The data model follows the multinomial topic model: counts D with row
sums N_i, frequencies X = diag(1/N_i) D, and a ground truth (W, A)
whose product is the signal matrix. The synthetic generator produces
spatially coherent corpora: documents are points in the unit square,
k-means clusters share a topic mixture, and the document graph connects
nearest neighbors.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidParameter,
    ParseError,
    ZeroLengthDocument,
)
from .graph import DocumentGraph

logger = logging.getLogger(__name__)

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CountMatrix:
    """Integer document-term counts with per-document lengths.

    Row i of ``counts`` must sum to ``doc_lengths[i]``.
    """

    counts: np.ndarray
    doc_lengths: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        lengths = np.asarray(self.doc_lengths)
        if counts.ndim != 2 or counts.shape[0] < 1 or counts.shape[1] < 1:
            raise InvalidParameter("counts must be a matrix with n >= 1, p >= 1")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.floor(counts)):
                raise InvalidParameter("counts must be integers")
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise InvalidParameter("counts must be nonnegative")
        lengths = lengths.astype(np.int64)
        if lengths.shape != (counts.shape[0],):
            raise DimensionMismatch(
                "doc_lengths must have one entry per document"
            )
        if np.any(counts.sum(axis=1) != lengths):
            raise DimensionMismatch("row sums of counts disagree with doc_lengths")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "doc_lengths", lengths)

    @property
    def n(self):
        return self.counts.shape[0]

    @property
    def p(self):
        return self.counts.shape[1]

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts)
        return cls(counts, counts.sum(axis=1))


@dataclass(frozen=True, eq=False)
class FrequencyMatrix:
    """Row-stochastic word-frequency matrix with document lengths."""

    freqs: np.ndarray
    doc_lengths: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        lengths = np.asarray(self.doc_lengths).astype(np.int64)
        if freqs.ndim != 2:
            raise InvalidParameter("freqs must be a matrix")
        if lengths.shape != (freqs.shape[0],):
            raise DimensionMismatch("doc_lengths must have one entry per document")
        if np.any(freqs < 0) or np.any(freqs > 1):
            raise InvalidParameter("frequencies must lie in [0, 1]")
        if np.any(np.abs(freqs.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
            raise InvalidParameter("every frequency row must sum to 1")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "doc_lengths", lengths)

    @property
    def n(self):
        return self.freqs.shape[0]

    @property
    def p(self):
        return self.freqs.shape[1]

    @property
    def mean_length(self):
        return float(self.doc_lengths.mean())


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """True mixtures, topics, geometry, and anchor indices.

    Anchor-document rows of W are exactly unit vectors. Anchor-word
    columns of A have exact zeros off their topic and positive mass on
    it (the support form of a unit column compatible with
    row-stochastic A).
    """

    W: np.ndarray
    A: np.ndarray
    coords: np.ndarray
    group_ids: np.ndarray
    anchor_docs: np.ndarray
    anchor_words: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        A = np.asarray(self.A, dtype=float)
        K = W.shape[1]
        if A.shape[0] != K:
            raise DimensionMismatch("W and A disagree on the topic count")
        for name, M in (("W", W), ("A", A)):
            if np.any(M < 0):
                raise InvalidParameter("%s has negative entries" % name)
            if np.any(np.abs(M.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
                raise InvalidParameter("rows of %s must sum to 1" % name)
        docs = np.asarray(self.anchor_docs)
        words = np.asarray(self.anchor_words)
        if docs.shape != (K,) or words.shape != (K,):
            raise DimensionMismatch("need one anchor document and word per topic")
        for k in range(K):
            row = W[docs[k]]
            if row[k] != 1.0 or row.sum() != 1.0:
                raise InvalidParameter("anchor document %d is not e_%d" % (docs[k], k))
            col = A[:, words[k]]
            if col[k] <= 0 or np.any(col[np.arange(K) != k] != 0.0):
                raise InvalidParameter(
                    "anchor word %d is not supported on topic %d alone"
                    % (words[k], k)
                )

    @property
    def n_topics(self):
        return self.W.shape[1]


def validate_frequency(counts):
    """Convert counts to frequencies X = diag(1/N_i) D.

    Raises ZeroLengthDocument when some N_i is zero and
    DimensionMismatch when row sums disagree with doc_lengths.
    """
    if np.any(counts.doc_lengths == 0):
        raise ZeroLengthDocument("every document must contain at least one word")
    freqs = counts.counts / counts.doc_lengths[:, None]
    return FrequencyMatrix(freqs, counts.doc_lengths)


def _grid_centers(n_grp):
    # Nearly square lattice of cell centers in the unit square, row-major.
    rows = max(1, round(math.sqrt(n_grp)))
    cols = math.ceil(n_grp / rows)
    centers = np.empty((n_grp, 2))
    for idx in range(n_grp):
        r, c = divmod(idx, cols)
        centers[idx] = ((c + 0.5) / cols, (r + 0.5) / rows)
    return centers


def _lloyd(points, centers, max_iter=100):
    """Lloyd's k-means; empty clusters re-seed at the farthest point."""
    n_grp = centers.shape[0]
    assign = None
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        counts = np.bincount(new_assign, minlength=n_grp)
        if np.any(counts == 0):
            dist_own = d2[np.arange(len(points)), new_assign].copy()
            for c in np.flatnonzero(counts == 0):
                far = int(dist_own.argmax())
                centers[c] = points[far]
                new_assign[far] = c
                dist_own[far] = -np.inf
            counts = np.bincount(new_assign, minlength=n_grp)
        if assign is not None and np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
        for c in range(n_grp):
            if counts[c] > 0:
                centers[c] = points[assign == c].mean(axis=0)
    return assign


def _knn_graph(coords, knn):
    """Symmetrized k-nearest-neighbor graph, inverse-distance weights."""
    n = coords.shape[0]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    edges = {}
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        picked = 0
        for j in order:
            if j == i:
                continue
            a, b = (i, j) if i < j else (j, i)
            edges.setdefault((a, b), 1.0 / max(dist[i, j], 1e-12))
            picked += 1
            if picked == knn:
                break
    edge_list = [(i, j, w) for (i, j), w in sorted(edges.items())]
    return DocumentGraph(n, tuple(edge_list))


def generate_synthetic(n, p, K, N, n_grp=30, knn=5, noise_sd=0.03, seed=0):
    """Generate a spatially coherent synthetic corpus.

    Documents are uniform points in the unit square, clustered by
    k-means seeded at ``n_grp`` equally spaced grid centers. Each
    cluster draws a Dirichlet mixture whose largest weight is moved to
    the cluster's randomly assigned dominant topic; per-document rows
    add N(0, noise_sd^2) noise, are clipped to be nonnegative, and are
    renormalized. K documents are then made exact anchors (rows e_k),
    and A is row-normalized uniform noise with K anchor-word columns.
    Counts are multinomial draws of size N from the rows of W A, and
    the graph links each document to its ``knn`` nearest neighbors with
    inverse-distance weights, symmetrized.

    Returns
    -------
    (CountMatrix, GroundTruth, DocumentGraph)
    """
    if not (K <= n_grp <= n):
        raise InvalidParameter("need K <= n_grp <= n")
    if not knn < n:
        raise InvalidParameter("need knn < n")
    if N < 1:
        raise InvalidParameter("need N >= 1")
    if not (1 <= K <= p):
        raise InvalidParameter("need 1 <= K <= p")

    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 2))
    group_ids = _lloyd(coords, _grid_centers(n_grp))

    dominant = rng.integers(K, size=n_grp)
    alphas = np.empty((n_grp, K))
    for c in range(n_grp):
        u = rng.uniform(0.1, 0.5, size=K)
        alpha = rng.dirichlet(u)
        top = int(alpha.argmax())
        alpha[top], alpha[dominant[c]] = alpha[dominant[c]], alpha[top]
        alphas[c] = alpha

    W = alphas[group_ids] + rng.normal(0.0, noise_sd, size=(n, K))
    W = np.clip(W, 0.0, None)
    sums = W.sum(axis=1)
    bad = sums < _ROW_SUM_TOL
    if np.any(bad):
        W[bad] = alphas[group_ids[bad]]
        sums[bad] = W[bad].sum(axis=1)
    W /= sums[:, None]

    anchor_docs = rng.choice(n, size=K, replace=False)
    W[anchor_docs] = np.eye(K)

    A = rng.uniform(size=(K, p))
    A /= A.sum(axis=1, keepdims=True)
    anchor_words = rng.choice(p, size=K, replace=False)
    A[:, anchor_words] = 0.0
    A[np.arange(K), anchor_words] = 1.0
    A /= A.sum(axis=1, keepdims=True)

    M = W @ A
    M /= M.sum(axis=1, keepdims=True)
    counts = rng.multinomial(N, M)
    graph = _knn_graph(coords, knn)
    truth = GroundTruth(W, A, coords, group_ids, anchor_docs, anchor_words)
    return CountMatrix(counts, counts.sum(axis=1)), truth, graph


_MM_HEADER = ("%%matrixmarket", "matrix", "coordinate", "integer", "general")


def _load_counts_mtx(path):
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError("empty file", line=1)
    header = lines[0].split()
    if [t.lower() for t in header] != list(_MM_HEADER):
        raise ParseError(
            "expected header '%%MatrixMarket matrix coordinate integer general'",
            line=1,
        )
    idx = 1
    while idx < len(lines) and lines[idx].lstrip().startswith("%"):
        idx += 1
    if idx >= len(lines):
        raise ParseError("missing size line", line=len(lines))
    size_tokens = lines[idx].split()
    if len(size_tokens) != 3:
        raise ParseError("size line must be 'n p nnz'", line=idx + 1)
    try:
        n, p, nnz = (int(t) for t in size_tokens)
    except ValueError:
        raise ParseError("size line must hold three integers", line=idx + 1)
    if n < 1 or p < 1:
        raise ParseError("need n >= 1 and p >= 1", line=idx + 1)
    counts = np.zeros((n, p), dtype=np.int64)
    seen = 0
    for offset, raw in enumerate(lines[idx + 1 :], start=idx + 2):
        if not raw.strip():
            continue
        tokens = raw.split()
        if len(tokens) != 3:
            raise ParseError("entry line must be 'i j value'", line=offset)
        try:
            i, j, v = (int(t) for t in tokens)
        except ValueError:
            raise ParseError("entry line must hold three integers", line=offset)
        if not (1 <= i <= n and 1 <= j <= p):
            raise ParseError("index out of range", line=offset)
        if v < 0:
            raise ParseError("counts must be nonnegative", line=offset)
        counts[i - 1, j - 1] = v
        seen += 1
    if seen != nnz:
        raise ParseError("expected %d entries, found %d" % (nnz, seen))
    return counts


def _load_counts_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            next(reader)  # header row
        except StopIteration:
            raise ParseError("empty file", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([int(cell) for cell in row])
            except ValueError:
                raise ParseError("non-integer cell", line=lineno)
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise ParseError("ragged row", line=lineno)
    if not rows:
        raise ParseError("no data rows", line=2)
    return np.array(rows, dtype=np.int64)


def load_counts(path, format=None):
    """Load a CountMatrix from MatrixMarket coordinate or dense CSV.

    ``format`` is "mtx" or "csv"; by default it is inferred from the
    file extension.
    """
    if format is None:
        format = "mtx" if os.path.splitext(path)[1].lower() in (".mtx", ".mm") else "csv"
    if format == "mtx":
        counts = _load_counts_mtx(path)
    elif format == "csv":
        counts = _load_counts_csv(path)
    else:
        raise InvalidParameter("format must be 'mtx' or 'csv'")
    return CountMatrix(counts, counts.sum(axis=1))


def load_graph(path, n_nodes=None):
    """Load a whitespace-separated edge list ``i j [weight]``.

    Node ids are 0-based; a missing weight means 1.0. Blank lines and
    lines starting with '#' are skipped. When ``n_nodes`` is omitted it
    is inferred as the largest id plus one.
    """
    edges = []
    max_node = -1
    seen = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            tokens = stripped.split()
            if len(tokens) not in (2, 3):
                raise ParseError("expected 'i j [weight]'", line=lineno)
            try:
                i, j = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise ParseError("node ids must be integers", line=lineno)
            if i < 0 or j < 0:
                raise ParseError("node ids must be nonnegative", line=lineno)
            if i == j:
                raise ParseError("self-loop", line=lineno)
            w = 1.0
            if len(tokens) == 3:
                try:
                    w = float(tokens[2])
                except ValueError:
                    raise ParseError("weight must be a number", line=lineno)
                if not w > 0:
                    raise ParseError("weight must be positive", line=lineno)
            a, b = (i, j) if i < j else (j, i)
            if (a, b) in seen:
                raise ParseError("duplicate edge (%d, %d)" % (a, b), line=lineno)
            seen.add((a, b))
            edges.append((a, b, w))
            max_node = max(max_node, b)
    inferred = max_node + 1
    if n_nodes is None:
        n_nodes = inferred
    elif inferred > n_nodes:
        raise DimensionMismatch(
            "edge list references node %d but n_nodes is %d" % (max_node, n_nodes)
        )
    if n_nodes < 1:
        raise ParseError("edge list defines no nodes")
    return DocumentGraph(n_nodes, tuple(edges))


def write_counts_mtx(path, counts):
    """Write counts as a MatrixMarket coordinate file (1-based entries)."""
    C = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts)
    rows, cols = np.nonzero(C)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate integer general\n")
        fh.write("%d %d %d\n" % (C.shape[0], C.shape[1], rows.size))
        for i, j in zip(rows, cols):
            fh.write("%d %d %d\n" % (i + 1, j + 1, C[i, j]))


def write_graph(path, g):
    """Write a 0-based edge list ``i j weight``, one edge per line."""
    with open(path, "w") as fh:
        for i, j, w in g.edges:
            fh.write("%d %d %.17g\n" % (i, j, w))


def write_matrix_csv(path, M):
    """Write a float matrix as bare CSV at full double precision."""
    np.savetxt(path, np.asarray(M, dtype=float), fmt="%.17e", delimiter=",")


def read_matrix_csv(path):
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return M


def save_model(out_dir, W, A, meta, extras=None):
    """Write a model directory: W.csv, A.csv, meta.json (+ extras).

    ``extras`` maps file stems to additional matrices (for example the
    singular factors). The round trip through ``load_model`` restores
    W and A bit-exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    write_matrix_csv(os.path.join(out_dir, "W.csv"), W)
    write_matrix_csv(os.path.join(out_dir, "A.csv"), A)
    for stem, M in (extras or {}).items():
        write_matrix_csv(os.path.join(out_dir, "%s.csv" % stem), M)
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(model_dir):
    """Read back a model directory; returns (W, A, meta)."""
    W = read_matrix_csv(os.path.join(model_dir, "W.csv"))
    A = read_matrix_csv(os.path.join(model_dir, "A.csv"))
    with open(os.path.join(model_dir, "meta.json")) as fh:
        meta = json.load(fh)
    return W, A, meta
