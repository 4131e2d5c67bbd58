"""Document-graph structures and algorithms.

Provides the undirected graph over documents, its edge incidence matrix
(whose Gram matrix is the graph Laplacian), connected components, a
deterministic Kruskal minimum spanning tree, tree-distance fold
partitions for cross-validation, and two spectral diagnostics.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameter, TooLarge

# Dense pseudoinverse guard for the inverse-scaling diagnostic.
_INV_SCALING_MAX_NODES = 2000


@dataclass(frozen=True, eq=False)
class DocumentGraph:
    """Undirected graph on ``n_nodes`` documents.

    Parameters
    ----------
    n_nodes : int
        Number of documents (nodes), numbered ``0 .. n_nodes - 1``.
    edges : tuple of (int, int, float)
        Edge list with ``i < j`` and positive weight. No self-loops,
        no duplicate pairs.
    """

    n_nodes: int
    edges: tuple

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InvalidParameter("graph needs at least one node")
        seen = set()
        for i, j, w in self.edges:
            if not (0 <= i < j < self.n_nodes):
                raise InvalidParameter(
                    "edge (%r, %r) must satisfy 0 <= i < j < n_nodes" % (i, j)
                )
            if (i, j) in seen:
                raise InvalidParameter("duplicate edge (%d, %d)" % (i, j))
            if not w > 0:
                raise InvalidParameter("edge (%d, %d) has non-positive weight" % (i, j))
            seen.add((i, j))

    @classmethod
    def from_edges(cls, n_nodes, edges):
        """Build a graph from an iterable of (i, j) or (i, j, w) tuples.

        Endpoints are reordered so that i < j; missing weights default
        to 1.0.
        """
        normalized = []
        for edge in edges:
            if len(edge) == 2:
                i, j = edge
                w = 1.0
            else:
                i, j, w = edge
            i, j = int(i), int(j)
            if i > j:
                i, j = j, i
            normalized.append((i, j, float(w)))
        return cls(int(n_nodes), tuple(normalized))

    @property
    def m(self):
        return len(self.edges)

    @cached_property
    def neighbors(self):
        """Tuple of sorted neighbor tuples, indexed by node."""
        adj = [[] for _ in range(self.n_nodes)]
        for i, j, _ in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def degrees(self):
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for i, j, _ in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass(frozen=True, eq=False)
class IncidenceMatrix:
    """Edge-difference operator of a document graph.

    ``gamma`` is the sparse m x n matrix with +1 at the smaller endpoint
    and -1 at the larger one, one row per edge (scaled by the edge
    weight when built with ``weighted=True``, in which case weights
    enter the Laplacian squared). ``weights`` holds the diagonal of the
    scaling T, or None when unweighted.
    """

    gamma: sp.csr_matrix
    weights: np.ndarray | None = None

    @property
    def m(self):
        return self.gamma.shape[0]

    @property
    def n_nodes(self):
        return self.gamma.shape[1]

    def laplacian(self):
        """Gram matrix gamma.T @ gamma, the (weighted) graph Laplacian."""
        g = sp.csr_matrix(self.gamma)
        return (g.T @ g).tocsr()


@dataclass(frozen=True)
class FoldPartition:
    """Assignment of nodes to cross-validation folds.

    ``fold_of[i]`` is the fold of node ``i`` in ``range(b)``;
    ``sources`` holds the randomly chosen source node of each connected
    component (ordered by the component's smallest node). Every
    non-isolated node has at least one graph neighbor in a different
    fold; isolated nodes are assigned round-robin and exempt.
    """

    fold_of: np.ndarray
    sources: tuple
    b: int

    @property
    def source(self):
        """Source node of the first component."""
        return self.sources[0]

    def to_csv(self, path):
        """Write a ``node,fold`` table for audit."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "fold"])
            for node, fold in enumerate(self.fold_of):
                writer.writerow([node, int(fold)])


def incidence(g, weighted=False):
    """Build the IncidenceMatrix of ``g``, rows in edge order."""
    m, n = g.m, g.n_nodes
    if m == 0:
        return IncidenceMatrix(sp.csr_matrix((0, n)), None)
    rows = np.repeat(np.arange(m), 2)
    cols = np.empty(2 * m, dtype=np.int64)
    data = np.empty(2 * m)
    weights = np.empty(m)
    for e, (i, j, w) in enumerate(g.edges):
        cols[2 * e] = i
        cols[2 * e + 1] = j
        scale = w if weighted else 1.0
        data[2 * e] = scale
        data[2 * e + 1] = -scale
        weights[e] = w
    gamma = sp.csr_matrix((data, (rows, cols)), shape=(m, n))
    return IncidenceMatrix(gamma, weights if weighted else None)


def connected_components(g):
    """Label connected components by BFS.

    Returns
    -------
    n_components : int
    component_of : ndarray of int
        Component label per node; labels are assigned in order of each
        component's smallest node.
    sizes : ndarray of int
        Component sizes sorted descending (diagnostic ordering).
    """
    component_of = np.full(g.n_nodes, -1, dtype=np.int64)
    neighbors = g.neighbors
    label = 0
    for start in range(g.n_nodes):
        if component_of[start] >= 0:
            continue
        queue = deque([start])
        component_of[start] = label
        while queue:
            u = queue.popleft()
            for v in neighbors[u]:
                if component_of[v] < 0:
                    component_of[v] = label
                    queue.append(v)
        label += 1
    sizes = np.bincount(component_of, minlength=label)
    return label, component_of, np.sort(sizes)[::-1]


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def minimum_spanning_tree(g):
    """Kruskal minimum spanning tree (forest on disconnected graphs).

    Edges are scanned in (weight, i, j) order, which makes the tree
    itself deterministic under weight ties.
    """
    uf = _UnionFind(g.n_nodes)
    kept = []
    for i, j, w in sorted(g.edges, key=lambda e: (e[2], e[0], e[1])):
        if uf.union(i, j):
            kept.append((i, j, w))
    kept.sort(key=lambda e: (e[0], e[1]))
    return DocumentGraph(g.n_nodes, tuple(kept))


def _hop_distances(tree, source):
    """BFS hop counts from ``source`` over tree edges."""
    dist = {source: 0}
    queue = deque([source])
    neighbors = tree.neighbors
    while queue:
        u = queue.popleft()
        for v in neighbors[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def mst_folds(g, b, seed):
    """Partition nodes into ``b`` folds by tree distance mod b.

    Per connected component, a random source node is drawn and each
    node's fold is its minimum-spanning-tree hop distance to the source
    modulo ``b``. Tree-adjacent nodes land in different folds, so every
    node of positive degree has a 1-hop neighbor in another fold.
    Isolated nodes are assigned round-robin and exempt from that
    guarantee.
    """
    if b < 2:
        raise InvalidParameter("fold count b must be at least 2")
    tree = minimum_spanning_tree(g)
    _, component_of, _ = connected_components(g)
    rng = np.random.default_rng(seed)
    fold_of = np.zeros(g.n_nodes, dtype=np.int64)
    sources = []
    isolated = []
    n_components = int(component_of.max()) + 1 if g.n_nodes else 0
    members = [[] for _ in range(n_components)]
    for node, comp in enumerate(component_of):
        members[comp].append(node)
    for comp_nodes in members:
        if len(comp_nodes) == 1:
            isolated.append(comp_nodes[0])
            continue
        source = comp_nodes[int(rng.integers(len(comp_nodes)))]
        sources.append(source)
        dist = _hop_distances(tree, source)
        for node in comp_nodes:
            fold_of[node] = dist[node] % b
    for idx, node in enumerate(sorted(isolated)):
        fold_of[node] = idx % b
    return FoldPartition(fold_of, tuple(sources), b)


def inverse_scaling_factor(gamma):
    """Max column 2-norm of the incidence pseudoinverse.

    Dense diagnostic; guarded to graphs with at most 2000 nodes.
    """
    if gamma.m < 1:
        raise InvalidParameter("inverse scaling factor needs at least one edge")
    if gamma.n_nodes > _INV_SCALING_MAX_NODES:
        raise TooLarge(
            "inverse scaling factor is a dense diagnostic, limited to %d nodes"
            % _INV_SCALING_MAX_NODES
        )
    pinv = np.linalg.pinv(gamma.gamma.toarray())
    return float(np.linalg.norm(pinv, axis=0).max())


def lambda_max_gamma(gamma, tol=1e-8, max_iter=10000):
    """Largest singular value of the incidence matrix.

    Power iteration on the Laplacian gamma.T @ gamma to relative
    tolerance ``tol``; returns sqrt of the top Laplacian eigenvalue.
    """
    if gamma.m < 1:
        raise InvalidParameter("lambda_max needs at least one edge")
    lap = gamma.laplacian()
    n = lap.shape[0]
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = lap @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / norm
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))
