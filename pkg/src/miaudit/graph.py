"""Graph and membership-mask primitives.

Graphs are undirected and simple. Edges are kept as a sorted ``(E, 2)`` array
of pairs ``u < w``; a dense adjacency is never built. Node indices never
change under masking, so masks for different models line up.
"""
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._core import masked_norm_coo

__all__ = [
    "Graph",
    "MaskedAdjacency",
    "as_mask",
    "canonical_edges",
    "masked_adjacency",
    "full_adjacency",
    "drop_node",
    "l_hop_neighborhood",
    "normalized_adjacency",
    "normalized_adjacency_from_mask",
    "write_graph",
    "read_graph",
]


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def canonical_edges(edges, n):
    """Sorted, deduplicated ``u < w`` pairs; rejects self-loops and bad indices."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise ValueError("edge endpoint out of range")
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loops are not allowed")
    e = np.sort(e, axis=1)
    if len(e):
        e = np.unique(e, axis=0)
    return e


@dataclass(frozen=True, eq=False)
class Graph:
    """Node features, labels and an undirected simple edge set."""

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be an n x d matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("feature rows must be finite")
        n = x.shape[0]
        y = np.asarray(self.labels, dtype=np.int64)
        if y.shape != (n,):
            raise ValueError("need one label per node")
        c = int(self.num_classes)
        if c < 1 or (n and (y.min() < 0 or y.max() >= c)):
            raise ValueError("labels must lie in [0, num_classes)")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "edges", _frozen(canonical_edges(self.edges, n)))
        object.__setattr__(self, "num_classes", c)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def edge_set(self):
        return {(int(u), int(w)) for u, w in self.edges}

    def with_edges(self, edges):
        return Graph(self.features, self.labels, edges, self.num_classes)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.edges, other.edges)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MaskedAdjacency:
    """Edges of a graph that survive a membership mask, plus the mask itself."""

    n: int
    edges: np.ndarray
    mask: np.ndarray

    def edge_set(self):
        return {(int(u), int(w)) for u, w in self.edges}

    def neighbors(self):
        """Adjacency lists, built on demand."""
        adj = [[] for _ in range(self.n)]
        for u, w in self.edges.tolist():
            adj[u].append(w)
            adj[w].append(u)
        return adj


def as_mask(bits, n):
    m = np.asarray(bits)
    if m.shape != (n,):
        raise ValueError(f"mask length {m.shape} does not match node count {n}")
    return m.astype(bool)


def masked_adjacency(g, mask):
    """Keep exactly the edges whose endpoints both have mask bit 1."""
    m = as_mask(mask, g.n)
    e = g.edges
    keep = m[e[:, 0]] & m[e[:, 1]] if len(e) else np.zeros(0, dtype=bool)
    return MaskedAdjacency(g.n, _frozen(e[keep]), _frozen(m))


def full_adjacency(g):
    return masked_adjacency(g, np.ones(g.n, dtype=bool))


def drop_node(a, v):
    """Remove every edge incident to ``v`` and clear its mask bit."""
    if not 0 <= v < a.n:
        raise IndexError(f"node {v} out of range for n={a.n}")
    e = a.edges
    keep = (e[:, 0] != v) & (e[:, 1] != v) if len(e) else np.zeros(0, dtype=bool)
    m = np.array(a.mask)
    m[v] = False
    return MaskedAdjacency(a.n, _frozen(e[keep]), _frozen(m))


def l_hop_neighborhood(adj, v, depth):
    """Nodes at hop distance 1..depth from ``v`` (``v`` itself excluded).

    ``adj`` is a :class:`Graph`, a :class:`MaskedAdjacency`, or precomputed
    adjacency lists.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if isinstance(adj, (Graph, MaskedAdjacency)):
        n = adj.n
        lists = full_adjacency(adj).neighbors() if isinstance(adj, Graph) else adj.neighbors()
    else:
        lists = adj
        n = len(lists)
    if not 0 <= v < n:
        raise IndexError(f"node {v} out of range for n={n}")
    dist = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        if dist[u] == depth:
            continue
        for w in lists[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    del dist[v]
    return set(dist)


def normalized_adjacency(a):
    """``D^-1/2 (A + I) D^-1/2`` as CSR, degrees taken from the masked edges.

    Every node keeps its self-loop, so isolated nodes get degree 1.
    """
    n = a.n
    e = a.edges
    rows, cols, vals = masked_norm_coo(e[:, 0], e[:, 1], np.ones(n, dtype=np.uint8), n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def normalized_adjacency_from_mask(g, mask):
    """Same as ``normalized_adjacency(masked_adjacency(g, mask))`` without the detour."""
    e = g.edges
    rows, cols, vals = masked_norm_coo(e[:, 0], e[:, 1], np.asarray(mask, dtype=np.uint8), g.n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))


def _fmt(x):
    return format(float(x), ".17g")


def write_graph(g, path):
    """Text format: ``n d c`` header, n feature rows, one label row, then ``u w`` edge lines."""
    lines = [f"{g.n} {g.d} {g.num_classes}"]
    lines.extend(" ".join(_fmt(x) for x in row) for row in g.features)
    lines.append(" ".join(str(int(y)) for y in g.labels))
    lines.extend(f"{u} {w}" for u, w in g.edges.tolist())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    while lines and not lines[-1]:
        lines.pop()
    try:
        n, d, c = (int(t) for t in lines[0].split())
    except (IndexError, ValueError):
        raise ValueError(f"{path}:1: expected header 'n d c'") from None
    feats = np.zeros((n, d))
    for i in range(n):
        toks = lines[1 + i].split()
        if len(toks) != d:
            raise ValueError(f"{path}:{i + 2}: expected {d} feature values")
        feats[i] = [float(t) for t in toks]
    labels = [int(t) for t in lines[1 + n].split()]
    if len(labels) != n:
        raise ValueError(f"{path}:{n + 2}: expected {n} labels")
    edges = []
    for j, ln in enumerate(lines[n + 2:], start=n + 3):
        toks = ln.split()
        if len(toks) != 2:
            raise ValueError(f"{path}:{j}: expected 'u w'")
        edges.append((int(toks[0]), int(toks[1])))
    return Graph(feats, np.array(labels, dtype=np.int64), np.array(edges, dtype=np.int64).reshape(-1, 2), c)
