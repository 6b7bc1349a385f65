"""Topological metrics on undirected graphs.

Per-node degree, closeness centrality, eigenvector centrality, PageRank, and
graph-level (per-phase) summaries used as the regression feature set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError


class SimpleGraph:
    """Undirected simple graph with sorted CSR adjacency.

    Self-loops are rejected; duplicate edges collapse to one.
    """

    def __init__(self, n: int, edges):
        if n < 0:
            raise ValueError("node count must be >= 0")
        self.n = int(n)
        pairs = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            pairs.add((min(i, j), max(i, j)))
        self.edge_count = len(pairs)
        if pairs:
            und = np.array(sorted(pairs), dtype=np.int64)
            src = np.concatenate([und[:, 0], und[:, 1]])
            dst = np.concatenate([und[:, 1], und[:, 0]])
            order = np.lexsort((dst, src))
            self._src = src[order]
            self._dst = dst[order]
        else:
            self._src = np.empty(0, dtype=np.int64)
            self._dst = np.empty(0, dtype=np.int64)
        counts = np.bincount(self._src, minlength=self.n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.indices = self._dst.copy()

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def undirected_edges(self) -> np.ndarray:
        """(m, 2) array of edges with i < j, lexicographically sorted."""
        mask = self._src < self._dst
        return np.column_stack([self._src[mask], self._dst[mask]])


def degree(g: SimpleGraph) -> np.ndarray:
    return np.diff(g.indptr)


def avg_degree(g: SimpleGraph) -> float:
    if g.n == 0:
        return 0.0
    return float(degree(g).mean())


def _bfs_distances(g: SimpleGraph, source: int) -> np.ndarray:
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    d = 0
    while frontier.size:
        nbrs = np.concatenate([g.neighbors(v) for v in frontier]) if frontier.size else frontier
        nbrs = np.unique(nbrs)
        nxt = nbrs[dist[nbrs] < 0]
        d += 1
        dist[nxt] = d
        frontier = nxt
    return dist


def closeness(g: SimpleGraph) -> np.ndarray:
    """Inverse sum of shortest-path distances to reachable peers.

    The sum runs over reachable vertices only; a node with no reachable peer
    gets 0.
    """
    out = np.zeros(g.n, dtype=np.float64)
    for v in range(g.n):
        dist = _bfs_distances(g, v)
        total = int(dist[dist > 0].sum())
        if total > 0:
            out[v] = 1.0 / total
    return out


def connected_components(g: SimpleGraph) -> list[np.ndarray]:
    """Node index arrays, one per component, in order of smallest member."""
    seen = np.zeros(g.n, dtype=bool)
    comps = []
    for v in range(g.n):
        if seen[v]:
            continue
        dist = _bfs_distances(g, v)
        comp = np.flatnonzero(dist >= 0)
        seen[comp] = True
        comps.append(comp)
    return comps


def eigencentrality(g: SimpleGraph, tol: float = 1e-10, max_iter: int = 10000) -> np.ndarray:
    """Principal adjacency eigenvector, per connected component.

    Each component with at least one edge gets its own non-negative,
    unit-L2-norm eigenvector; components without edges get 0. Power
    iteration runs on A+I, which has the same eigenvectors as A but a
    strictly dominant top eigenvalue even on bipartite components.
    """
    out = np.zeros(g.n, dtype=np.float64)
    for comp in connected_components(g):
        if comp.size < 2:
            continue
        m = comp.size
        # component edge arrays (both directions), renumbered 0..m-1
        mask = np.isin(g._src, comp)
        csrc = np.searchsorted(comp, g._src[mask])
        cdst = np.searchsorted(comp, g._dst[mask])
        x = np.full(m, 1.0 / np.sqrt(m))
        converged = False
        residual = np.inf
        for _ in range(max_iter):
            y = x.copy()
            np.add.at(y, cdst, x[csrc])
            y /= np.linalg.norm(y)
            residual = float(np.linalg.norm(y - x))
            x = y
            if residual < tol:
                converged = True
                break
        if not converged:
            raise ConvergenceError(
                f"eigencentrality did not converge in {max_iter} iterations",
                last=x, residual=residual,
            )
        out[comp] = x
    return out


def pagerank(g: SimpleGraph, damping: float = 0.85, tol: float = 1e-10,
             max_iter: int = 10000) -> np.ndarray:
    """Stationary random-walk weights with uniform teleport.

    Degree-0 nodes redistribute their mass uniformly, so the output is a
    probability distribution (sums to 1).
    """
    n = g.n
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    deg = degree(g).astype(np.float64)
    dangling = deg == 0
    pr = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        contrib = np.where(dangling, 0.0, pr / np.maximum(deg, 1.0))
        acc = np.zeros(n)
        np.add.at(acc, g._dst, contrib[g._src])
        acc += pr[dangling].sum() / n
        new = (1.0 - damping) / n + damping * acc
        delta = float(np.abs(new - pr).sum())
        pr = new
        if delta < tol:
            return pr
    raise ConvergenceError(
        f"pagerank did not converge in {max_iter} iterations",
        last=pr, residual=delta,
    )


SUMMARY_FEATURE_NAMES = [
    "solid_nodes", "solid_edges", "solid_avg_degree", "solid_avg_closeness",
    "solid_avg_eigencentrality", "solid_avg_pagerank",
    "pore_nodes", "pore_edges", "pore_avg_degree", "pore_avg_closeness",
    "pore_avg_eigencentrality", "pore_avg_pagerank",
]


@dataclass(frozen=True)
class GraphSummary:
    """Per-phase global features of a two-phase rock graph (12 values)."""

    solid_nodes: float
    solid_edges: float
    solid_avg_degree: float
    solid_avg_closeness: float
    solid_avg_eigencentrality: float
    solid_avg_pagerank: float
    pore_nodes: float
    pore_edges: float
    pore_avg_degree: float
    pore_avg_closeness: float
    pore_avg_eigencentrality: float
    pore_avg_pagerank: float

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in SUMMARY_FEATURE_NAMES])


def summarize(graph) -> GraphSummary:
    """Aggregate a RockGraph into its 12 per-phase global features.

    Node-level metric slots were computed on per-phase subgraphs at build
    time, so phase averages read straight off the stored feature matrix.
    """
    from .mapper import F_DEGREE, F_CLOSENESS, F_EIGEN, F_PAGERANK
    from .voxel import PORE, SOLID

    feats = graph.features
    phases = graph.phases
    values = []
    for phase in (SOLID, PORE):
        mask = phases == phase
        count = int(mask.sum())
        if count == 0:
            values.extend([0.0] * 6)
            continue
        if graph.edges.size:
            edge_count = int((phases[graph.edges[:, 0]] == phase).sum())
        else:
            edge_count = 0
        block = feats[mask]
        values.extend([
            float(count),
            float(edge_count),
            float(block[:, F_DEGREE].mean()),
            float(block[:, F_CLOSENESS].mean()),
            float(block[:, F_EIGEN].mean()),
            float(block[:, F_PAGERANK].mean()),
        ])
    return GraphSummary(*values)


def write_summary_csv(rows, path) -> None:
    """Write per-graph summary rows.

    Each row is (id, porosity, summary, labels) where porosity and labels
    may be None; labels is a (k, mu) pair in GPa.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "porosity"] + SUMMARY_FEATURE_NAMES + ["k_gpa", "mu_gpa"])
        for sample_id, phi, summary, labels in rows:
            vec = summary.as_vector() if isinstance(summary, GraphSummary) else np.asarray(summary)
            row = [sample_id, "" if phi is None else repr(float(phi))]
            row += [repr(float(v)) for v in vec]
            if labels is None:
                row += ["", ""]
            else:
                row += [repr(float(labels[0])), repr(float(labels[1]))]
            writer.writerow(row)
