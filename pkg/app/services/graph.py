"""
Communication graphs for the partial-decision dynamics.

Nodes are players. Public builders take 1-based node ids (matching the
config format); all array indices inside the library are 0-based.
"""

import logging
import re
from collections.abc import Iterable
from dataclasses import dataclass

import networkx as nx
import numpy as np

from app.errors import DisconnectedGraphError, InvalidArgumentError
from app.services.linalg import min_symmetric_eigenvalue

logger = logging.getLogger("penaltynash.graph")

_GRAPH_SPEC = re.compile(r"^(ring|path|complete):(\d+)$")


def _as_weights(weights) -> np.ndarray:
    w = np.array(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
        raise InvalidArgumentError("adjacency matrix must be square and nonempty", shape=w.shape)
    if not np.all(np.isfinite(w)):
        raise InvalidArgumentError("adjacency weights must be finite")
    if np.any(w < 0):
        raise InvalidArgumentError("adjacency weights must be nonnegative")
    if np.any(np.diag(w) != 0):
        raise InvalidArgumentError("adjacency matrix must have a zero diagonal")
    if not np.array_equal(w, w.T):
        raise InvalidArgumentError("adjacency matrix must be symmetric (undirected graph)")
    return w


def is_connected(graph) -> bool:
    """Reachability over edges with positive weight. Accepts a CommGraph or a raw adjacency matrix."""
    w = graph.weights if isinstance(graph, CommGraph) else np.asarray(graph, dtype=float)
    if w.shape[0] == 1:
        return True
    return bool(nx.is_connected(nx.from_numpy_array((w > 0).astype(float))))


@dataclass(frozen=True)
class CommGraph:
    """Undirected connected communication graph given by its weighted adjacency matrix."""

    weights: np.ndarray

    def __post_init__(self):
        w = _as_weights(self.weights)
        if not is_connected(w):
            raise DisconnectedGraphError("communication graph must be connected", n_nodes=w.shape[0])
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.weights[i] > 0)

    def edges(self) -> list[tuple[int, int, float]]:
        """Edge list (0-based, i < j)."""
        n = self.n_nodes
        return [(i, j, float(self.weights[i, j])) for i in range(n) for j in range(i + 1, n) if self.weights[i, j] > 0]


def from_edges(n: int, edges: Iterable) -> CommGraph:
    """Build a graph from 1-based (i, j) or (i, j, weight) tuples."""
    if n < 1:
        raise InvalidArgumentError("graph needs at least one node", n=n)
    w = np.zeros((n, n))
    for edge in edges:
        if len(edge) not in (2, 3):
            raise InvalidArgumentError("edge must be (i, j) or (i, j, weight)", edge=list(edge))
        i, j = int(edge[0]), int(edge[1])
        weight = float(edge[2]) if len(edge) == 3 else 1.0
        if not (1 <= i <= n and 1 <= j <= n) or i == j:
            raise InvalidArgumentError("edge endpoints must be distinct ids in 1..n", edge=[i, j], n=n)
        if weight <= 0:
            raise InvalidArgumentError("edge weight must be positive", edge=[i, j], weight=weight)
        w[i - 1, j - 1] = w[j - 1, i - 1] = weight
    return CommGraph(w)


def _from_networkx(g: nx.Graph, n: int) -> CommGraph:
    return CommGraph(nx.to_numpy_array(g, nodelist=list(range(n)), weight=None))


def ring(n: int) -> CommGraph:
    if n < 1:
        raise InvalidArgumentError("ring needs at least one node", n=n)
    if n <= 2:
        return _from_networkx(nx.path_graph(n), n)
    return _from_networkx(nx.cycle_graph(n), n)


def path(n: int) -> CommGraph:
    if n < 1:
        raise InvalidArgumentError("path needs at least one node", n=n)
    return _from_networkx(nx.path_graph(n), n)


def complete(n: int) -> CommGraph:
    if n < 1:
        raise InvalidArgumentError("complete graph needs at least one node", n=n)
    return _from_networkx(nx.complete_graph(n), n)


_BUILDERS = {"ring": ring, "path": path, "complete": complete}


def parse_graph_spec(spec: str) -> CommGraph:
    """Named builtin graph such as "ring:5", "path:3" or "complete:4"."""
    match = _GRAPH_SPEC.match(spec.strip())
    if not match:
        raise InvalidArgumentError("unknown graph spec, expected ring:N, path:N or complete:N", spec=spec)
    kind, n = match.group(1), int(match.group(2))
    return _BUILDERS[kind](n)


def laplacian(g: CommGraph) -> np.ndarray:
    return np.diag(g.weights.sum(axis=1)) - g.weights


def reduced_consensus_matrix(g: CommGraph, i: int) -> np.ndarray:
    """L_i + B_i for player i (0-based): Laplacian of the graph without i plus the links into i."""
    n = g.n_nodes
    if not 0 <= i < n:
        raise InvalidArgumentError("player index out of range", i=i, n=n)
    keep = np.array([k for k in range(n) if k != i], dtype=int)
    sub = g.weights[np.ix_(keep, keep)]
    return np.diag(sub.sum(axis=1)) - sub + np.diag(g.weights[keep, i])


def lambda_min_all(g: CommGraph) -> float:
    """Smallest eigenvalue over all reduced consensus matrices. Infinite for a single player."""
    if g.n_nodes == 1:
        return float("inf")
    value = min(min_symmetric_eigenvalue(reduced_consensus_matrix(g, i)) for i in range(g.n_nodes))
    logger.debug("lambda_min over %d reduced matrices: %.6g", g.n_nodes, value)
    return value
