"""Time-varying directed communication graphs.

A graph sequence is described by a :class:`GraphSpec`; :func:`generate_edges`
turns it into the edge set of one round. Rounds are numbered from 1.

An edge ``(i, j)`` means node ``i`` can send to node ``j`` in that round. Every
edge set contains all self-loops.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from ._rng import STREAM_TOPOLOGY, keyed_rng

__all__ = [
    "TopologyKind",
    "GraphSpec",
    "EdgeSet",
    "ConnectivityReport",
    "generate_edges",
    "aggregate_window",
    "validate_assumption1",
    "check_windows",
    "out_neighbors",
    "default_period",
    "max_out_degree",
]


class TopologyKind(str, Enum):
    FULL = "Full"
    DIVIDE = "Divide"
    EXP = "Exp"
    RANDOM = "Random"


def _exp_cycle(n_nodes):
    return max(1, math.ceil(math.log2(n_nodes)))


def default_period(kind, n_nodes):
    """Smallest period B for which the built-in ``kind`` is B-strongly connected.

    Random uses 8, the value used in the original experiments.
    """
    kind = TopologyKind(kind)
    if kind is TopologyKind.EXP:
        return _exp_cycle(n_nodes)
    if kind is TopologyKind.RANDOM:
        return 8
    return 1


@dataclass(frozen=True)
class GraphSpec:
    """Generator state for a time-varying directed graph.

    ``cluster_split`` is the node list of cluster 0; the remaining nodes form
    cluster 1. When omitted, the first ``n_nodes // 2`` nodes are cluster 0.
    ``period_b`` defaults to :func:`default_period`.
    """

    kind: TopologyKind
    n_nodes: int
    period_b: int | None = None
    p_inner: float = 0.5
    p_inter: float = 0.25
    cluster_split: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", TopologyKind(self.kind))
        if self.n_nodes < 2:
            raise ValueError(f"a graph needs at least 2 nodes, got {self.n_nodes}")
        if self.period_b is None:
            object.__setattr__(self, "period_b", default_period(self.kind, self.n_nodes))
        if self.period_b < 1:
            raise ValueError(f"period_b must be >= 1, got {self.period_b}")
        for name in ("p_inner", "p_inter"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.cluster_split is None:
            object.__setattr__(self, "cluster_split", tuple(range(self.n_nodes // 2)))
        else:
            object.__setattr__(self, "cluster_split", tuple(int(i) for i in self.cluster_split))
        c0 = self.cluster_split
        if len(set(c0)) != len(c0) or any(not 0 <= i < self.n_nodes for i in c0):
            raise ValueError(f"invalid cluster_split {c0} for {self.n_nodes} nodes")
        if self.kind in (TopologyKind.DIVIDE, TopologyKind.RANDOM):
            if len(c0) == 0 or len(c0) == self.n_nodes:
                raise ValueError("both clusters must be non-empty")

    @property
    def cluster_labels(self) -> np.ndarray:
        """Per-node cluster index (0 or 1)."""
        labels = np.ones(self.n_nodes, dtype=int)
        labels[list(self.cluster_split)] = 0
        return labels


class EdgeSet:
    """The directed links of one round, stored as a boolean adjacency mask.

    ``mask[i, j]`` is true when ``i`` can send to ``j``.
    """

    __slots__ = ("n_nodes", "mask")

    def __init__(self, n_nodes: int, edges: Iterable[tuple[int, int]] | np.ndarray = ()):
        if isinstance(edges, np.ndarray):
            mask = np.array(edges, dtype=bool)
            if mask.shape != (n_nodes, n_nodes):
                raise ValueError(f"mask shape {mask.shape} does not match {n_nodes} nodes")
        else:
            mask = np.zeros((n_nodes, n_nodes), dtype=bool)
            for i, j in edges:
                if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                    raise ValueError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
                mask[i, j] = True
        np.fill_diagonal(mask, True)
        mask.setflags(write=False)
        self.n_nodes = n_nodes
        self.mask = mask

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(zip(*(idx.tolist() for idx in np.nonzero(self.mask))))

    def __len__(self):
        return int(self.mask.sum())

    def __contains__(self, pair):
        i, j = pair
        return bool(self.mask[i, j])

    def __eq__(self, other):
        if not isinstance(other, EdgeSet):
            return NotImplemented
        return self.n_nodes == other.n_nodes and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash((self.n_nodes, self.mask.tobytes()))

    def __repr__(self):
        return f"EdgeSet(n_nodes={self.n_nodes}, n_edges={len(self)})"


@dataclass(frozen=True)
class ConnectivityReport:
    is_b_strongly_connected: bool
    diameter_delta: int | None
    first_violating_window: int | None = None


def generate_edges(spec: GraphSpec, t: int) -> EdgeSet:
    """Edge set of round ``t`` (``t >= 1``); a pure function of ``(spec, t)``."""
    if t < 1:
        raise ValueError(f"rounds start at 1, got t={t}")
    n = spec.n_nodes
    kind = spec.kind
    if kind is TopologyKind.FULL:
        return EdgeSet(n, np.ones((n, n), dtype=bool))

    if kind is TopologyKind.DIVIDE:
        labels = spec.cluster_labels
        mask = labels[:, None] == labels[None, :]
        a = min(np.flatnonzero(labels == 0))
        b = min(np.flatnonzero(labels == 1))
        mask[a, b] = mask[b, a] = True
        return EdgeSet(n, mask)

    if kind is TopologyKind.EXP:
        offset = 2 ** (t % _exp_cycle(n))
        mask = np.zeros((n, n), dtype=bool)
        idx = np.arange(n)
        mask[idx, (idx + offset) % n] = True
        return EdgeSet(n, mask)

    # Random: every window of B rounds contains one forced-open round.
    if t % spec.period_b == 0:
        return EdgeSet(n, np.ones((n, n), dtype=bool))
    labels = spec.cluster_labels
    prob = np.where(labels[:, None] == labels[None, :], spec.p_inner, spec.p_inter)
    # uniform draw for entry (i, j) depends only on (seed, t, i, j)
    u = keyed_rng(spec.seed, STREAM_TOPOLOGY, t).random((n, n))
    return EdgeSet(n, u < prob)


def aggregate_window(edges: Sequence[EdgeSet]) -> EdgeSet:
    """Union of a window of edge sets."""
    if not edges:
        raise ValueError("cannot aggregate an empty window")
    n = edges[0].n_nodes
    mask = np.zeros((n, n), dtype=bool)
    for e in edges:
        if e.n_nodes != n:
            raise ValueError(f"mismatched node counts {n} and {e.n_nodes}")
        mask |= e.mask
    return EdgeSet(n, mask)


def out_neighbors(e: EdgeSet, i: int) -> set[int]:
    if not 0 <= i < e.n_nodes:
        raise IndexError(f"node {i} out of range for {e.n_nodes} nodes")
    return set(np.flatnonzero(e.mask[i]).tolist())


def _eccentricities(mask):
    """BFS hop distance from every node; -1 marks unreachable."""
    n = mask.shape[0]
    dist = np.full((n, n), -1, dtype=int)
    nbrs = [np.flatnonzero(mask[i]) for i in range(n)]
    for src in range(n):
        dist[src, src] = 0
        frontier = deque([src])
        while frontier:
            u = frontier.popleft()
            for v in nbrs[u]:
                if dist[src, v] < 0:
                    dist[src, v] = dist[src, u] + 1
                    frontier.append(v)
    return dist


def graph_diameter(e: EdgeSet) -> int | None:
    """Diameter of a directed graph, or None if it is not strongly connected."""
    dist = _eccentricities(e.mask)
    if (dist < 0).any():
        return None
    return int(dist.max())


def check_windows(edge_sets: Sequence[EdgeSet], period_b: int) -> ConnectivityReport:
    """Check every length-``period_b`` window of an explicit edge-set sequence.

    Window ``k`` (1-based) covers ``edge_sets[k-1 : k-1+period_b]``.
    """
    if len(edge_sets) < period_b:
        raise ValueError(f"need at least {period_b} rounds, got {len(edge_sets)}")
    delta = 0
    for start in range(len(edge_sets) - period_b + 1):
        diam = graph_diameter(aggregate_window(edge_sets[start : start + period_b]))
        if diam is None:
            return ConnectivityReport(False, None, start + 1)
        delta = max(delta, diam)
    # a single-node graph has diameter 0; keep Δ >= 1 so ΔB is a positive length
    return ConnectivityReport(True, max(delta, 1))


def validate_assumption1(spec: GraphSpec, horizon: int) -> ConnectivityReport:
    """Check B-strong connectivity of ``spec`` over rounds ``1..horizon``."""
    if horizon < spec.period_b:
        raise ValueError(f"horizon {horizon} shorter than period {spec.period_b}")
    edges = [generate_edges(spec, t) for t in range(1, horizon + 1)]
    return check_windows(edges, spec.period_b)


def max_out_degree(spec: GraphSpec, horizon: int) -> int:
    """Largest out-degree (self-loop included) over rounds ``1..horizon``."""
    return max(int(generate_edges(spec, t).mask.sum(axis=1).max()) for t in range(1, horizon + 1))
