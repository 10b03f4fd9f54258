"""Node partitions, group-level multigraphs, and their block-structured expansions.

A partition groups the p nodes of a Gaussian graphical model into M ordered,
contiguous groups.  Structure learning then happens on a small multigraph over
the M groups: a cross edge (l, m) stands for the complete bipartite set of
node-level edges between groups l and m, and a self loop (l, l) stands for the
within-group clique.  ``expand`` / ``collapse`` convert between the two scales.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NotBlockStructured",
    "Partition",
    "Multigraph",
    "BlockGraph",
    "EdgePrior",
    "expand",
    "collapse",
    "block_pairs",
    "nbd_add",
    "nbd_remove",
    "log_graph_prior",
    "sample_prior_graph",
    "nu_counts",
]


class NotBlockStructured(ValueError):
    """Adjacency has a group-pair sub-block that is neither full nor empty."""


@dataclass(frozen=True)
class Partition:
    """Contiguous grouping of p ordered nodes into M non-empty groups."""

    group_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.group_sizes)
        if len(sizes) == 0:
            raise ValueError("partition needs at least one group")
        if any(s < 1 for s in sizes):
            raise ValueError(f"group sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "group_sizes", sizes)
        starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        object.__setattr__(self, "_starts", starts)
        group_of = np.repeat(np.arange(len(sizes)), sizes)
        object.__setattr__(self, "_group_of", group_of)

    @property
    def n_groups(self) -> int:
        return len(self.group_sizes)

    @property
    def n_nodes(self) -> int:
        return int(self._starts[-1])

    def members(self, group: int) -> range:
        """Node indices belonging to ``group``."""
        return range(int(self._starts[group]), int(self._starts[group + 1]))

    def group_of(self, node: int) -> int:
        return int(self._group_of[node])

    def admissible_edges(self) -> tuple[tuple[int, int], ...]:
        """All multigraph edges allowed under this partition, lexicographic.

        Cross edges (l, m) with l < m are always allowed; a self loop (l, l)
        is allowed only when group l has at least two nodes.
        """
        out = []
        for l in range(self.n_groups):
            if self.group_sizes[l] > 1:
                out.append((l, l))
            for m in range(l + 1, self.n_groups):
                out.append((l, m))
        return tuple(sorted(out))

    @property
    def n_admissible(self) -> int:
        M = self.n_groups
        return M * (M - 1) // 2 + sum(1 for s in self.group_sizes if s > 1)


def _normalize_edge(edge) -> tuple[int, int]:
    l, m = int(edge[0]), int(edge[1])
    return (l, m) if l <= m else (m, l)


@dataclass(frozen=True)
class Multigraph:
    """Undirected multigraph over partition groups; self loops mark within-group cliques."""

    partition: Partition
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset(_normalize_edge(e) for e in self.edges)
        M = self.partition.n_groups
        for l, m in edges:
            if not (0 <= l <= m < M):
                raise ValueError(f"edge {(l, m)} outside group range 0..{M - 1}")
            if l == m and self.partition.group_sizes[l] < 2:
                raise ValueError(f"self loop {(l, l)} needs group size >= 2")
        object.__setattr__(self, "edges", edges)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def with_edge(self, edge) -> "Multigraph":
        return Multigraph(self.partition, self.edges | {_normalize_edge(edge)})

    def without_edge(self, edge) -> "Multigraph":
        return Multigraph(self.partition, self.edges - {_normalize_edge(edge)})

    def missing_edges(self) -> list[tuple[int, int]]:
        return [e for e in self.partition.admissible_edges() if e not in self.edges]

    def present_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def expand(self) -> "BlockGraph":
        return expand(self)


@dataclass(frozen=True)
class BlockGraph:
    """Node-level graph stored as a boolean adjacency matrix, read-only after construction."""

    partition: Partition
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        p = self.partition.n_nodes
        if adj.shape != (p, p):
            raise ValueError(f"adjacency must be {p}x{p}, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("adjacency diagonal must be empty")
        adj = adj.copy()
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency)))

    def collapse(self) -> Multigraph:
        return collapse(self)


@dataclass(frozen=True)
class EdgePrior:
    """Independent-Bernoulli prior over admissible multigraph edges."""

    theta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie strictly in (0, 1), got {self.theta}")


def block_pairs(partition: Partition, l: int, m: int) -> list[tuple[int, int]]:
    """Node-level edge positions (i, j), i < j, covered by multigraph edge (l, m)."""
    if l == m:
        return list(itertools.combinations(partition.members(l), 2))
    if l > m:
        l, m = m, l
    return [(i, j) for i in partition.members(l) for j in partition.members(m)]


def expand(gb: Multigraph) -> BlockGraph:
    """Blow a multigraph up to its node-level block-structured graph."""
    p = gb.partition.n_nodes
    adj = np.zeros((p, p), dtype=bool)
    for l, m in gb.edges:
        for i, j in block_pairs(gb.partition, l, m):
            adj[i, j] = adj[j, i] = True
    return BlockGraph(gb.partition, adj)


def collapse(g: BlockGraph) -> Multigraph:
    """Invert ``expand``; raises NotBlockStructured when a group block is partial."""
    part = g.partition
    adj = g.adjacency
    edges = set()
    for l in range(part.n_groups):
        for m in range(l, part.n_groups):
            pairs = block_pairs(part, l, m)
            if not pairs:
                continue
            values = [adj[i, j] for i, j in pairs]
            if all(values):
                edges.add((l, m))
            elif any(values):
                raise NotBlockStructured(
                    f"group block ({l}, {m}) is partially filled: "
                    f"{sum(values)}/{len(values)} node edges present"
                )
    return Multigraph(part, frozenset(edges))


def nbd_add(gb: Multigraph) -> list[Multigraph]:
    """Multigraphs reachable by adding one admissible edge, lexicographic order."""
    return [gb.with_edge(e) for e in gb.missing_edges()]


def nbd_remove(gb: Multigraph) -> list[Multigraph]:
    """Multigraphs reachable by removing one present edge, lexicographic order."""
    return [gb.without_edge(e) for e in gb.present_edges()]


def log_graph_prior(gb: Multigraph, prior: EdgePrior) -> float:
    """Log prior mass of a multigraph under independent edge inclusion.

    Each of the T admissible edges is present independently with probability
    theta, so the complement exponent is T - |E| and the mass sums to one over
    the admissible edge set.
    """
    T = gb.partition.n_admissible
    k = gb.n_edges
    return k * math.log(prior.theta) + (T - k) * math.log1p(-prior.theta)


def log_block_graph_prior(g: BlockGraph, prior: EdgePrior) -> float:
    """Log prior of a node-level graph: its collapsed mass, -inf off the block family."""
    try:
        gb = collapse(g)
    except NotBlockStructured:
        return -math.inf
    return log_graph_prior(gb, prior)


def sample_prior_graph(prior: EdgePrior, partition: Partition, rng: np.random.Generator) -> Multigraph:
    """Draw a multigraph by independent edge flips over the admissible set."""
    admissible = partition.admissible_edges()
    keep = rng.random(len(admissible)) < prior.theta
    return Multigraph(partition, frozenset(e for e, k in zip(admissible, keep) if k))


def nu_counts(graph) -> np.ndarray:
    """Per-node count of higher-indexed neighbours (free off-diagonal slots per row)."""
    adj = graph.adjacency if hasattr(graph, "adjacency") else np.asarray(graph, dtype=bool)
    return np.count_nonzero(np.triu(adj, k=1), axis=1).astype(np.int64)
