"""G-Wishart distribution over precision matrices with a fixed zero pattern.

Shape/inverse-scale convention: density proportional to
``det(K)^((b - 2) / 2) * exp(-tr(K @ D) / 2)`` over positive definite K that
are Markov with respect to the graph.  Includes the upper-triangular
free-element factor machinery, an exact sampler, and the closed-form
normalizing constant on decomposable graphs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import multigammaln

from . import _kernels
from .graphs import BlockGraph, Multigraph, Partition, EdgePrior, expand, log_graph_prior

__all__ = [
    "NotPositiveDefinite",
    "MissingFreeElement",
    "NonPositiveDiagonal",
    "NoConvergence",
    "NotDecomposable",
    "GWishartParams",
    "CholeskyFactor",
    "free_positions",
    "complete_cholesky",
    "log_unnorm_gwishart",
    "sample_gwishart",
    "log_norm_const_decomposable",
    "is_decomposable",
    "exact_graph_posterior",
]


class NotPositiveDefinite(ValueError):
    """Matrix required to be positive definite is not."""


class MissingFreeElement(KeyError):
    """Free-element mapping does not cover every edge and diagonal position."""


class NonPositiveDiagonal(ValueError):
    """Factor diagonal must be strictly positive."""


class NoConvergence(RuntimeError):
    """Iterative completion failed to reach tolerance within the sweep cap."""


class NotDecomposable(ValueError):
    """Graph has a chordless cycle, so the clique factorization does not apply."""


def _as_adjacency(graph) -> np.ndarray:
    if isinstance(graph, Multigraph):
        return expand(graph).adjacency
    if isinstance(graph, BlockGraph):
        return graph.adjacency
    adj = np.asarray(graph, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adj.shape}")
    return adj


@dataclass(frozen=True)
class GWishartParams:
    """Shape b > 2 and symmetric positive definite inverse scale D."""

    b: float
    D: np.ndarray

    def __post_init__(self):
        if self.b <= 2.0:
            raise ValueError(f"shape must exceed 2, got {self.b}")
        D = np.asarray(self.D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError(f"inverse scale must be square, got shape {D.shape}")
        if not np.allclose(D, D.T, atol=1e-12):
            raise ValueError("inverse scale must be symmetric")
        try:
            np.linalg.cholesky(D)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("inverse scale must be positive definite")
        D = D.copy()
        D.flags.writeable = False
        object.__setattr__(self, "D", D)

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    @classmethod
    def identity(cls, p: int, b: float = 3.0) -> "GWishartParams":
        return cls(b=b, D=np.eye(p))


def free_positions(graph) -> list[tuple[int, int]]:
    """Diagonal plus edge positions (i, j), i <= j, in row-major order."""
    adj = _as_adjacency(graph)
    p = adj.shape[0]
    out = []
    for i in range(p):
        out.append((i, i))
        for j in range(i + 1, p):
            if adj[i, j]:
                out.append((i, j))
    return out


@dataclass(frozen=True)
class CholeskyFactor:
    """Upper-triangular factor phi with K = phi.T @ phi Markov w.r.t. a graph."""

    phi: np.ndarray
    adjacency: np.ndarray

    def matrix(self) -> np.ndarray:
        """The precision matrix phi.T @ phi."""
        return self.phi.T @ self.phi

    def free_values(self) -> dict[tuple[int, int], float]:
        return {pos: float(self.phi[pos]) for pos in free_positions(self.adjacency)}

    def log_det(self) -> float:
        """log det of the precision matrix: twice the sum of log diagonal entries."""
        return 2.0 * float(np.sum(np.log(np.diag(self.phi))))


def complete_cholesky(free_values, graph) -> CholeskyFactor:
    """Build the full factor determined by free elements on edges and diagonal.

    Non-free entries are filled row by row so every missing edge of the graph
    gets an exact zero in phi.T @ phi.
    """
    adj = _as_adjacency(graph)
    p = adj.shape[0]
    phi = np.zeros((p, p))
    required = free_positions(adj)
    missing = [pos for pos in required if pos not in free_values]
    if missing:
        raise MissingFreeElement(f"missing free elements at positions {missing[:5]}")
    for pos in required:
        phi[pos] = free_values[pos]
    diag = np.diag(phi)
    if np.any(diag <= 0.0):
        bad = int(np.argmax(diag <= 0.0))
        raise NonPositiveDiagonal(f"diagonal entry {bad} is {diag[bad]:g}, must be > 0")
    _kernels.complete_factor(phi, adj)
    return CholeskyFactor(phi=phi, adjacency=adj)


def log_unnorm_gwishart(K: np.ndarray, params: GWishartParams) -> float:
    """Log of the unnormalized density at K."""
    K = np.asarray(K, dtype=float)
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0:
        raise NotPositiveDefinite("density argument must be positive definite")
    return 0.5 * (params.b - 2.0) * logdet - 0.5 * float(np.sum(K * params.D))


# ---------------------------------------------------------------------------
# exact sampling
# ---------------------------------------------------------------------------

def wishart_scale_factor(D: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of inv(D), the scale matrix of the saturated draw."""
    p = D.shape[0]
    chol_D = np.linalg.cholesky(D)
    inv_D = np.linalg.inv(chol_D.T) @ np.linalg.inv(chol_D)
    inv_D = 0.5 * (inv_D + inv_D.T)
    return np.linalg.cholesky(inv_D)


def _draw_saturated(df: float, scale_factor: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bartlett draw: precision sample for the saturated (complete-graph) model."""
    p = scale_factor.shape[0]
    A = np.zeros((p, p))
    dof = df - np.arange(p)
    np.fill_diagonal(A, np.sqrt(rng.chisquare(dof)))
    rows, cols = np.tril_indices(p, k=-1)
    A[rows, cols] = rng.standard_normal(rows.size)
    LA = scale_factor @ A
    return LA @ LA.T


def sample_gwishart_factor(
    adjacency: np.ndarray,
    b: float,
    scale_factor: np.ndarray,
    rng: np.random.Generator,
    tol: float = 1e-8,
    max_sweeps: int = 1000,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact constrained draw returning (K, phi) with K = phi.T @ phi.

    Draws the saturated model exactly, then completes its covariance over the
    missing edges so the zero pattern holds; the final factor is re-completed
    so missing-edge entries of K are exact zeros.
    """
    p = adjacency.shape[0]
    df = b + p - 1.0
    W_full = _draw_saturated(df, scale_factor, rng)
    K, phi, status = _kernels.constrained_draw(W_full, adjacency, tol, max_sweeps)
    if status == _kernels.STATUS_NO_CONVERGENCE:
        raise NoConvergence(f"completion exceeded {max_sweeps} sweeps at tol {tol:g}")
    if status == _kernels.STATUS_NOT_PD:
        raise NotPositiveDefinite("completion iterate lost positive definiteness")
    return K, phi


def sample_gwishart(
    graph,
    params: GWishartParams,
    rng: np.random.Generator,
    tol: float = 1e-8,
    max_sweeps: int = 1000,
) -> np.ndarray:
    """Draw one precision matrix exactly from the constrained distribution."""
    adj = _as_adjacency(graph)
    if adj.shape[0] != params.dim:
        raise ValueError(
            f"graph has {adj.shape[0]} nodes but inverse scale is {params.dim}x{params.dim}"
        )
    scale_factor = wishart_scale_factor(params.D)
    K, _ = sample_gwishart_factor(adj, params.b, scale_factor, rng, tol, max_sweeps)
    return K


# ---------------------------------------------------------------------------
# decomposable normalizing constant
# ---------------------------------------------------------------------------

def _mcs_order(adj: np.ndarray) -> np.ndarray:
    """Maximum cardinality search visit order, lowest index on ties."""
    p = adj.shape[0]
    weight = np.zeros(p, dtype=np.int64)
    visited = np.zeros(p, dtype=bool)
    order = np.empty(p, dtype=np.int64)
    for step in range(p):
        best = -1
        for v in range(p):
            if not visited[v] and (best < 0 or weight[v] > weight[best]):
                best = v
        order[step] = best
        visited[best] = True
        weight[adj[best] & ~visited] += 1
    return order


def perfect_elimination_order(adj: np.ndarray):
    """A perfect elimination order of the graph, or None when none exists."""
    p = adj.shape[0]
    order = _mcs_order(adj)[::-1]
    rank = np.empty(p, dtype=np.int64)
    rank[order] = np.arange(p)
    for v in range(p):
        later = [u for u in range(p) if adj[v, u] and rank[u] > rank[v]]
        for a, bnode in itertools.combinations(later, 2):
            if not adj[a, bnode]:
                return None
    return order


def is_decomposable(graph) -> bool:
    return perfect_elimination_order(_as_adjacency(graph)) is not None


def clique_separators(adj: np.ndarray) -> tuple[list[frozenset], list[frozenset]]:
    """Maximal cliques and junction-tree separators (with multiplicity)."""
    peo = perfect_elimination_order(adj)
    if peo is None:
        raise NotDecomposable("graph is not decomposable")
    p = adj.shape[0]
    rank = np.empty(p, dtype=np.int64)
    rank[peo] = np.arange(p)
    candidates = []
    for v in peo:
        c = frozenset([v] + [u for u in range(p) if adj[v, u] and rank[u] > rank[v]])
        candidates.append(c)
    cliques = [c for c in candidates if not any(c < other for other in candidates)]
    cliques = list(dict.fromkeys(cliques))
    if len(cliques) <= 1:
        return cliques, []
    # maximum-weight spanning tree of the clique graph (Kruskal)
    pairs = sorted(
        itertools.combinations(range(len(cliques)), 2),
        key=lambda ab: -len(cliques[ab[0]] & cliques[ab[1]]),
    )
    parent = list(range(len(cliques)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    separators = []
    for a, bidx in pairs:
        ra, rb = find(a), find(bidx)
        if ra != rb:
            parent[ra] = rb
            separators.append(cliques[a] & cliques[bidx])
            if len(separators) == len(cliques) - 1:
                break
    return cliques, separators


def _log_const_complete(nodes, b: float, D: np.ndarray) -> float:
    """Closed-form log normalizing constant for a complete subgraph."""
    q = len(nodes)
    if q == 0:
        return 0.0
    idx = np.fromiter(nodes, dtype=np.int64)
    sub = D[np.ix_(idx, idx)]
    sign, logdet = np.linalg.slogdet(sub)
    if sign <= 0:
        raise NotPositiveDefinite("inverse-scale submatrix must be positive definite")
    half_df = 0.5 * (b + q - 1.0)
    return q * half_df * math.log(2.0) + multigammaln(half_df, q) - half_df * logdet


def log_norm_const_decomposable(graph, params: GWishartParams) -> float:
    """Log normalizing constant via the clique/separator factorization."""
    adj = _as_adjacency(graph)
    if adj.shape[0] != params.dim:
        raise ValueError("graph and inverse scale dimensions differ")
    cliques, separators = clique_separators(adj)
    total = sum(_log_const_complete(c, params.b, params.D) for c in cliques)
    total -= sum(_log_const_complete(s, params.b, params.D) for s in separators)
    return total


# ---------------------------------------------------------------------------
# exhaustive posterior over multigraphs (tiny instances)
# ---------------------------------------------------------------------------

def exact_graph_posterior(
    partition: Partition,
    prior: EdgePrior,
    params: GWishartParams,
    data: np.ndarray,
) -> list[tuple[Multigraph, float]]:
    """Enumerate every multigraph and return exact posterior probabilities.

    Every expanded graph must be decomposable so the marginal likelihood is
    available in closed form.  Intended for validation on very small models.
    """
    admissible = partition.admissible_edges()
    if len(admissible) > 20:
        raise ValueError(f"{len(admissible)} admissible edges is too many to enumerate")
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != partition.n_nodes:
        raise ValueError("data must be n x p with p matching the partition")
    n = data.shape[0]
    post = GWishartParams(b=params.b + n, D=params.D + data.T @ data)
    entries = []
    log_weights = []
    for r in range(len(admissible) + 1):
        for subset in itertools.combinations(admissible, r):
            gb = Multigraph(partition, frozenset(subset))
            adj = expand(gb).adjacency
            if not is_decomposable(adj):
                raise NotDecomposable(f"expanded graph of {sorted(subset)} is not decomposable")
            lw = (
                log_graph_prior(gb, prior)
                + log_norm_const_decomposable(adj, post)
                - log_norm_const_decomposable(adj, params)
            )
            entries.append(gb)
            log_weights.append(lw)
    lw = np.array(log_weights)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    return list(zip(entries, w.tolist()))
