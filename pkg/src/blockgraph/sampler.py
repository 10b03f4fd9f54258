"""Reversible-jump MCMC over block-structured graphs and their precision matrices.

Each iteration proposes flipping one multigraph edge (a whole block of
node-level edges at once), carries the current factor across the dimension
change by perturbing exactly the entries that switch from completed to free,
and cancels the intractable normalizing constants with an auxiliary draw from
the prior on the proposed graph.  The precision matrix is then refreshed from
its conjugate full conditional, so the graph and the matrix never desynchronize.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graphs import (
    BlockGraph,
    EdgePrior,
    Multigraph,
    Partition,
    block_pairs,
    expand,
)
from .gwishart import (
    CholeskyFactor,
    GWishartParams,
    sample_gwishart_factor,
    wishart_scale_factor,
)

__all__ = [
    "NumericalOverflow",
    "DimensionMismatch",
    "Move",
    "SamplerConfig",
    "DataSummary",
    "ChainState",
    "GraphProposal",
    "ChainOutput",
    "propose_graph",
    "propose_precision",
    "log_acceptance",
    "bdrj_step",
    "run_chain",
]


class NumericalOverflow(RuntimeError):
    """Acceptance computation produced a non-finite value."""


class DimensionMismatch(ValueError):
    """Data and partition disagree on the number of nodes."""


class Move(enum.Enum):
    ADD = "add"
    REMOVE = "remove"


@dataclass(frozen=True)
class SamplerConfig:
    """Tuning constants and run lengths for the structure-learning chain."""

    prior: EdgePrior
    gwishart: GWishartParams
    iterations: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    alpha_g: float = 0.5      # probability of proposing an addition
    sigma_g2: float = 0.5     # variance of the free-element perturbation
    gw_tol: float = 1e-8
    gw_max_sweeps: int = 200_000   # rare ill-conditioned draws need long completions

    def __post_init__(self):
        if not 0.0 < self.alpha_g < 1.0:
            raise ValueError(f"alpha_g must lie in (0, 1), got {self.alpha_g}")
        if self.sigma_g2 <= 0.0:
            raise ValueError(f"sigma_g2 must be positive, got {self.sigma_g2}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(
                f"burn_in must lie in [0, iterations), got {self.burn_in} of {self.iterations}"
            )
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")


@dataclass(frozen=True)
class DataSummary:
    """Sufficient statistics of zero-mean Gaussian observations."""

    n: int
    U: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ValueError(f"scatter matrix must be square, got shape {U.shape}")
        if not np.allclose(U, U.T, atol=1e-10):
            raise ValueError("scatter matrix must be symmetric")
        if self.n < 0:
            raise ValueError("sample size must be non-negative")
        eigmin = float(np.linalg.eigvalsh(U)[0]) if U.shape[0] else 0.0
        if eigmin < -1e-8 * max(1.0, float(np.abs(U).max(initial=0.0))):
            raise ValueError("scatter matrix must be positive semidefinite")
        U = 0.5 * (U + U.T)
        U.flags.writeable = False
        object.__setattr__(self, "U", U)

    @classmethod
    def from_data(cls, y: np.ndarray) -> "DataSummary":
        y = np.asarray(y, dtype=float)
        if y.ndim != 2:
            raise ValueError("data must be a 2-d array of shape (n, p)")
        return cls(n=y.shape[0], U=y.T @ y)

    @property
    def dim(self) -> int:
        return self.U.shape[0]


@dataclass
class ChainState:
    """Current multigraph, its node-level adjacency, and the precision factor."""

    graph: Multigraph
    adjacency: np.ndarray
    phi: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, partition: Partition) -> "ChainState":
        gb = Multigraph(partition, frozenset())
        p = partition.n_nodes
        return cls(graph=gb, adjacency=np.zeros((p, p), dtype=bool), phi=np.eye(p))

    def precision(self) -> np.ndarray:
        return self.phi.T @ self.phi

    def factor(self) -> CholeskyFactor:
        return CholeskyFactor(phi=self.phi.copy(), adjacency=self.adjacency.copy())


@dataclass(frozen=True)
class GraphProposal:
    """One proposed multigraph move and its node-level footprint."""

    graph: Multigraph
    move: Move
    edge: tuple[int, int]
    changed: tuple[tuple[int, int], ...]   # node-level (i, j) pairs that flip
    proposal_log_ratio: float              # log q(current | proposed) - log q(proposed | current)


def _move_log_prob(move: Move, n_add: int, n_remove: int, alpha_g: float) -> float:
    """Log probability of picking ``move`` and then one specific candidate edge."""
    if move is Move.ADD:
        p_move = 1.0 if n_remove == 0 else alpha_g
        return math.log(p_move) - math.log(n_add)
    p_move = 1.0 if n_add == 0 else 1.0 - alpha_g
    return math.log(p_move) - math.log(n_remove)


def propose_graph(state: ChainState, cfg: SamplerConfig, rng: np.random.Generator) -> GraphProposal:
    """Draw one edge flip on the multigraph; forced when a neighbourhood is empty."""
    gb = state.graph
    missing = gb.missing_edges()
    present = gb.present_edges()
    if not missing and not present:
        raise ValueError("partition admits no multigraph edges; nothing to sample")
    if not present:
        move = Move.ADD
    elif not missing:
        move = Move.REMOVE
    else:
        move = Move.ADD if rng.random() < cfg.alpha_g else Move.REMOVE
    if move is Move.ADD:
        edge = missing[int(rng.integers(len(missing)))]
        gb_new = gb.with_edge(edge)
    else:
        edge = present[int(rng.integers(len(present)))]
        gb_new = gb.without_edge(edge)
    forward = _move_log_prob(move, len(missing), len(present), cfg.alpha_g)
    T = gb.partition.n_admissible
    n_present_new = gb_new.n_edges
    n_missing_new = T - n_present_new
    reverse_move = Move.REMOVE if move is Move.ADD else Move.ADD
    reverse = _move_log_prob(reverse_move, n_missing_new, n_present_new, cfg.alpha_g)
    changed = tuple(block_pairs(gb.partition, *edge))
    return GraphProposal(
        graph=gb_new,
        move=move,
        edge=edge,
        changed=changed,
        proposal_log_ratio=reverse - forward,
    )


def _flip_block(adjacency: np.ndarray, changed, value: bool) -> np.ndarray:
    adj = adjacency.copy()
    for i, j in changed:
        adj[i, j] = adj[j, i] = value
    return adj


def _perturb_log_density(eta: np.ndarray, loc: np.ndarray, sigma_g2: float) -> float:
    resid = eta - loc
    return float(
        -0.5 * eta.size * math.log(2.0 * math.pi * sigma_g2)
        - np.sum(resid * resid) / (2.0 * sigma_g2)
    )


def propose_precision(
    factor: CholeskyFactor,
    changed,
    graph_new,
    sigma_g2: float,
    rng: np.random.Generator,
) -> tuple[CholeskyFactor, float]:
    """Carry a factor onto a larger graph by perturbing the newly freed entries.

    Entries that stay free keep their values; entries in ``changed`` switch
    from completed to free and receive independent Gaussian perturbations
    around their current completed values; everything else is re-completed.
    Returns the new factor and the joint log density of the perturbation.
    """
    adj_new = graph_new.adjacency if hasattr(graph_new, "adjacency") else expand(graph_new).adjacency
    rows = np.fromiter((i for i, _ in changed), dtype=np.int64)
    cols = np.fromiter((j for _, j in changed), dtype=np.int64)
    phi_new = factor.phi.copy()
    loc = phi_new[rows, cols]
    eta = rng.normal(loc, math.sqrt(sigma_g2))
    phi_new[rows, cols] = eta
    _kernels.complete_factor(phi_new, adj_new)
    return CholeskyFactor(phi=phi_new, adjacency=adj_new), _perturb_log_density(eta, loc, sigma_g2)


def _log_ratio_add(
    K_cur, phi_cur, K_prop, phi_prop,
    w_aux, phi_aux, w_down, phi_down,
    rows, cols, vl, dnu,
    D_plus_U, D, sigma_g2,
    log_prior_diff, proposal_log_ratio,
):
    """Log acceptance ratio in the addition orientation.

    Current state lives on the smaller graph, the proposal on the larger one;
    ``w_aux`` is the auxiliary prior draw on the larger graph and ``w_down``
    its deterministic projection onto the smaller one.
    """
    t_data = -0.5 * float(np.sum((K_prop - K_cur) * D_plus_U))
    t_aux = 0.5 * float(np.sum((w_aux - w_down) * D))
    diag_cur = np.diag(phi_cur)[vl]
    diag_down = np.diag(phi_down)[vl]
    t_jac = float(np.sum(dnu * (np.log(diag_cur) - np.log(diag_down))))
    d_prop = phi_prop[rows, cols] - phi_cur[rows, cols]
    d_down = phi_down[rows, cols] - phi_aux[rows, cols]
    t_pert = (float(np.sum(d_prop * d_prop)) - float(np.sum(d_down * d_down))) / (2.0 * sigma_g2)
    return t_data + t_aux + t_jac + t_pert + log_prior_diff + proposal_log_ratio


class _EdgeCache:
    """Per-edge node-level footprint: row/col indices, touched nodes, freed slots."""

    def __init__(self, partition: Partition):
        self.partition = partition
        self._cache: dict[tuple[int, int], tuple] = {}

    def lookup(self, edge: tuple[int, int]):
        hit = self._cache.get(edge)
        if hit is None:
            pairs = block_pairs(self.partition, *edge)
            rows = np.fromiter((i for i, _ in pairs), dtype=np.int64)
            cols = np.fromiter((j for _, j in pairs), dtype=np.int64)
            vl = np.unique(np.concatenate([rows, cols]))
            dnu = np.bincount(rows, minlength=self.partition.n_nodes)[vl]
            hit = (rows, cols, vl, dnu)
            self._cache[edge] = hit
        return hit


@dataclass
class _Workspace:
    """Quantities fixed for the whole run, shared across iterations."""

    D: np.ndarray
    D_plus_U: np.ndarray
    b: float
    b_post: float
    prior_scale_factor: np.ndarray
    post_scale_factor: np.ndarray
    log_theta_ratio: float
    edges: _EdgeCache

    @classmethod
    def build(cls, partition: Partition, data: DataSummary, cfg: SamplerConfig) -> "_Workspace":
        D = np.asarray(cfg.gwishart.D, dtype=float)
        if D.shape[0] != partition.n_nodes:
            raise DimensionMismatch(
                f"inverse scale is {D.shape[0]}x{D.shape[0]} but partition has "
                f"{partition.n_nodes} nodes"
            )
        if data.dim != partition.n_nodes:
            raise DimensionMismatch(
                f"data has {data.dim} columns but partition has {partition.n_nodes} nodes"
            )
        DU = D + data.U
        theta = cfg.prior.theta
        return cls(
            D=D,
            D_plus_U=DU,
            b=cfg.gwishart.b,
            b_post=cfg.gwishart.b + data.n,
            prior_scale_factor=wishart_scale_factor(D),
            post_scale_factor=wishart_scale_factor(DU),
            log_theta_ratio=math.log(theta) - math.log1p(-theta),
            edges=_EdgeCache(partition),
        )


def log_acceptance(
    state: ChainState,
    phi_new,
    g_new,
    changed,
    w_tilde: np.ndarray,
    data: DataSummary,
    cfg: SamplerConfig,
) -> float:
    """Log acceptance ratio of an addition move, given the auxiliary draw.

    ``phi_new`` is the proposed factor on the larger graph ``g_new`` and
    ``w_tilde`` the auxiliary prior draw on that same graph.  The projection
    of ``w_tilde`` onto the current graph is rebuilt here.
    """
    ws = _Workspace.build(state.graph.partition, data, cfg)
    adj_new = g_new.adjacency if hasattr(g_new, "adjacency") else expand(g_new).adjacency
    phi_prop = phi_new.phi if isinstance(phi_new, CholeskyFactor) else np.asarray(phi_new, float)
    rows = np.fromiter((i for i, _ in changed), dtype=np.int64)
    cols = np.fromiter((j for _, j in changed), dtype=np.int64)
    vl = np.unique(np.concatenate([rows, cols]))
    dnu = np.bincount(rows, minlength=state.graph.partition.n_nodes)[vl]
    phi_aux = np.linalg.cholesky(np.asarray(w_tilde, float)).T.copy()
    phi_down = phi_aux.copy()
    _kernels.complete_factor(phi_down, state.adjacency)
    w_down = phi_down.T @ phi_down
    K_cur = state.precision()
    K_prop = phi_prop.T @ phi_prop
    # proposal ratio of the addition move current -> g_new
    gb = state.graph
    missing = gb.missing_edges()
    present = gb.present_edges()
    T = gb.partition.n_admissible
    n_present_new = gb.n_edges + 1
    forward = _move_log_prob(Move.ADD, len(missing), len(present), cfg.alpha_g)
    reverse = _move_log_prob(Move.REMOVE, T - n_present_new, n_present_new, cfg.alpha_g)
    value = _log_ratio_add(
        K_cur, state.phi, K_prop, phi_prop,
        np.asarray(w_tilde, float), phi_aux, w_down, phi_down,
        rows, cols, vl, dnu,
        ws.D_plus_U, ws.D, cfg.sigma_g2,
        ws.log_theta_ratio, reverse - forward,
    )
    if not math.isfinite(value):
        raise NumericalOverflow(f"non-finite log acceptance ratio at iteration {state.iteration}")
    return value


def _step(
    state: ChainState,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    ws: _Workspace,
) -> tuple[ChainState, bool, float]:
    prop = propose_graph(state, cfg, rng)
    rows, cols, vl, dnu = ws.edges.lookup(prop.edge)
    sigma_g = math.sqrt(cfg.sigma_g2)
    adj_new = _flip_block(state.adjacency, prop.changed, prop.move is Move.ADD)
    w_aux, phi_aux = sample_gwishart_factor(
        adj_new, ws.b, ws.prior_scale_factor, rng, cfg.gw_tol, cfg.gw_max_sweeps
    )
    if prop.move is Move.ADD:
        phi_prop = state.phi.copy()
        phi_prop[rows, cols] = rng.normal(phi_prop[rows, cols], sigma_g)
        _kernels.complete_factor(phi_prop, adj_new)
        K_prop = _kernels.factor_product(phi_prop)
        phi_down = phi_aux.copy()
        _kernels.complete_factor(phi_down, state.adjacency)
        w_down = _kernels.factor_product(phi_down)
        log_r = _log_ratio_add(
            state.precision(), state.phi, K_prop, phi_prop,
            w_aux, phi_aux, w_down, phi_down,
            rows, cols, vl, dnu,
            ws.D_plus_U, ws.D, cfg.sigma_g2,
            ws.log_theta_ratio, prop.proposal_log_ratio,
        )
    else:
        phi_prop = state.phi.copy()
        _kernels.complete_factor(phi_prop, adj_new)
        K_prop = _kernels.factor_product(phi_prop)
        # lift the auxiliary draw onto the current (larger) graph
        phi_up = phi_aux.copy()
        phi_up[rows, cols] = rng.normal(phi_up[rows, cols], sigma_g)
        _kernels.complete_factor(phi_up, state.adjacency)
        w_up = _kernels.factor_product(phi_up)
        # mirrored addition from the proposed (smaller) graph back to the current
        # one; the mirror's prior difference is big minus small
        log_r = -_log_ratio_add(
            K_prop, phi_prop, state.precision(), state.phi,
            w_up, phi_up, w_aux, phi_aux,
            rows, cols, vl, dnu,
            ws.D_plus_U, ws.D, cfg.sigma_g2,
            ws.log_theta_ratio, -prop.proposal_log_ratio,
        )
    if not math.isfinite(log_r):
        raise NumericalOverflow(
            f"non-finite log acceptance at iteration {state.iteration} "
            f"({prop.move.value} of multigraph edge {prop.edge})"
        )
    if log_r >= 0.0:
        accepted = True
    else:
        accepted = rng.random() < math.exp(log_r)
    if accepted:
        graph, adjacency = prop.graph, adj_new
    else:
        graph, adjacency = state.graph, state.adjacency
    K_next, phi_next = sample_gwishart_factor(
        adjacency, ws.b_post, ws.post_scale_factor, rng, cfg.gw_tol, cfg.gw_max_sweeps
    )
    new_state = ChainState(
        graph=graph, adjacency=adjacency, phi=phi_next, iteration=state.iteration + 1
    )
    return new_state, accepted, log_r


def bdrj_step(
    state: ChainState,
    data: DataSummary,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> tuple[ChainState, bool]:
    """One full transition: graph move, accept/reject, then precision refresh."""
    ws = _Workspace.build(state.graph.partition, data, cfg)
    new_state, accepted, _ = _step(state, cfg, rng, ws)
    return new_state, accepted


@dataclass
class ChainOutput:
    """Everything a finished run produced, in iteration order."""

    partition: Partition
    config: SamplerConfig
    graphs: list[Multigraph]
    precisions: np.ndarray          # (n_samples, p, p)
    accepted: np.ndarray            # (iterations,) bool
    log_acceptances: np.ndarray     # (iterations,) float

    @property
    def n_samples(self) -> int:
        return len(self.graphs)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.accepted.size else 0.0


def run_chain(data, partition: Partition, cfg: SamplerConfig) -> ChainOutput:
    """Run the sampler from the empty graph and collect thinned post-burn-in samples."""
    if isinstance(data, DataSummary):
        summary = data
    else:
        y = np.asarray(data, dtype=float)
        if y.ndim != 2 or y.shape[1] != partition.n_nodes:
            raise DimensionMismatch(
                f"data shape {y.shape} does not match partition with {partition.n_nodes} nodes"
            )
        summary = DataSummary.from_data(y)
    ws = _Workspace.build(partition, summary, cfg)
    rng = np.random.default_rng(cfg.seed)
    state = ChainState.initial(partition)
    p = partition.n_nodes
    n_keep = (cfg.iterations - cfg.burn_in) // cfg.thinning
    graphs: list[Multigraph] = []
    precisions = np.empty((n_keep, p, p))
    accepted = np.zeros(cfg.iterations, dtype=bool)
    log_acceptances = np.empty(cfg.iterations)
    kept = 0
    for s in range(1, cfg.iterations + 1):
        state, ok, log_r = _step(state, cfg, rng, ws)
        accepted[s - 1] = ok
        log_acceptances[s - 1] = log_r
        if s > cfg.burn_in and (s - cfg.burn_in) % cfg.thinning == 0 and kept < n_keep:
            graphs.append(state.graph)
            precisions[kept] = state.precision()
            kept += 1
    return ChainOutput(
        partition=partition,
        config=cfg,
        graphs=graphs,
        precisions=precisions[:kept],
        accepted=accepted,
        log_acceptances=log_acceptances,
    )
