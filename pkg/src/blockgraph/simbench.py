"""Synthetic benchmark scenarios and structure-recovery metrics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from .graphs import BlockGraph, Multigraph, Partition, expand
from .gwishart import GWishartParams, sample_gwishart
from .posterior import bfdr_threshold, edge_inclusion, select_graph
from .sampler import SamplerConfig, run_chain

__all__ = [
    "SyntheticScenario",
    "ScenarioDraw",
    "MetricsReport",
    "ReplicateResult",
    "generate_block_scenario",
    "degrade_blocks",
    "draw_scenario",
    "confusion",
    "run_replicate",
    "run_experiment",
]


@dataclass(frozen=True)
class SyntheticScenario:
    """Description of one synthetic data-generating process."""

    group_sizes: tuple[int, ...]
    n: int
    theta: float | tuple[float, float] = 0.5
    within_block_removal_prob: float = 0.0
    b: float = 3.0

    def __post_init__(self):
        part = Partition(tuple(self.group_sizes))
        object.__setattr__(self, "group_sizes", part.group_sizes)
        if self.n < 1:
            raise ValueError("need at least one observation")
        if not 0.0 <= self.within_block_removal_prob <= 1.0:
            raise ValueError("removal probability must lie in [0, 1]")
        bounds = self.theta if isinstance(self.theta, tuple) else (self.theta, self.theta)
        if not (0.0 <= bounds[0] <= bounds[1] <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {self.theta!r}")

    @property
    def partition(self) -> Partition:
        return Partition(self.group_sizes)

    def sample_theta(self, rng: np.random.Generator) -> float:
        if isinstance(self.theta, tuple):
            lo, hi = self.theta
            return float(rng.uniform(lo, hi))
        return float(self.theta)


def _sample_data(K: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n rows from the zero-mean Gaussian with precision K = phi.T @ phi."""
    p = K.shape[0]
    phi = np.linalg.cholesky(K).T
    z = rng.standard_normal((n, p))
    # y = phi^{-1} z has covariance inv(K)
    return solve_triangular(phi, z.T, lower=False).T


def _sample_multigraph(theta: float, part: Partition, rng: np.random.Generator) -> Multigraph:
    """Independent-inclusion draw that also tolerates the endpoints 0 and 1."""
    edges = frozenset(e for e in part.admissible_edges() if rng.random() < theta)
    return Multigraph(part, edges)


def generate_block_scenario(
    scenario: SyntheticScenario, rng: np.random.Generator
) -> tuple[BlockGraph, np.ndarray, np.ndarray]:
    """Draw a block-structured truth, a conforming precision, and data."""
    part = scenario.partition
    theta = scenario.sample_theta(rng)
    truth = expand(_sample_multigraph(theta, part, rng))
    params = GWishartParams.identity(part.n_nodes, b=scenario.b)
    K = sample_gwishart(truth, params, rng, max_sweeps=200_000)
    data = _sample_data(K, scenario.n, rng)
    return truth, K, data


def degrade_blocks(truth: BlockGraph, removal_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Remove each present node-level edge independently; returns adjacency.

    The result is generally not block structured, which is exactly the point:
    it probes the estimator under misspecification.
    """
    adj = truth.adjacency.copy()
    for i, j in zip(*np.nonzero(np.triu(adj, k=1))):
        if rng.random() < removal_prob:
            adj[i, j] = adj[j, i] = False
    return adj


@dataclass(frozen=True)
class ScenarioDraw:
    """One realized scenario: truth, evaluation target, precision, and data."""

    theta: float
    truth: BlockGraph          # block-structured graph before degradation
    target: np.ndarray         # adjacency the estimator is scored against
    precision: np.ndarray
    data: np.ndarray


def draw_scenario(scenario: SyntheticScenario, rng: np.random.Generator) -> ScenarioDraw:
    """Full generative pipeline; the precision conforms to the degraded graph."""
    part = scenario.partition
    theta = scenario.sample_theta(rng)
    truth = expand(_sample_multigraph(theta, part, rng))
    target = truth.adjacency
    if scenario.within_block_removal_prob > 0.0:
        target = degrade_blocks(truth, scenario.within_block_removal_prob, rng)
    params = GWishartParams.identity(part.n_nodes, b=scenario.b)
    K = sample_gwishart(target, params, rng, max_sweeps=200_000)
    data = _sample_data(K, scenario.n, rng)
    return ScenarioDraw(theta=theta, truth=truth, target=target, precision=K, data=data)


@dataclass(frozen=True)
class MetricsReport:
    """Edge-level confusion counts and the usual summary scores."""

    tp: int
    fp: int
    tn: int
    fn: int
    std_shd: float
    f1: float
    sensitivity: float
    specificity: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        pairs = tp + fp + tn + fn
        std_shd = (fp + fn) / pairs if pairs else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0
        sensitivity = tp / (tp + fn) if (tp + fn) else 1.0
        specificity = tn / (tn + fp) if (tn + fp) else 1.0
        return cls(tp, fp, tn, fn, std_shd, f1, sensitivity, specificity)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "std_shd": self.std_shd, "f1": self.f1,
            "sensitivity": self.sensitivity, "specificity": self.specificity,
        }


def _as_adjacency(graph) -> np.ndarray:
    if isinstance(graph, Multigraph):
        return expand(graph).adjacency
    if isinstance(graph, BlockGraph):
        return graph.adjacency
    if hasattr(graph, "adjacency"):
        return np.asarray(graph.adjacency, dtype=bool)
    return np.asarray(graph, dtype=bool)


def confusion(estimate, truth) -> MetricsReport:
    """Edge confusion over unordered node pairs."""
    est = _as_adjacency(estimate)
    tru = _as_adjacency(truth)
    if est.shape != tru.shape:
        raise ValueError(f"graphs have different sizes: {est.shape} vs {tru.shape}")
    iu = np.triu_indices(est.shape[0], k=1)
    e, t = est[iu], tru[iu]
    tp = int(np.count_nonzero(e & t))
    fp = int(np.count_nonzero(e & ~t))
    fn = int(np.count_nonzero(~e & t))
    tn = int(np.count_nonzero(~e & ~t))
    return MetricsReport.from_counts(tp=tp, fp=fp, tn=tn, fn=fn)


# ---------------------------------------------------------------------------
# replicate drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateResult:
    """Scores and run diagnostics of one simulate-fit-select replicate."""

    replicate: int
    theta: float
    n_true_edges: int
    n_selected_edges: int
    threshold: float
    acceptance_rate: float
    metrics: MetricsReport

    def to_row(self) -> dict:
        row = {
            "replicate": self.replicate,
            "theta": self.theta,
            "n_true_edges": self.n_true_edges,
            "n_selected_edges": self.n_selected_edges,
            "threshold": self.threshold,
            "acceptance_rate": self.acceptance_rate,
        }
        row.update(self.metrics.to_dict())
        return row


def run_replicate(
    scenario: SyntheticScenario,
    template: SamplerConfig,
    replicate: int,
    gen_seed: int,
    chain_seed: int,
    bfdr_target: float = 0.05,
) -> ReplicateResult:
    """Generate one dataset, fit the chain, select by BFDR, and score."""
    drawn = draw_scenario(scenario, np.random.default_rng(gen_seed))
    cfg = replace(template, seed=int(chain_seed))
    out = run_chain(drawn.data, scenario.partition, cfg)
    probs = edge_inclusion(out.graphs)
    thr = bfdr_threshold(probs, bfdr_target)
    estimate = select_graph(probs, thr, bfdr_target)
    report = confusion(estimate, drawn.target)
    iu = np.triu_indices(drawn.target.shape[0], k=1)
    return ReplicateResult(
        replicate=replicate,
        theta=drawn.theta,
        n_true_edges=int(np.count_nonzero(drawn.target[iu])),
        n_selected_edges=estimate.n_edges,
        threshold=thr,
        acceptance_rate=out.acceptance_rate,
        metrics=report,
    )


def _replicate_worker(args) -> ReplicateResult:
    return run_replicate(*args)


def run_experiment(
    scenario: SyntheticScenario,
    template: SamplerConfig,
    replicates: int,
    master_seed: int = 0,
    bfdr_target: float = 0.05,
    threads: int = 1,
) -> list[ReplicateResult]:
    """Independent replicates with seeds derived from one master seed."""
    words = np.random.SeedSequence(master_seed).generate_state(2 * replicates, np.uint32)
    jobs = [
        (scenario, template, r, int(words[2 * r]), int(words[2 * r + 1]), bfdr_target)
        for r in range(replicates)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_replicate_worker, jobs))
    return [_replicate_worker(job) for job in jobs]
