"""Posterior summaries of sampled graphs and precision matrices."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .graphs import BlockGraph, Multigraph, expand

__all__ = [
    "EmptySampleList",
    "EMPTY_GRAPH_SENTINEL",
    "edge_inclusion",
    "bfdr_threshold",
    "median_model",
    "select_graph",
    "posterior_mean_precision",
    "GraphEstimate",
]

log = logging.getLogger("blockgraph")

# Threshold value no inclusion probability can reach: selecting with it yields
# the empty graph.  Returned when no candidate threshold meets the target rate.
EMPTY_GRAPH_SENTINEL = 2.0


class EmptySampleList(ValueError):
    """Summaries need at least one sample."""


def _sample_adjacency(sample) -> np.ndarray:
    if isinstance(sample, Multigraph):
        return expand(sample).adjacency
    if isinstance(sample, BlockGraph):
        return sample.adjacency
    return np.asarray(sample, dtype=bool)


def edge_inclusion(samples) -> np.ndarray:
    """Per-edge posterior inclusion frequencies as a symmetric p x p matrix."""
    if len(samples) == 0:
        raise EmptySampleList("no graph samples to summarize")
    acc = None
    for sample in samples:
        adj = _sample_adjacency(sample)
        acc = adj.astype(np.int64) if acc is None else acc + adj
    probs = acc / float(len(samples))
    np.fill_diagonal(probs, 0.0)
    return probs


def bfdr_threshold(inclusion: np.ndarray, target: float = 0.05) -> float:
    """Smallest inclusion threshold whose Bayesian false discovery rate beats target.

    Candidate thresholds are the observed inclusion probabilities; edges are
    selected by >= comparison, so ties break toward the denser graph.  When no
    candidate achieves the target the empty-graph sentinel is returned.
    """
    if not 0.0 < target < 1.0:
        raise ValueError(f"target rate must lie in (0, 1), got {target}")
    probs = np.asarray(inclusion, dtype=float)
    if probs.ndim == 2:
        iu = np.triu_indices(probs.shape[0], k=1)
        probs = probs[iu]
    candidates = np.unique(probs)
    for s in candidates:
        selected = probs >= s
        n_sel = int(np.count_nonzero(selected))
        if n_sel == 0:
            continue
        rate = float(np.sum(1.0 - probs[selected])) / n_sel
        if rate < target:
            return float(s)
    log.warning("no inclusion threshold achieves BFDR < %g; selecting the empty graph", target)
    return EMPTY_GRAPH_SENTINEL


@dataclass(frozen=True)
class GraphEstimate:
    """Selected graph with the threshold that produced it."""

    adjacency: np.ndarray
    threshold: float
    target: float | None = None

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency, k=1)))


def select_graph(inclusion: np.ndarray, threshold: float, target: float | None = None) -> GraphEstimate:
    """Edges whose inclusion probability reaches the threshold."""
    probs = np.asarray(inclusion, dtype=float)
    adj = probs >= threshold
    np.fill_diagonal(adj, False)
    adj = adj | adj.T
    return GraphEstimate(adjacency=adj, threshold=float(threshold), target=target)


def median_model(samples) -> GraphEstimate:
    """Graph of edges appearing in at least half of the samples."""
    return select_graph(edge_inclusion(samples), 0.5)


def bfdr_model(samples, target: float = 0.05) -> GraphEstimate:
    """Graph selected by thresholding inclusion probabilities at the BFDR threshold."""
    probs = edge_inclusion(samples)
    thr = bfdr_threshold(probs, target)
    return select_graph(probs, thr, target)


def posterior_mean_precision(precisions: np.ndarray) -> np.ndarray:
    """Elementwise mean of sampled precision matrices."""
    precisions = np.asarray(precisions, dtype=float)
    if precisions.ndim != 3 or precisions.shape[0] == 0:
        raise EmptySampleList("need a non-empty stack of precision samples")
    return precisions.mean(axis=0)
