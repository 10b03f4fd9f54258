"""Bayesian structure learning for block-structured Gaussian graphical models."""

__version__ = "0.1.0"

from .graphs import (
    BlockGraph,
    EdgePrior,
    Multigraph,
    NotBlockStructured,
    Partition,
    collapse,
    expand,
    log_graph_prior,
    nbd_add,
    nbd_remove,
    nu_counts,
    sample_prior_graph,
)
from .gwishart import (
    CholeskyFactor,
    GWishartParams,
    complete_cholesky,
    exact_graph_posterior,
    free_positions,
    is_decomposable,
    log_norm_const_decomposable,
    log_unnorm_gwishart,
    sample_gwishart,
)
from .sampler import (
    ChainOutput,
    ChainState,
    DataSummary,
    SamplerConfig,
    bdrj_step,
    run_chain,
)
from .posterior import (
    GraphEstimate,
    bfdr_model,
    bfdr_threshold,
    edge_inclusion,
    median_model,
    posterior_mean_precision,
    select_graph,
)
from .simbench import (
    MetricsReport,
    SyntheticScenario,
    confusion,
    degrade_blocks,
    draw_scenario,
    generate_block_scenario,
    run_experiment,
    run_replicate,
)
from .functional import (
    SmootherConfig,
    SmoothResult,
    bspline_design,
    functional_gibbs_step,
    smooth,
)

__all__ = [name for name in dir() if not name.startswith("_")]
