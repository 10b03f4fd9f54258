"""Joint smoothing of repeated functional observations with structure learning.

Curves observed on a common grid are expanded in a cubic B-spline basis; the
basis coefficients of all curves share a Gaussian prior whose precision matrix
carries an unknown block-structured zero pattern.  A blocked Gibbs sampler
alternates closed-form conjugate updates with one graph move per sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_solve, solve_triangular

from .graphs import EdgePrior, Multigraph, Partition
from .gwishart import GWishartParams
from .sampler import ChainState, DataSummary, SamplerConfig, _Workspace, _step

__all__ = [
    "GridTooCoarse",
    "bspline_design",
    "SmootherConfig",
    "FunctionalState",
    "coefficient_conditional",
    "mean_conditional",
    "functional_gibbs_step",
    "smooth",
    "SmoothResult",
]


class GridTooCoarse(ValueError):
    """The evaluation grid must be strictly finer than the basis dimension."""


def bspline_design(grid: np.ndarray, n_basis: int) -> np.ndarray:
    """Design matrix of a clamped cubic B-spline basis evaluated on the grid.

    Interior knots are equally spaced; rows sum to one everywhere on the
    domain and each row has at most four non-zero entries.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array with at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if n_basis < 4:
        raise ValueError(f"cubic basis needs at least 4 functions, got {n_basis}")
    if grid.size <= n_basis:
        raise GridTooCoarse(
            f"grid has {grid.size} points but the basis has {n_basis} functions"
        )
    lo, hi = grid[0], grid[-1]
    interior = np.linspace(lo, hi, n_basis - 2)[1:-1]
    knots = np.concatenate([[lo] * 4, interior, [hi] * 4])
    return BSpline.design_matrix(grid, knots, 3).toarray()


def _default_theta(partition: Partition) -> float:
    M = partition.n_groups
    if M >= 4:
        return 2.0 / (M - 1)
    return 0.5


@dataclass(frozen=True)
class SmootherConfig:
    """Priors and run lengths for the functional smoother."""

    partition: Partition                   # grouping of the basis coefficients
    iterations: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    prior: EdgePrior | None = None         # defaults to 2 / (M - 1) when M >= 4
    gwishart_shape: float = 3.0            # shape of the coefficient-precision prior
    gwishart_inv_scale: np.ndarray | None = None   # defaults to identity
    mu_var: float = 100.0                  # prior variance of the shared mean level
    ig_shape: float = 1.0                  # noise-variance inverse-gamma shape
    ig_rate: float = 1.0                   # noise-variance inverse-gamma rate
    alpha_g: float = 0.5
    sigma_g2: float = 1.0
    gw_tol: float = 1e-8
    gw_max_sweeps: int = 200_000

    def __post_init__(self):
        if self.prior is None:
            object.__setattr__(self, "prior", EdgePrior(_default_theta(self.partition)))
        if self.gwishart_inv_scale is None:
            object.__setattr__(self, "gwishart_inv_scale", np.eye(self.partition.n_nodes))
        if self.mu_var <= 0 or self.ig_shape <= 0 or self.ig_rate <= 0:
            raise ValueError("variance hyperparameters must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")

    def gwishart_params(self) -> GWishartParams:
        return GWishartParams(b=self.gwishart_shape, D=np.asarray(self.gwishart_inv_scale))

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            prior=self.prior,
            gwishart=self.gwishart_params(),
            iterations=self.iterations,
            burn_in=0,
            thinning=1,
            seed=self.seed,
            alpha_g=self.alpha_g,
            sigma_g2=self.sigma_g2,
            gw_tol=self.gw_tol,
            gw_max_sweeps=self.gw_max_sweeps,
        )


@dataclass
class FunctionalState:
    """Coefficients, shared mean, noise variance, and the structure chain state."""

    coefficients: np.ndarray   # (T, p)
    mu: np.ndarray             # (p,)
    tau2: float
    chain: ChainState


def coefficient_conditional(
    y: np.ndarray, omega: np.ndarray, tau2: float, K: np.ndarray, mu: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means of all per-curve coefficients plus the shared Cholesky factor.

    The conditional precision ``omega' omega / tau2 + K`` is common to every
    curve, so one factorization serves all of them.  Returns (means, lower
    Cholesky factor of the conditional precision); means has shape (T, p).
    """
    A = omega.T @ omega / tau2 + K
    L = np.linalg.cholesky(A)
    rhs = omega.T @ y.T / tau2 + (K @ mu)[:, None]
    means = cho_solve((L, True), rhs)
    return means.T, L


def mean_conditional(
    coefficients: np.ndarray, K: np.ndarray, mu_var: float
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and lower Cholesky precision factor of the shared level.

    As the prior variance grows the mean approaches the plain average of the
    coefficient vectors.
    """
    T, p = coefficients.shape
    P = T * K + np.eye(p) / mu_var
    L = np.linalg.cholesky(P)
    mean = cho_solve((L, True), K @ coefficients.sum(axis=0))
    return mean, L


def functional_gibbs_step(
    state: FunctionalState,
    y: np.ndarray,
    omega: np.ndarray,
    cfg: SmootherConfig,
    rng: np.random.Generator,
) -> tuple[FunctionalState, bool]:
    """One sweep: coefficients, shared mean, noise variance, then a graph move."""
    T, r = y.shape
    p = cfg.partition.n_nodes
    K = state.chain.precision()

    means, L = coefficient_conditional(y, omega, state.tau2, K, state.mu)
    z = rng.standard_normal((p, T))
    coefficients = means + solve_triangular(L.T, z, lower=False).T

    mu_mean, Lp = mean_conditional(coefficients, K, cfg.mu_var)
    mu = mu_mean + solve_triangular(Lp.T, rng.standard_normal(p), lower=False)

    resid = y - coefficients @ omega.T
    shape = cfg.ig_shape + 0.5 * r * T
    rate = cfg.ig_rate + 0.5 * float(np.sum(resid * resid))
    tau2 = rate / rng.gamma(shape)

    centered = coefficients - mu
    summary = DataSummary(n=T, U=centered.T @ centered)
    sampler_cfg = cfg.sampler_config()
    ws = _Workspace.build(cfg.partition, summary, sampler_cfg)
    chain, accepted, _ = _step(state.chain, sampler_cfg, rng, ws)

    return FunctionalState(coefficients=coefficients, mu=mu, tau2=tau2, chain=chain), accepted


@dataclass
class SmoothResult:
    """Posterior summaries of one smoother run."""

    grid: np.ndarray
    fitted: np.ndarray             # (T, r) posterior-mean fitted curves
    coefficients: np.ndarray       # (T, p) posterior-mean basis coefficients
    mu: np.ndarray
    tau2: float
    graphs: list[Multigraph]
    precisions: np.ndarray         # (n_samples, p, p)
    acceptance_rate: float
    design: np.ndarray             # (r, p)


def smooth(y: np.ndarray, grid: np.ndarray, cfg: SmootherConfig) -> SmoothResult:
    """Fit the hierarchical smoother and return posterior-mean curves and graphs."""
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if y.ndim != 2:
        raise ValueError("curves must form a 2-d array of shape (n_curves, grid_size)")
    if y.shape[1] != grid.size:
        raise ValueError(
            f"curves have {y.shape[1]} grid values but the grid has {grid.size}"
        )
    p = cfg.partition.n_nodes
    omega = bspline_design(grid, p)
    T = y.shape[0]
    rng = np.random.default_rng(cfg.seed)

    state = FunctionalState(
        coefficients=np.zeros((T, p)),
        mu=np.zeros(p),
        tau2=1.0,
        chain=ChainState.initial(cfg.partition),
    )
    n_keep = (cfg.iterations - cfg.burn_in) // cfg.thinning
    coeff_acc = np.zeros((T, p))
    mu_acc = np.zeros(p)
    tau2_acc = 0.0
    graphs: list[Multigraph] = []
    precisions = np.empty((n_keep, p, p))
    accepted = 0
    kept = 0
    for s in range(1, cfg.iterations + 1):
        state, ok = functional_gibbs_step(state, y, omega, cfg, rng)
        accepted += int(ok)
        if s > cfg.burn_in and (s - cfg.burn_in) % cfg.thinning == 0 and kept < n_keep:
            coeff_acc += state.coefficients
            mu_acc += state.mu
            tau2_acc += state.tau2
            graphs.append(state.chain.graph)
            precisions[kept] = state.chain.precision()
            kept += 1
    if kept == 0:
        raise ValueError("run too short: no samples kept after burn-in and thinning")
    coefficients = coeff_acc / kept
    return SmoothResult(
        grid=grid,
        fitted=coefficients @ omega.T,
        coefficients=coefficients,
        mu=mu_acc / kept,
        tau2=tau2_acc / kept,
        graphs=graphs,
        precisions=precisions[:kept],
        acceptance_rate=accepted / cfg.iterations,
        design=omega,
    )
