import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp

import oracles
from blockgraph.graphs import EdgePrior, Multigraph, Partition, expand
from blockgraph.gwishart import (
    CholeskyFactor,
    GWishartParams,
    MissingFreeElement,
    NonPositiveDiagonal,
    NotDecomposable,
    NotPositiveDefinite,
    clique_separators,
    complete_cholesky,
    exact_graph_posterior,
    free_positions,
    is_decomposable,
    log_norm_const_decomposable,
    log_unnorm_gwishart,
    perfect_elimination_order,
    sample_gwishart,
    wishart_scale_factor,
)


def random_adjacency(p: int, density: float, rng) -> np.ndarray:
    adj = np.triu(rng.random((p, p)) < density, 1)
    return adj | adj.T


def random_factor(adjacency: np.ndarray, rng) -> np.ndarray:
    """Random upper factor whose free entries sit on the diagonal and edges."""
    p = adjacency.shape[0]
    free = {(i, i): 0.3 + rng.random() * 2.0 for i in range(p)}
    for i in range(p):
        for j in range(i + 1, p):
            if adjacency[i, j]:
                free[(i, j)] = rng.standard_normal()
    return complete_cholesky(free, adjacency).phi


# ---------------------------------------------------------------------------
# parameters


def test_params_validate_shape_and_scale():
    with pytest.raises(ValueError):
        GWishartParams(b=2.0, D=np.eye(2))
    with pytest.raises(NotPositiveDefinite):
        GWishartParams(b=3.0, D=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        GWishartParams(b=3.0, D=np.array([[1.0, 0.5], [0.2, 1.0]]))
    params = GWishartParams.identity(4)
    assert params.dim == 4 and params.b == 3.0


# ---------------------------------------------------------------------------
# density


def test_density_at_identity():
    for p in (1, 3, 6):
        params = GWishartParams.identity(p)
        assert log_unnorm_gwishart(np.eye(p), params) == pytest.approx(-p / 2.0)


def test_density_scaling_shift(rng):
    p, b, c = 4, 4.5, 1.7
    A = rng.standard_normal((p, p))
    K = A @ A.T + p * np.eye(p)
    D = np.eye(p)
    params = GWishartParams(b=b, D=D)
    shift = log_unnorm_gwishart(c * K, params) - log_unnorm_gwishart(K, params)
    expected = 0.5 * p * (b - 2.0) * math.log(c) - 0.5 * (c - 1.0) * np.trace(K @ D)
    assert shift == pytest.approx(expected, rel=1e-12)


def test_density_matches_dense_reference(rng):
    for _ in range(20):
        p = int(rng.integers(2, 7))
        A = rng.standard_normal((p, p))
        K = A @ A.T + p * np.eye(p)
        B = rng.standard_normal((p, p))
        D = B @ B.T + p * np.eye(p)
        b = 2.5 + rng.random() * 3
        got = log_unnorm_gwishart(K, GWishartParams(b=b, D=D))
        assert got == pytest.approx(oracles.dense_gwishart_logpdf(K, b, D), rel=1e-12)


def test_density_rejects_indefinite_matrix():
    params = GWishartParams.identity(2)
    with pytest.raises(NotPositiveDefinite):
        log_unnorm_gwishart(np.array([[1.0, 3.0], [3.0, 1.0]]), params)


# ---------------------------------------------------------------------------
# completion


def test_complete_graph_factor_is_unchanged(rng):
    p = 4
    adj = ~np.eye(p, dtype=bool)
    values = {(i, j): (1.0 + i if i == j else rng.standard_normal()) for i, j in free_positions(adj)}
    factor = complete_cholesky(values, adj)
    for (i, j), v in values.items():
        assert factor.phi[i, j] == v


def test_three_node_chain_zeros():
    # nodes 0-1 and 1-2 connected, 0-2 missing: the first-row fill is zero
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool)
    values = {(0, 0): 1.2, (1, 1): 0.9, (2, 2): 1.5, (0, 1): -0.7, (1, 2): 0.4}
    factor = complete_cholesky(values, adj)
    assert abs(factor.matrix()[0, 2]) <= 1e-10
    assert factor.phi[0, 2] == 0.0

    # star at node 0 with pair (1, 2) missing: the fill is genuinely nonzero
    star = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=bool)
    values = {(0, 0): 1.2, (1, 1): 0.9, (2, 2): 1.5, (0, 1): -0.7, (0, 2): 0.4}
    factor = complete_cholesky(values, star)
    assert abs(factor.matrix()[1, 2]) <= 1e-10
    expected = -values[(0, 1)] * values[(0, 2)] / values[(1, 1)]
    assert factor.phi[1, 2] == pytest.approx(expected, rel=1e-12)


def test_completion_round_trip_through_sampled_matrix(rng):
    part = Partition((2, 2, 1))
    gb = Multigraph(part, frozenset({(0, 0), (0, 1), (1, 2)}))
    graph = expand(gb)
    params = GWishartParams.identity(part.n_nodes)
    K = sample_gwishart(graph, params, rng)
    phi = np.linalg.cholesky(K).T
    values = {(i, j): phi[i, j] for i, j in free_positions(graph)}
    rebuilt = complete_cholesky(values, graph).matrix()
    assert np.max(np.abs(rebuilt - K)) <= 1e-10


@given(st.integers(0, 5000))
@settings(max_examples=60)
def test_completion_zero_pattern_property(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 7))
    adj = random_adjacency(p, rng.random(), rng)
    phi = random_factor(adj, rng)
    K = phi.T @ phi
    off = ~adj & ~np.eye(p, dtype=bool)
    assert np.max(np.abs(K[off])) <= 1e-10 if off.any() else True
    # agrees with the naive reference completion
    free_only = np.triu(phi) * (np.eye(p, dtype=bool) | adj)
    assert np.allclose(oracles.complete_factor_slow(free_only, adj), phi, atol=1e-12)


def test_completion_error_cases():
    adj = np.array([[0, 1], [1, 0]], dtype=bool)
    with pytest.raises(MissingFreeElement):
        complete_cholesky({(0, 0): 1.0, (0, 1): 0.3}, adj)  # no (1, 1)
    with pytest.raises(NonPositiveDiagonal):
        complete_cholesky({(0, 0): 1.0, (1, 1): -2.0, (0, 1): 0.3}, adj)


def test_factor_log_det_identity(rng):
    for _ in range(50):
        p = int(rng.integers(2, 9))
        adj = random_adjacency(p, 0.5, rng)
        phi = random_factor(adj, rng)
        direct = np.linalg.slogdet(phi.T @ phi)[1]
        via_diag = 2.0 * np.sum(np.log(np.diag(phi)))
        assert abs(direct - via_diag) <= 1e-10


# ---------------------------------------------------------------------------
# exact sampling


def test_sampled_matrices_match_zero_pattern(rng):
    part = Partition((2, 3, 1))
    params = GWishartParams.identity(part.n_nodes)
    gb = Multigraph(part, frozenset({(0, 1), (1, 1)}))
    graph = expand(gb)
    off = ~graph.adjacency & ~np.eye(part.n_nodes, dtype=bool)
    for _ in range(200):
        K = sample_gwishart(graph, params, rng)
        assert np.max(np.abs(K[off])) <= 1e-8
        assert np.all(np.linalg.eigvalsh(K) > 0)


def test_complete_graph_moments(rng):
    p, b, n_draws = 3, 3.0, 4000
    adj = ~np.eye(p, dtype=bool)
    params = GWishartParams(b=b, D=np.eye(p))
    acc = np.zeros((p, p))
    for _ in range(n_draws):
        acc += sample_gwishart(adj, params, rng)
    mean = acc / n_draws
    expected = (b + p - 1) * np.eye(p)
    rel = np.linalg.norm(mean - expected) / np.linalg.norm(expected)
    assert rel < 0.08


def test_complete_graph_conjugate_posterior_mean(rng):
    p, b, n = 3, 3.0, 40
    y = rng.standard_normal((n, p))
    U = y.T @ y
    D_post = np.eye(p) + U
    params = GWishartParams(b=b + n, D=D_post)
    adj = ~np.eye(p, dtype=bool)
    acc = np.zeros((p, p))
    n_draws = 4000
    for _ in range(n_draws):
        acc += sample_gwishart(adj, params, rng)
    expected = (b + n + p - 1) * np.linalg.inv(D_post)
    rel = np.linalg.norm(acc / n_draws - expected) / np.linalg.norm(expected)
    assert rel < 0.08


def test_sampler_self_consistent_across_tolerances():
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool)
    params = GWishartParams.identity(3)
    draws = 2500
    loose = np.empty(draws)
    tight = np.empty(draws)
    rng_a, rng_b = np.random.default_rng(11), np.random.default_rng(12)
    for s in range(draws):
        loose[s] = sample_gwishart(adj, params, rng_a, tol=1e-8)[0, 0]
        tight[s] = sample_gwishart(adj, params, rng_b, tol=1e-9)[0, 0]
    assert ks_2samp(loose, tight).pvalue > 0.01


def test_scale_factor_shape():
    D = np.diag([2.0, 4.0])
    L = wishart_scale_factor(D)
    assert np.allclose(L @ L.T, np.linalg.inv(D))


# ---------------------------------------------------------------------------
# decomposability


def test_decomposability_classics():
    chordless_cycle = np.zeros((4, 4), dtype=bool)
    for i, j in [(0, 1), (1, 2), (2, 3), (3, 0)]:
        chordless_cycle[i, j] = chordless_cycle[j, i] = True
    assert not is_decomposable(chordless_cycle)
    assert perfect_elimination_order(chordless_cycle) is None

    with_chord = chordless_cycle.copy()
    with_chord[0, 2] = with_chord[2, 0] = True
    assert is_decomposable(with_chord)

    triangle = ~np.eye(3, dtype=bool)
    assert is_decomposable(triangle)
    assert is_decomposable(np.zeros((3, 3), dtype=bool))


def test_clique_separator_structure():
    # two triangles sharing the node pair (1, 2)
    adj = np.zeros((4, 4), dtype=bool)
    for i, j in [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]:
        adj[i, j] = adj[j, i] = True
    cliques, separators = clique_separators(adj)
    assert sorted(sorted(c) for c in cliques) == [[0, 1, 2], [1, 2, 3]]
    assert [sorted(s) for s in separators] == [[1, 2]]


# ---------------------------------------------------------------------------
# normalizing constant


def test_log_const_single_node_against_quadrature():
    params = GWishartParams(b=3.0, D=np.array([[2.0]]))
    got = log_norm_const_decomposable(np.zeros((1, 1), dtype=bool), params)
    assert got == pytest.approx(oracles.log_const_complete_quad_1d(3.0, 2.0), abs=1e-9)
    assert got == pytest.approx(math.lgamma(1.5), abs=1e-12)


def test_log_const_two_node_complete_against_quadrature():
    D = np.array([[1.0, 0.3], [0.3, 1.2]])
    params = GWishartParams(b=3.0, D=D)
    adj = np.array([[0, 1], [1, 0]], dtype=bool)
    got = log_norm_const_decomposable(adj, params)
    assert got == pytest.approx(oracles.log_const_complete_quad_2x2(3.0, D), rel=1e-4)


def test_log_const_additive_over_components(rng):
    # complete pair on {0,1} plus a chain on {2,3,4}
    adj = np.zeros((5, 5), dtype=bool)
    for i, j in [(0, 1), (2, 3), (3, 4)]:
        adj[i, j] = adj[j, i] = True
    B = rng.standard_normal((5, 5))
    D = B @ B.T + 5 * np.eye(5)
    # block-diagonal D so the two components are genuinely separate problems
    D[:2, 2:] = 0.0
    D[2:, :2] = 0.0
    params = GWishartParams(b=3.5, D=D)
    whole = log_norm_const_decomposable(adj, params)
    part_a = log_norm_const_decomposable(
        adj[:2, :2], GWishartParams(b=3.5, D=D[:2, :2])
    )
    part_b = log_norm_const_decomposable(
        adj[2:, 2:], GWishartParams(b=3.5, D=D[2:, 2:])
    )
    assert whole == pytest.approx(part_a + part_b, rel=1e-12)


def test_log_const_invariant_under_relabeling(rng):
    adj = np.zeros((4, 4), dtype=bool)
    for i, j in [(0, 1), (1, 2), (2, 3), (1, 3)]:
        adj[i, j] = adj[j, i] = True
    B = rng.standard_normal((4, 4))
    D = B @ B.T + 4 * np.eye(4)
    params = GWishartParams(b=3.0, D=D)
    base = log_norm_const_decomposable(adj, params)
    perm = np.array([2, 0, 3, 1])
    adj_p = adj[np.ix_(perm, perm)]
    D_p = D[np.ix_(perm, perm)]
    assert is_decomposable(adj_p)
    relabeled = log_norm_const_decomposable(adj_p, GWishartParams(b=3.0, D=D_p))
    assert relabeled == pytest.approx(base, rel=1e-12)


def test_log_const_rejects_nondecomposable():
    cycle = np.zeros((4, 4), dtype=bool)
    for i, j in [(0, 1), (1, 2), (2, 3), (3, 0)]:
        cycle[i, j] = cycle[j, i] = True
    with pytest.raises(NotDecomposable):
        log_norm_const_decomposable(cycle, GWishartParams.identity(4))


# ---------------------------------------------------------------------------
# exact enumeration posterior


def test_exact_posterior_is_a_distribution(rng):
    part = Partition((1, 2))
    data = rng.standard_normal((30, 3))
    table = exact_graph_posterior(part, EdgePrior(0.5), GWishartParams.identity(3), data)
    assert len(table) == 4
    assert sum(prob for _, prob in table) == pytest.approx(1.0, abs=1e-12)
    assert all(prob >= 0 for _, prob in table)


def test_exact_posterior_reduces_to_prior_without_data():
    part = Partition((1, 2))
    theta = 0.3
    table = exact_graph_posterior(
        part, EdgePrior(theta), GWishartParams.identity(3), np.empty((0, 3))
    )
    T = part.n_admissible
    for gb, prob in table:
        k = gb.n_edges
        assert prob == pytest.approx(theta**k * (1 - theta) ** (T - k), rel=1e-10)


def test_exact_posterior_guards_large_enumerations():
    part = Partition(tuple([1] * 8))  # 28 admissible edges
    with pytest.raises(ValueError):
        exact_graph_posterior(
            part, EdgePrior(0.5), GWishartParams.identity(8), np.zeros((1, 8))
        )
