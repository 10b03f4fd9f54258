"""Compiled numerical kernels for factor completion and constrained sampling.

Everything here is deterministic: random inputs are drawn by the caller so a
single numpy Generator owns all entropy.  Status codes returned by the
constrained-draw kernels: number of sweeps on success, -1 when the sweep cap
is hit, -2 when a working matrix loses positive definiteness.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_NO_CONVERGENCE = -1
STATUS_NOT_PD = -2


@njit(cache=True)
def complete_factor(phi, adj):
    """Fill non-free entries of an upper-triangular factor in place, row-major.

    Free entries are the diagonal plus positions (i, j) with adj[i, j]; every
    other upper entry is set so that (phi.T @ phi)[i, j] = 0.
    """
    p = phi.shape[0]
    for i in range(p):
        for j in range(i + 1, p):
            if not adj[i, j]:
                s = 0.0
                for k in range(i):
                    s += phi[k, i] * phi[k, j]
                phi[i, j] = -s / phi[i, i]


@njit(cache=True)
def _spd_solve_inplace(A, b):
    """Solve A x = b for small symmetric positive definite A, overwriting both.

    Returns False if the Cholesky factorization breaks down.
    """
    n = A.shape[0]
    for i in range(n):
        for k in range(i):
            A[i, i] -= A[i, k] * A[i, k]
        if A[i, i] <= 0.0:
            return False
        A[i, i] = math.sqrt(A[i, i])
        inv_d = 1.0 / A[i, i]
        for r in range(i + 1, n):
            acc = A[r, i]
            for k in range(i):
                acc -= A[r, k] * A[i, k]
            A[r, i] = acc * inv_d
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= A[i, k] * b[k]
        b[i] = acc / A[i, i]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for k in range(i + 1, n):
            acc -= A[k, i] * b[k]
        b[i] = acc / A[i, i]
    return True


@njit(cache=True)
def covariance_completion(W, Sigma, adj, tol, max_sweeps):
    """Cyclic block-conditional completion of a covariance matrix, in place.

    Starting from W = Sigma, repeatedly revisits every node j: entries tied to
    neighbours stay pinned to Sigma while non-neighbour entries of column j are
    replaced by their within-model regression values.  At the fixed point the
    inverse of W is zero on every missing edge.  Returns the sweep count on
    success, or a negative status code.
    """
    p = W.shape[0]
    idx = np.empty(p, np.int64)
    A = np.empty((p, p))
    rhs = np.empty(p)
    for sweep in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            cnt = 0
            for i in range(p):
                if i != j and adj[i, j]:
                    idx[cnt] = i
                    cnt += 1
            if cnt == 0:
                for i in range(p):
                    if i != j:
                        d = abs(W[i, j])
                        if d > delta:
                            delta = d
                        W[i, j] = 0.0
                        W[j, i] = 0.0
                continue
            for a in range(cnt):
                rhs[a] = Sigma[idx[a], j]
                for c in range(cnt):
                    A[a, c] = W[idx[a], idx[c]]
            if not _spd_solve_inplace(A[:cnt, :cnt], rhs[:cnt]):
                return STATUS_NOT_PD
            for i in range(p):
                if i == j:
                    continue
                s = 0.0
                for a in range(cnt):
                    s += W[i, idx[a]] * rhs[a]
                d = abs(W[i, j] - s)
                if d > delta:
                    delta = d
                W[i, j] = s
                W[j, i] = s
        if delta < tol:
            return sweep + 1
    return STATUS_NO_CONVERGENCE


@njit(cache=True)
def constrained_draw(W_full, adj, tol, max_sweeps):
    """Turn an unconstrained precision draw into one obeying a zero pattern.

    W_full is a draw for the saturated model.  Its inverse is completed over
    the missing edges, inverted back, and the result is re-factored so the
    zero pattern holds exactly.  Returns (K, phi, status); phi is upper
    triangular with K = phi.T @ phi.
    """
    p = W_full.shape[0]
    missing = False
    for i in range(p):
        for j in range(i + 1, p):
            if not adj[i, j]:
                missing = True
                break
        if missing:
            break
    if missing:
        Sigma = np.linalg.inv(W_full)
        Sigma = 0.5 * (Sigma + Sigma.T)
        # completion is scale equivariant: normalize so the sweep tolerance is
        # relative to the matrix magnitude, then scale back
        scale = 0.0
        for i in range(p):
            if Sigma[i, i] > scale:
                scale = Sigma[i, i]
        Sigma /= scale
        W = Sigma.copy()
        status = covariance_completion(W, Sigma, adj, tol, max_sweeps)
        if status < 0:
            return W_full, W_full, status
        W *= scale
        K = np.linalg.inv(W)
        K = 0.5 * (K + K.T)
    else:
        status = 0
        K = 0.5 * (W_full + W_full.T)
    phi = np.linalg.cholesky(K).T.copy()
    if missing:
        complete_factor(phi, adj)
        K = phi.T @ phi
    return K, phi, status


@njit(cache=True)
def factor_product(phi):
    """K = phi.T @ phi for an upper-triangular factor."""
    return phi.T @ phi
