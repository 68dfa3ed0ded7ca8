"""Cramer-von Mises statistics for sample-vs-model and sample-vs-sample checks.

The one-sample statistic integrates the squared gap between the empirical
copula and a known copula against the empirical measure, so it collapses to a
sum over the sample. The two-sample statistic integrates the squared gap
between two empirical copulas over the cube; the product-integral identity
int prod_j 1{a_j <= u_j} 1{b_j <= u_j} du = prod_j (1 - max(a_j, b_j))
turns it into three double sums, evaluated exactly.
"""

from __future__ import annotations

import numpy as np

from qrnet import copula as cp


def cvm_one_sample(U_pobs: np.ndarray, spec) -> float:
    """sum_i (C_n(U_i) - C(U_i))^2 over the pseudo-observations U_i."""
    U = np.asarray(U_pobs, dtype=float)
    if U.ndim != 2 or U.shape[1] != cp.dim(spec):
        raise ValueError("U must be (n, d) matching the copula dimension")
    C_n = cp.empirical_copula(U, U)
    C = cp.cdf(spec, U)
    return float(((np.atleast_1d(C_n) - np.atleast_1d(C)) ** 2).sum())


def _cross_sum(A: np.ndarray, B: np.ndarray, chunk: int = 512) -> float:
    """sum_{i,j} prod_k (1 - max(A_ik, B_jk))."""
    total = 0.0
    for lo in range(0, A.shape[0], chunk):
        block = A[lo : lo + chunk]  # (c, d)
        prod = 1.0 - np.maximum(block[:, None, 0], B[None, :, 0])
        for k in range(1, A.shape[1]):
            prod *= 1.0 - np.maximum(block[:, None, k], B[None, :, k])
        total += float(prod.sum())
    return total


def cvm_two_sample(U_gen: np.ndarray, U_trn: np.ndarray) -> float:
    """Equality-of-empirical-copulas statistic, closed-form evaluation.

    (1/n_gen + 1/n_trn)^{-1} * integral of (C_gen - C_trn)^2 over the cube.
    """
    G = np.asarray(U_gen, dtype=float)
    T = np.asarray(U_trn, dtype=float)
    if G.ndim != 2 or T.ndim != 2 or G.shape[1] != T.shape[1]:
        raise ValueError("samples must be (n, d) matrices of equal dimension")
    ng, nt = G.shape[0], T.shape[0]
    integral = (
        _cross_sum(G, G) / (ng * ng)
        - 2.0 * _cross_sum(G, T) / (ng * nt)
        + _cross_sum(T, T) / (nt * nt)
    )
    return float(max(integral, 0.0) / (1.0 / ng + 1.0 / nt))
