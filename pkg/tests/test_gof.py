import numpy as np
import pytest
from numpy.testing import assert_allclose

from qrnet import copula as cp
from qrnet import gof
from qrnet.dist import RngStream

# 99th percentile of B=100 replications of the one-sample statistic for
# Clayton(theta=2), n=1000 (streams (777, b)); frozen regression baseline
CLAYTON_SELF_P99 = 0.04782293832321087


def grid_oracle_two_sample(G, T, m=200):
    """Riemann evaluation of the defining integral on an m x m grid (d=2).

    Exact for samples whose coordinates sit on the grid, since both empirical
    copulas are then constant on every grid cell.
    """
    g = (np.arange(m) + 0.5) / m
    uu = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    Cg = cp.empirical_copula(G, uu)
    Ct = cp.empirical_copula(T, uu)
    return ((Cg - Ct) ** 2).mean() / (1.0 / len(G) + 1.0 / len(T))


def snapped_uniform(stream, shape, m=200):
    return np.ceil(np.asarray(stream.uniform(shape)) * (m - 1)) / m


class TestOneSample:
    def test_single_point(self):
        U = np.array([[0.3, 0.7]])
        expected = (1.0 - 0.3 * 0.7) ** 2
        assert_allclose(gof.cvm_one_sample(U, cp.Independence(2)), expected)

    def test_two_point_hand_case(self):
        # pseudo-observations of a comonotone pair against independence
        U = np.array([[1 / 3, 1 / 3], [2 / 3, 2 / 3]])
        expected = (0.5 - 1 / 9) ** 2 + (1.0 - 4 / 9) ** 2
        assert_allclose(gof.cvm_one_sample(U, cp.Independence(2)), expected, atol=1e-12)

    def test_nonnegative(self):
        U = cp.pseudo_observations(np.asarray(RngStream(1).uniform((64, 2))))
        assert gof.cvm_one_sample(U, cp.Clayton(2, 2.0)) >= 0.0

    def test_row_permutation_invariance(self):
        U = cp.pseudo_observations(np.asarray(RngStream(2).uniform((50, 2))))
        perm = RngStream(3).permutation(50)
        spec = cp.Gumbel(2, 2.0)
        assert_allclose(
            gof.cvm_one_sample(U, spec), gof.cvm_one_sample(U[perm], spec), atol=1e-12
        )

    def test_self_consistency_frozen_baseline(self):
        spec = cp.Clayton(2, 2.0)
        U = cp.pseudo_observations(cp.sample(spec, 1000, RngStream(2718)))
        assert gof.cvm_one_sample(U, spec) < CLAYTON_SELF_P99

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            gof.cvm_one_sample(np.full((4, 3), 0.5), cp.Independence(2))


class TestTwoSample:
    def test_identical_inputs(self):
        U = cp.pseudo_observations(np.asarray(RngStream(4).uniform((100, 2))))
        assert abs(gof.cvm_two_sample(U, U)) < 1e-10

    def test_tiny_case_matches_grid_oracle(self):
        a = np.array([[0.5, 0.5]])
        b = np.array([[0.25, 0.25]])
        assert_allclose(
            gof.cvm_two_sample(a, b), grid_oracle_two_sample(a, b), rtol=1e-10
        )

    def test_grid_oracle_agreement_random_cases(self):
        stream = RngStream(42)
        for t in range(10):
            G = snapped_uniform(stream, (5 + t, 2))
            T = snapped_uniform(stream, (7 + 2 * t, 2))
            closed = gof.cvm_two_sample(G, T)
            oracle = grid_oracle_two_sample(G, T)
            assert abs(closed - oracle) / oracle < 1e-3

    def test_row_permutation_invariance(self):
        G = np.asarray(RngStream(5).uniform((30, 2)))
        T = np.asarray(RngStream(6).uniform((40, 2)))
        pg = RngStream(7).permutation(30)
        assert_allclose(gof.cvm_two_sample(G, T), gof.cvm_two_sample(G[pg], T), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gof.cvm_two_sample(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_nonnegative(self):
        G = np.asarray(RngStream(8).uniform((25, 3)))
        T = np.asarray(RngStream(9).uniform((35, 3)))
        assert gof.cvm_two_sample(G, T) >= 0.0

    def test_separates_close_families(self):
        # Clayton-vs-Gumbel at matched tau: cross-model values must exceed the
        # same-model spread (small-B smoke version of the acceptance check)
        clayton, gumbel = cp.Clayton(2, 2.0), cp.Gumbel(2, 2.0)
        ref = cp.pseudo_observations(cp.sample(clayton, 2000, RngStream(10, 0)))
        same, cross = [], []
        for b in range(10):
            Us = cp.pseudo_observations(cp.sample(clayton, 2000, RngStream(11, b)))
            Uc = cp.pseudo_observations(cp.sample(gumbel, 2000, RngStream(12, b)))
            same.append(gof.cvm_two_sample(Us, ref))
            cross.append(gof.cvm_two_sample(Uc, ref))
        assert np.median(cross) > np.max(same)
