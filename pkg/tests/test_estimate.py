import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qrnet import copula as cp
from qrnet import estimate as est
from qrnet.dist import RngStream, normal_cdf, normal_pdf, normal_quantile


def t_spec(d, tau=0.5, nu=4.0):
    return cp.TCopula(cp.exchangeable_corr(d, cp.tau_to_param("elliptical", tau)), nu)


def black_scholes_call(S, K, r, sigma, T):
    d1 = (math.log(S / K) + (r + sigma**2 / 2.0) * T) / (sigma * math.sqrt(T))
    d2 = d1 - sigma * math.sqrt(T)
    return S * normal_cdf(d1) - K * math.exp(-r * T) * normal_cdf(d2)


class TestSobolG:
    def test_hand_value_center(self):
        # all |4R-2| = 0: product of j/(1+j)
        v = est.psi_sobol_g(cp.Independence(2), np.array([[0.5, 0.5]]))
        assert_allclose(v[0], 1.0 / 3.0)

    def test_hand_value_corner(self):
        v = est.psi_sobol_g(cp.Independence(2), np.array([[1e-13, 1e-13]]))
        assert_allclose(v[0], 2.0, atol=1e-10)

    @pytest.mark.parametrize("spec", [cp.Clayton(3, 2.0), t_spec(3), cp.Gumbel(2, 2.0)])
    def test_population_mean_one(self, spec):
        # each factor integrates to 1 under the Rosenblatt image
        U = cp.sample(spec, 2 * 10**5, RngStream(1))
        assert abs(est.psi_sobol_g(spec, U).mean() - 1.0) < 0.005

    def test_unsupported_spec_propagates(self):
        nac = cp.NestedArchimedean("clayton", 0.5, [(2.0, (0, 1))], d=3)
        with pytest.raises(cp.UnsupportedCopulaError):
            est.psi_sobol_g(nac, np.full((4, 3), 0.5))


class TestMargins:
    def test_normal_median(self):
        X = est.apply_margins(np.full((1, 2), 0.5), est.NormalMargin())
        assert np.array_equal(X, np.zeros((1, 2)))

    def test_lognormal_median(self):
        m = est.LognormalMargin(meanlog=1.3, sdlog=0.5)
        X = est.apply_margins(np.full((1, 1), 0.5), m)
        assert_allclose(X[0, 0], math.exp(1.3))

    def test_round_trip(self):
        U = np.asarray(RngStream(2).uniform((100, 2)))
        X = est.apply_margins(U, est.NormalMargin())
        assert_allclose(normal_cdf(X), U, atol=1e-9)

    def test_per_column_margins(self):
        U = np.full((1, 2), 0.5)
        X = est.apply_margins(U, [est.NormalMargin(), est.LognormalMargin(0.0, 1.0)])
        assert_allclose(X, [[0.0, 1.0]])

    def test_student_t_margin(self):
        from qrnet.dist import student_t_cdf

        m = est.StudentTMargin(nu=4.0, scale=2.0)
        U = np.asarray(RngStream(8).uniform((200, 1)))
        X = est.apply_margins(U, m)
        assert_allclose(student_t_cdf(X / 2.0, 4.0), U, atol=1e-8)


class TestEsEstimate:
    def test_top_one_is_max(self):
        assert est.es_estimate(np.arange(100.0), 0.99) == 99.0

    def test_constant_sample(self):
        assert_allclose(est.es_estimate(np.full(500, 3.3), 0.99), 3.3)

    def test_too_small(self):
        with pytest.raises(ValueError):
            est.es_estimate(np.arange(50.0), 0.99)

    def test_comonotone_closed_form(self):
        # S = 2 Phi^-1(V): ES_.99 = 2 phi(z_.99)/.01
        U = cp.sample(cp.MarshallOlkin(1.0, 1.0), 10**6, RngStream(3))
        f = est.ExpectedShortfall(margins=est.NormalMargin(), level=0.99)
        target = 2.0 * normal_pdf(normal_quantile(0.99)) / 0.01
        assert abs(f.evaluate(U) - target) < 0.05


class TestAllocation:
    def test_d1_equals_es(self):
        x = np.asarray(RngStream(4).normals(1000))
        assert_allclose(
            est.allocation_estimate(x, 0.95), est.es_estimate(x, 0.95), atol=1e-12
        )

    def test_comonotone_half_es(self):
        U = cp.sample(cp.MarshallOlkin(1.0, 1.0), 10**6, RngStream(5))
        a = est.Allocation(margins=est.NormalMargin(), level=0.99)
        target = normal_pdf(normal_quantile(0.99)) / 0.01
        assert abs(a.evaluate(U) - target) < 0.05

    def test_exchangeable_symmetry(self):
        U = cp.sample(cp.Clayton(2, 2.0), 10**5, RngStream(6))
        X = est.apply_margins(U, est.NormalMargin())
        ac0 = est.allocation_estimate(X, 0.99, 0)
        ac1 = est.allocation_estimate(X, 0.99, 1)
        es = est.es_estimate(X.sum(axis=1), 0.99)
        assert abs(ac0 + ac1 - es) < 1e-10  # contributions add up to ES
        assert abs(ac0 - ac1) < 0.25  # exchangeability, within MC noise


class TestBasketCall:
    def test_zero_strike(self):
        S = np.array([[2.0, 3.0], [1.0, 1.0]])
        pay = est.basket_call_payoff(S, r=0.01, t=0.0, T=1.0, K=0.0)
        assert_allclose(pay, math.exp(-0.01) * np.array([5.0, 2.0]))

    def test_out_of_the_money(self):
        S = np.full((4, 2), 0.5)
        assert np.array_equal(
            est.basket_call_payoff(S, r=0.01, t=0.0, T=1.0, K=10.0), np.zeros(4)
        )

    def test_black_scholes_d1(self):
        bc = est.BasketCall(spots=[100.0], vols=[0.2], r=0.01, T=1.0, K=100.0)
        U = cp.sample(cp.Independence(1), 10**6, RngStream(7))
        estimate = bc.evaluate(U)
        # 3 sigma MC band around the closed form
        pay = est.basket_call_payoff(
            est.apply_margins(U, bc.margins()), bc.r, bc.t, bc.T, bc.K
        )
        band = 3.0 * pay.std(ddof=1) / 1000.0
        assert abs(estimate - black_scholes_call(100, 100, 0.01, 0.2, 1.0)) < band

    def test_default_strike(self):
        bc = est.BasketCall(spots=[100.0, 200.0], vols=[0.2, 0.3])
        assert_allclose(bc.K, 1.005 * 150.0 * 2)


class TestSources:
    def test_copula_prs_replications_differ(self):
        src = est.CopulaPrs(cp.Clayton(2, 2.0))
        a = src.generate(16, seed=1, replication=0)
        b = src.generate(16, seed=1, replication=1)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, src.generate(16, seed=1, replication=0))

    def test_copula_qrs_unsupported_family(self):
        src = est.CopulaQrs(cp.NestedArchimedean("gumbel", 4 / 3, [(2.0, (0, 1))], d=3))
        with pytest.raises(cp.UnsupportedCopulaError):
            src.generate(16, seed=1, replication=0)

    def test_copula_qrs_tau(self):
        src = est.CopulaQrs(cp.Clayton(2, 2.0))
        U = src.generate(2**13, seed=1, replication=0)
        assert abs(cp.kendall_tau_sample(U) - 0.5) < 0.03

    def test_run_estimator_consistency(self):
        f = est.SobolG(cp.Clayton(2, 2.0))
        v = est.run_estimator(f, est.CopulaPrs(cp.Clayton(2, 2.0)), 2**12, seed=2)
        assert abs(v - 1.0) < 0.1


class TestConvergence:
    def test_needs_two_replications(self):
        with pytest.raises(ValueError):
            est.convergence_study(
                est.SobolG(cp.Independence(2)),
                {"MC": est.CopulaPrs(cp.Independence(2))},
                n_grid=[64, 128],
                B=1,
            )

    def test_mc_rate_and_rqmc_superiority(self):
        class ProdU:
            def evaluate(self, U):
                return float(U.prod(axis=1).mean())

        spec = cp.Independence(2)
        report = est.convergence_study(
            ProdU(),
            {"MC": est.CopulaPrs(spec), "QMC": est.CopulaQrs(spec)},
            n_grid=[2**k for k in range(10, 15)],
            B=10,
            seed=3,
        )
        assert 0.35 < report.alphas["MC"] < 0.65
        assert report.alphas["QMC"] > 0.8
        assert report.sds["QMC"][-1] < report.sds["MC"][-1] / 4.0

    def test_sd_monotone_modulo_one_inversion(self):
        class ProdU:
            def evaluate(self, U):
                return float(U.prod(axis=1).mean())

        report = est.convergence_study(
            ProdU(),
            {"MC": est.CopulaPrs(cp.Independence(2))},
            n_grid=[2**k for k in range(8, 14)],
            B=25,
            seed=4,
        )
        sd = report.sds["MC"]
        inversions = sum(a < b for a, b in zip(sd, sd[1:]))
        assert inversions <= 1

    def test_report_csvs_round_trip(self, tmp_path):
        import csv

        class ProdU:
            def evaluate(self, U):
                return float(U.prod(axis=1).mean())

        report = est.convergence_study(
            ProdU(),
            {"MC": est.CopulaPrs(cp.Independence(2))},
            n_grid=[256, 512],
            B=3,
            seed=5,
        )
        report.write_estimates_csv(tmp_path / "e.csv")
        report.write_summary_csv(tmp_path / "s.csv")
        report.write_fit_csv(tmp_path / "f.csv")
        with open(tmp_path / "s.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["method", "n_gen", "sd"]
        assert len(rows) == 3  # header + one summary row per (method, n)
        assert_allclose(float(rows[1][2]), report.sds["MC"][0])
        with open(tmp_path / "f.csv", newline="") as fh:
            fit_rows = list(csv.reader(fh))
        assert_allclose(float(fit_rows[1][1]), report.alphas["MC"])

    def test_grids(self):
        assert est.PAPER_GRID[0] == 1024 and est.PAPER_GRID[-1] == 2**18
        assert est.DESK_GRID[-1] == 2**15

    def test_trim_flag_changes_only_the_fit(self):
        class ProdU:
            def evaluate(self, U):
                return float(U.prod(axis=1).mean())

        full = est.convergence_study(
            ProdU(),
            {"MC": est.CopulaPrs(cp.Independence(2))},
            n_grid=[256, 512, 1024, 2048],
            B=5,
            seed=6,
        )
        trimmed = est.convergence_study(
            ProdU(),
            {"MC": est.CopulaPrs(cp.Independence(2))},
            n_grid=[256, 512, 1024, 2048],
            B=5,
            seed=6,
            trim_below=1024,
        )
        assert_allclose(trimmed.sds["MC"], full.sds["MC"])  # sds untouched
        assert trimmed.alphas["MC"] != full.alphas["MC"]
        with pytest.raises(ValueError):
            full.summarize(trim_below=4096)

    def test_report_vrf(self):
        class ProdU:
            def evaluate(self, U):
                return float(U.prod(axis=1).mean())

        spec = cp.Independence(2)
        report = est.convergence_study(
            ProdU(),
            {"MC": est.CopulaPrs(spec), "QMC": est.CopulaQrs(spec)},
            n_grid=[1024, 4096],
            B=8,
            seed=7,
        )
        assert report.vrf("MC", "QMC") > 10.0
        assert report.vrf("MC", "MC", n=1024) == 1.0


class TestVrf:
    def test_identical(self):
        x = np.array([1.0, 2.0, 3.0])
        assert est.vrf(x, x) == 1.0

    def test_halved_spread(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        assert_allclose(est.vrf(x, x.mean() + (x - x.mean()) / 2.0), 4.0)

    def test_zero_variance_warns(self):
        with pytest.warns(UserWarning):
            assert est.vrf(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == math.inf
