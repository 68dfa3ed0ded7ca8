"""Functionals, MC / RQMC estimators, convergence studies and VRF reporting.

Sources produce copula-scale samples four ways: exact sampler plus a pseudo
stream (PRS), conditional-distribution transform of a randomized point set
(copula QRS, only where that transform exists), and the trained generator fed
with either a pseudo stream or a randomized point set. Replication b uses
stream_id b (PRS) or randomization seed base+b (QRS), so every replication is
independently reproducible.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from qrnet import copula as cp
from qrnet import dist, gmmn, qmc
from qrnet.dist import RngStream

FMT = "%.17g"

#: replication grids: exponents 10, 10.5, ..., 18 (paper scale) or up to 15 (desk)
PAPER_GRID = [round(2.0**k) for k in np.arange(10, 18.01, 0.5)]
DESK_GRID = [round(2.0**k) for k in np.arange(10, 15.01, 0.5)]


# -- margins ---------------------------------------------------------------------


@dataclass
class NormalMargin:
    def quantile(self, u):
        return np.asarray(dist.normal_quantile(u))


@dataclass
class LognormalMargin:
    meanlog: float
    sdlog: float

    def quantile(self, u):
        return np.exp(self.meanlog + self.sdlog * np.asarray(dist.normal_quantile(u)))


@dataclass
class StudentTMargin:
    nu: float
    scale: float = 1.0

    def quantile(self, u):
        return self.scale * np.asarray(dist.student_t_quantile(u, self.nu))


def apply_margins(U: np.ndarray, margins) -> np.ndarray:
    """Componentwise quantile transform from the unit cube to real margins.

    margins: a single margin object applied to every column, or one per column.
    """
    U = np.asarray(U, dtype=float)
    if not isinstance(margins, (list, tuple)):
        margins = [margins] * U.shape[1]
    if len(margins) != U.shape[1]:
        raise ValueError("need one margin per column")
    cols = [m.quantile(U[:, j]) for j, m in enumerate(margins)]
    return np.column_stack(cols)


# -- functionals -------------------------------------------------------------------


def psi_sobol_g(spec, U: np.ndarray) -> np.ndarray:
    """Rowwise product test function on Rosenblatt-transformed coordinates."""
    R = cp.rosenblatt(spec, U)
    j = np.arange(1, R.shape[1] + 1)
    return ((np.abs(4.0 * R - 2.0) + j) / (1.0 + j)).prod(axis=1)


def _tail_count(n: int, level: float) -> int:
    """ceil(n(1-level)), guarded against 1-level rounding up through an integer."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    x = n * (1.0 - level)
    if x < 1.0 - 1e-9:
        raise ValueError("sample too small for this level")
    return max(1, math.ceil(x - 1e-9))


def es_estimate(sums: np.ndarray, level: float) -> float:
    """Empirical upper-tail mean: average of the ceil(n(1-level)) largest values."""
    sums = np.asarray(sums, dtype=float)
    k = _tail_count(sums.size, level)
    return float(np.sort(sums)[-k:].mean())


def allocation_estimate(X: np.ndarray, level: float, component: int = 0) -> float:
    """Mean of one component over the rows whose sum lands in the upper tail."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    sums = X.sum(axis=1)
    k = _tail_count(sums.size, level)
    tail = np.argsort(sums)[-k:]
    return float(X[tail, component].mean())


def basket_call_payoff(S_T: np.ndarray, r: float, t: float, T: float, K: float) -> np.ndarray:
    """Discounted positive part of the basket sum minus strike, rowwise."""
    S_T = np.asarray(S_T, dtype=float)
    disc = math.exp(-r * (T - t))
    return disc * np.maximum(S_T.sum(axis=1) - K, 0.0)


@dataclass
class SobolG:
    """Mean of the product test function under the Rosenblatt map of `spec`."""

    spec: object

    def evaluate(self, U: np.ndarray) -> float:
        return float(psi_sobol_g(self.spec, U).mean())


@dataclass
class ExpectedShortfall:
    margins: object
    level: float = 0.99

    def evaluate(self, U: np.ndarray) -> float:
        X = apply_margins(U, self.margins)
        return es_estimate(X.sum(axis=1), self.level)


@dataclass
class Allocation:
    margins: object
    level: float = 0.99
    component: int = 0

    def evaluate(self, U: np.ndarray) -> float:
        X = apply_margins(U, self.margins)
        return allocation_estimate(X, self.level, self.component)


@dataclass
class BasketCall:
    """Discounted expected payoff of a basket call on lognormal margins."""

    spots: list[float]
    vols: list[float]
    r: float = 0.01
    t: float = 0.0
    T: float = 1.0
    K: float | None = None  # default: 0.5% above the average spot

    def __post_init__(self):
        if len(self.spots) != len(self.vols):
            raise ValueError("need one volatility per spot")
        if self.K is None:
            self.K = 1.005 * float(np.mean(self.spots)) * len(self.spots)

    def margins(self):
        dt = self.T - self.t
        return [
            LognormalMargin(
                meanlog=math.log(s) + (self.r - 0.5 * v * v) * dt,
                sdlog=v * math.sqrt(dt),
            )
            for s, v in zip(self.spots, self.vols)
        ]

    def evaluate(self, U: np.ndarray) -> float:
        S_T = apply_margins(U, self.margins())
        return float(basket_call_payoff(S_T, self.r, self.t, self.T, self.K).mean())


# -- sample sources -----------------------------------------------------------------


@dataclass
class CopulaPrs:
    spec: object
    method: str = field(default="copula_PRS", init=False)

    def generate(self, n: int, seed: int, replication: int) -> np.ndarray:
        return cp.sample(self.spec, n, RngStream(seed, stream_id=replication))


@dataclass
class CopulaQrs:
    """Conditional-distribution transform of a randomized point set.

    Only available for families with a tractable inverse Rosenblatt transform;
    others raise UnsupportedCopulaError (reported as 'not available').
    """

    spec: object
    randomization: str = "scrambled"
    numeric_gumbel: bool = False
    method: str = field(default="copula_QRS", init=False)

    def generate(self, n: int, seed: int, replication: int) -> np.ndarray:
        ps = _randomized_points(cp.dim(self.spec), n, self.randomization, seed + replication)
        pts = np.clip(ps.points, 2.0**-64, 1.0 - 2.0**-53)
        return cp.inverse_rosenblatt(self.spec, pts, numeric_gumbel=self.numeric_gumbel)


@dataclass
class GmmnPrs:
    model: gmmn.TrainedModel
    pseudo_obs: bool = False
    method: str = field(default="gmmn_PRS", init=False)

    def generate(self, n: int, seed: int, replication: int) -> np.ndarray:
        return gmmn.generate_pseudo(
            self.model, n, RngStream(seed, stream_id=replication), pseudo_obs=self.pseudo_obs
        )


@dataclass
class GmmnQrs:
    model: gmmn.TrainedModel
    randomization: str = "scrambled"
    pseudo_obs: bool = False
    method: str = field(default="gmmn_QRS", init=False)

    def generate(self, n: int, seed: int, replication: int) -> np.ndarray:
        ps = _randomized_points(self.model.input_dim, n, self.randomization, seed + replication)
        return gmmn.generate_quasi(self.model, ps, pseudo_obs=self.pseudo_obs)


def _randomized_points(p: int, n: int, randomization: str, seed: int) -> qmc.PointSet:
    net = qmc.DigitalNet.sobol(p)
    if randomization == "scrambled":
        return qmc.owen_scramble(net, n, seed=seed)
    if randomization == "digital_shift":
        return qmc.digital_shift(net, n, seed=seed)
    raise ValueError("randomization must be 'scrambled' or 'digital_shift'")


def run_estimator(functional, source, n_gen: int, seed: int = 0, replication: int = 0) -> float:
    """One estimate of E Psi from n_gen samples of the given source."""
    U = source.generate(n_gen, seed, replication)
    return functional.evaluate(U)


# -- studies ------------------------------------------------------------------------


@dataclass
class EstimatorReport:
    n_grid: list[int]
    estimates: dict[str, np.ndarray]  # method -> (len(n_grid), B)
    sds: dict[str, np.ndarray] = field(default_factory=dict)
    alphas: dict[str, float] = field(default_factory=dict)
    intercepts: dict[str, float] = field(default_factory=dict)
    r_squared: dict[str, float] = field(default_factory=dict)

    def summarize(self, trim_below: int | None = None) -> None:
        """Fit log sd on log n with equal weights; sd ~ n^-alpha.

        All grid points enter the fit by default; trim_below drops grid
        points with n below it from the regression (never from the sds).
        """
        logn = np.log(np.asarray(self.n_grid, dtype=float))
        keep = np.ones(len(self.n_grid), dtype=bool)
        if trim_below is not None:
            keep = np.asarray(self.n_grid) >= trim_below
            if keep.sum() < 2:
                raise ValueError("trim_below leaves fewer than two grid points")
        for method, est in self.estimates.items():
            sd = est.std(axis=1, ddof=1)
            self.sds[method] = sd
            logsd = np.log(sd[keep])
            slope, intercept = np.polyfit(logn[keep], logsd, 1)
            resid = logsd - (intercept + slope * logn[keep])
            total = logsd - logsd.mean()
            self.alphas[method] = float(-slope)  # sd ~ n^-alpha
            self.intercepts[method] = float(intercept)
            self.r_squared[method] = float(1.0 - (resid**2).sum() / (total**2).sum())

    def vrf(self, baseline: str, method: str, n: int | None = None) -> float:
        """Variance reduction factor of `method` against `baseline` at size n."""
        i = len(self.n_grid) - 1 if n is None else self.n_grid.index(n)
        return vrf(self.estimates[baseline][i], self.estimates[method][i])

    def write_estimates_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "n_gen", "replication", "estimate"])
            for method, est in self.estimates.items():
                for i, n in enumerate(self.n_grid):
                    for b in range(est.shape[1]):
                        w.writerow([method, n, b, FMT % est[i, b]])

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "n_gen", "sd"])
            for method, sd in self.sds.items():
                for n, s in zip(self.n_grid, sd):
                    w.writerow([method, n, FMT % s])

    def write_fit_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "alpha", "intercept", "r_squared"])
            for method in self.alphas:
                w.writerow(
                    [
                        method,
                        FMT % self.alphas[method],
                        FMT % self.intercepts[method],
                        FMT % self.r_squared[method],
                    ]
                )


def convergence_study(
    functional,
    sources: dict[str, object],
    n_grid=None,
    B: int = 25,
    seed: int = 0,
    trim_below: int | None = None,
) -> EstimatorReport:
    """Standard deviations over B replications along an n grid, per source.

    alpha is the negated slope of an equal-weight least-squares fit of
    log sd on log n (sd ~ n^-alpha); trim_below optionally excludes the
    smallest grid points from the fit.
    """
    if B < 2:
        raise ValueError("need at least B = 2 replications for a standard deviation")
    n_grid = list(PAPER_GRID if n_grid is None else n_grid)
    estimates = {}
    for name, source in sources.items():
        est = np.empty((len(n_grid), B))
        for i, n in enumerate(n_grid):
            for b in range(B):
                est[i, b] = run_estimator(functional, source, n, seed=seed, replication=b)
        estimates[name] = est
    report = EstimatorReport(n_grid=n_grid, estimates=estimates)
    report.summarize(trim_below=trim_below)
    return report


def vrf(mc_estimates, rqmc_estimates) -> float:
    """Variance reduction factor: var(MC replicates) / var(RQMC replicates)."""
    mc = np.asarray(mc_estimates, dtype=float)
    rq = np.asarray(rqmc_estimates, dtype=float)
    if mc.size < 2 or rq.size < 2:
        raise ValueError("need at least two replications on both sides")
    v_mc = mc.var(ddof=1)
    v_rq = rq.var(ddof=1)
    if v_rq == 0.0:
        warnings.warn("RQMC variance is exactly zero; reporting inf")
        return math.inf
    return float(v_mc / v_rq)
