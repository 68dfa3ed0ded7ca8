"""Deterministic, seed-addressable random streams and univariate distributions.

Streams are counter-based (Philox keyed by (seed, stream_id)), so any number of
statistically independent streams can be derived without sequential splitting.
All normal variates are obtained by quantile inversion of uniforms; the same
inversion path serves quasi-Monte Carlo inputs elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

RETRY_CAP = 10**6

_U53 = 2.0**-53


def _check_prob(p, name: str = "p") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return p


def normal_quantile(p):
    """Standard normal quantile Phi^{-1}(p), p strictly inside (0, 1)."""
    p = _check_prob(p)
    out = _sp.ndtri(p)
    return float(out) if out.ndim == 0 else out


def normal_cdf(x):
    """Standard normal distribution function Phi(x), erf-based."""
    out = _sp.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return float(out) if out.ndim == 0 else out


def student_t_quantile(p, nu: float):
    """Quantile of the (standardized) Student t distribution with nu > 0 dof."""
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    p = _check_prob(p)
    out = np.where(p == 0.5, 0.0, _sp.stdtrit(nu, p))  # exact at the median
    return float(out) if out.ndim == 0 else out


def student_t_cdf(x, nu: float):
    """Student t distribution function; computed through the incomplete beta."""
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    out = _sp.stdtr(nu, np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass
class RngStream:
    """Counter-based random stream addressed by (seed, stream_id).

    The same (seed, stream_id) always reproduces the same sequence; streams
    with distinct stream_id are independent. Streams are value types: share
    work between workers by handing each one its own stream_id.
    """

    seed: int
    stream_id: int = 0
    position: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngStream":
        """Fresh independent stream under the same seed."""
        return RngStream(self.seed, stream_id)

    # -- uniform / derived ------------------------------------------------

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniforms strictly inside (0, 1) (53-bit lattice, half-offset)."""
        n = 1 if size is None else int(np.prod(size))
        if n < 1:
            raise ValueError("size must be at least 1")
        k = self._gen.integers(0, 1 << 53, size=n, dtype=np.int64)
        self.position += n
        u = (k + 0.5) * _U53
        if size is None:
            return float(u[0])
        return u.reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        self.position += n
        return self._gen.permutation(n)

    def normals(self, size=None):
        """Standard normals by quantile inversion (never Box-Muller)."""
        return normal_quantile(self.uniform(size))

    def exponential(self, size=None):
        u = self.uniform(size)
        return -np.log(u)

    # -- gamma family ------------------------------------------------------

    def gamma_variate(self, shape: float, rate: float = 1.0, size=None):
        """Gamma draws via the Marsaglia-Tsang squeeze; shape<1 boosted."""
        if shape <= 0.0 or rate <= 0.0:
            raise ValueError("shape and rate must be positive")
        scalar = size is None
        n = 1 if scalar else int(size)
        if shape < 1.0:
            g = self._gamma_mt(shape + 1.0, n)
            u = np.asarray(self.uniform(n))
            out = g * u ** (1.0 / shape)
        else:
            out = self._gamma_mt(shape, n)
        out = out / rate
        return float(out[0]) if scalar else out

    def _gamma_mt(self, shape: float, n: int) -> np.ndarray:
        d = shape - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(16, int(1.2 * (n - filled)))
            x = np.asarray(self.normals(m))
            v = (1.0 + c * x) ** 3
            u = np.asarray(self.uniform(m))
            with np.errstate(invalid="ignore", divide="ignore"):
                ok = (v > 0.0) & (np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v))
            acc = v[ok]
            take = min(len(acc), n - filled)
            out[filled : filled + take] = d * acc[:take]
            filled += take
        return out

    def chi_square(self, nu: float, size=None):
        if nu <= 0.0:
            raise ValueError("nu must be positive")
        return self.gamma_variate(0.5 * nu, rate=0.5, size=size)

    # -- one-sided stable laws ----------------------------------------------

    def positive_stable(self, alpha: float, size=None):
        """One-sided stable S with Laplace transform E exp(-t S) = exp(-t^alpha).

        Sampled by the Chambers-Mallows-Stuck / Kanter formula; alpha = 1 is
        the degenerate point mass at 1.
        """
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        scalar = size is None
        n = 1 if scalar else int(size)
        if alpha == 1.0:
            out = np.ones(n)
        else:
            theta = np.pi * np.asarray(self.uniform(n))
            w = np.asarray(self.exponential(n))
            ratio = (1.0 - alpha) / alpha
            out = (
                np.sin(alpha * theta)
                * np.sin((1.0 - alpha) * theta) ** ratio
                / (np.sin(theta) ** (1.0 / alpha) * w**ratio)
            )
        return float(out[0]) if scalar else out

    def tilted_positive_stable(
        self, alpha: float, tilt: float, size=None, return_acceptance: bool = False
    ):
        """Exponentially tilted one-sided stable draw(s).

        Density proportional to exp(-tilt*s) times the positive_stable(alpha)
        density, so E exp(-t V) = exp(-((tilt+t)^alpha - tilt^alpha)). Simple
        rejection from positive_stable with acceptance probability
        exp(-tilt*S); tilt = 0 reduces to the untilted law. Aborts with an
        error if a draw survives RETRY_CAP rejection rounds.
        """
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if tilt < 0.0:
            raise ValueError("tilt must be nonnegative")
        scalar = size is None
        n = 1 if scalar else int(size)
        out = np.empty(n)
        pending = np.arange(n)
        rounds = 0
        proposals = 0
        while pending.size:
            rounds += 1
            if rounds > RETRY_CAP:
                raise RuntimeError(
                    "tilted_positive_stable: retry cap exceeded "
                    f"(alpha={alpha}, tilt={tilt})"
                )
            s = np.asarray(self.positive_stable(alpha, size=pending.size))
            proposals += pending.size
            if tilt == 0.0:
                out[pending] = s
                pending = pending[:0]
                break
            u = np.asarray(self.uniform(pending.size))
            ok = u <= np.exp(-tilt * s)
            out[pending[ok]] = s[ok]
            pending = pending[~ok]
        res = float(out[0]) if scalar else out
        if return_acceptance:
            return res, n / proposals if proposals else 1.0
        return res
