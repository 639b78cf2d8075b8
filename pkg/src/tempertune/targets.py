"""Analytic target families with closed-form mean-energy curves.

Two targets live here.  The Witch's Hat density

    p(x) ~ 1 + b * I[x <= a]   on [0, 1]

is a narrow tall peak over a uniform floor; local samplers struggle to cross
x = a when a is small and b large.  Its tempered levels can be sampled
exactly by CDF inversion and g(beta) = E_beta[h(X)] is available in closed
form, which makes it the main validation fixture.  The d-dimensional
Gaussian has g(beta) = d / (2 beta) and is the fixture for which geometric
ladder spacing is exactly optimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tempertune.core import AnalyticCurve, ChainState, TargetFamily


def _sigmoid(t: float) -> float:
    # branch keeps exp() argument nonpositive
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@dataclass(frozen=True)
class WitchsHat:
    """Parameters of the one-dimensional two-parameter Witch's Hat.

    ``a`` is the peak width in (0, 1); ``b >= 0`` the peak height over the
    uniform floor.  All (1+b)^beta terms are evaluated through
    exp(beta * log1p(b)) so heights up to ~1e9 stay finite.
    """

    a: float
    b: float

    def __post_init__(self) -> None:
        if not 0.0 < self.a < 1.0:
            raise ValueError(f"peak width a must lie in (0, 1), got {self.a}")
        if self.b < 0.0:
            raise ValueError(f"peak height b must be >= 0, got {self.b}")

    @property
    def log_height(self) -> float:
        """log(1 + b), the energy magnitude of the peak region."""
        return math.log1p(self.b)

    def peak_probability(self, beta: float) -> float:
        """P(X <= a) under the tempered density at inverse temperature beta.

        Equals a(1+b)^beta / (a(1+b)^beta + 1 - a), formed as a logistic of
        beta*log1p(b) + log(a/(1-a)) to avoid overflow.
        """
        if beta < 0:
            raise ValueError(f"beta must be >= 0, got {beta}")
        t = beta * self.log_height + math.log(self.a) - math.log1p(-self.a)
        return _sigmoid(t)

    def g(self, beta: float) -> float:
        """Expected energy E_beta[h(X)] = -log(1+b) * P(X <= a)."""
        return -self.log_height * self.peak_probability(beta)

    def g_prime(self, beta: float) -> float:
        """d/dbeta of the expected energy; always negative (minus a variance)."""
        s = self.peak_probability(beta)
        return -self.log_height ** 2 * s * (1.0 - s)

    def g_double_prime(self, beta: float) -> float:
        """Second derivative; its sign separates convex / concave regimes."""
        s = self.peak_probability(beta)
        return -self.log_height ** 3 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def sample(self, beta: float, u: float) -> float:
        """Invert the piecewise-linear CDF of the tempered density at ``u``."""
        if not 0.0 < u < 1.0:
            raise ValueError(f"u must lie strictly in (0, 1), got {u}")
        s = self.peak_probability(beta)
        if u <= s:
            return u / s * self.a
        return self.a + (u - s) / (1.0 - s) * (1.0 - self.a)

    def theoretical_mean(self) -> float:
        """E[X] under the target (beta = 1) distribution."""
        a, b = self.a, self.b
        return ((1.0 + b) * a * a / 2.0 + (1.0 - a * a) / 2.0) / (1.0 + a * b)

    def energy(self, x: float) -> float:
        """h(x) = -log(1 + b I[x <= a]); two-valued."""
        return -self.log_height if x <= self.a else 0.0

    def analytic_curve(self) -> AnalyticCurve:
        return AnalyticCurve(self.g, self.g_prime, self.g_double_prime)

    def family(self) -> TargetFamily:
        """Target family with exact inversion sampling as the level kernel.

        The kernel draws independently from p_beta, which trivially satisfies
        detailed balance and decouples ladder effects from within-level
        mixing.
        """

        def kernel(beta: float, state: ChainState, rng: np.random.Generator) -> ChainState:
            x = self.sample(beta, rng.random())
            return ChainState(x, self.energy(x))

        def initial(rng: np.random.Generator) -> ChainState:
            x = rng.random()  # exact draw from the beta = 0 level
            return ChainState(x, self.energy(x))

        return TargetFamily(
            name=f"witch-hat(a={self.a}, b={self.b})",
            energy=self.energy,
            log_base=lambda x: 0.0,  # uniform base on [0, 1]
            kernel=kernel,
            base_sampler=initial,
            analytic_g=self.analytic_curve(),
            initial_state=initial,
            trace_columns=("x",),
        )


@dataclass(frozen=True)
class Gaussian:
    """d-dimensional Gaussian energy h(x) = (x-mu)' Sigma^{-1} (x-mu) / 2.

    Tempered levels are N(mu, Sigma / beta), so g(beta) = d / (2 beta)
    regardless of mu and Sigma.  Included as the analytic fixture whose
    optimal ladder is exactly geometric; its level kernel is a direct draw.
    """

    d: int
    mu: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        mu = np.zeros(self.d) if self.mu is None else np.asarray(self.mu, dtype=float)
        sigma = np.eye(self.d) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        if mu.shape != (self.d,):
            raise ValueError(f"mu must have shape ({self.d},), got {mu.shape}")
        if sigma.shape != (self.d, self.d):
            raise ValueError(f"sigma must have shape ({self.d}, {self.d}), got {sigma.shape}")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("sigma must be symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma must be positive definite") from exc
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_chol", chol)

    def g(self, beta: float) -> float:
        if beta <= 0:
            raise ValueError(f"g(beta) = d/(2 beta) has a pole at 0; got beta={beta}")
        return self.d / (2.0 * beta)

    def g_prime(self, beta: float) -> float:
        if beta <= 0:
            raise ValueError(f"g'(beta) undefined at beta={beta}")
        return -self.d / (2.0 * beta * beta)

    def g_double_prime(self, beta: float) -> float:
        if beta <= 0:
            raise ValueError(f"g''(beta) undefined at beta={beta}")
        return self.d / beta ** 3

    def energy(self, x: np.ndarray) -> float:
        dev = np.asarray(x, dtype=float) - self.mu
        w = np.linalg.solve(self._chol, dev)
        return 0.5 * float(w @ w)

    def analytic_curve(self) -> AnalyticCurve:
        return AnalyticCurve(self.g, self.g_prime, self.g_double_prime)

    def family(self) -> TargetFamily:
        def kernel(beta: float, state: ChainState, rng: np.random.Generator) -> ChainState:
            if beta <= 0:
                raise ValueError("Gaussian levels require beta > 0")
            z = rng.standard_normal(self.d)
            x = self.mu + (self._chol @ z) / math.sqrt(beta)
            return ChainState(x, self.energy(x))

        def initial(rng: np.random.Generator) -> ChainState:
            z = rng.standard_normal(self.d)
            x = self.mu + self._chol @ z
            return ChainState(x, self.energy(x))

        columns = tuple(f"x_{i}" for i in range(self.d))

        return TargetFamily(
            name=f"gaussian(d={self.d})",
            energy=self.energy,
            # flat base density: every level with beta > 0 is proper
            log_base=lambda x: 0.0,
            kernel=kernel,
            base_sampler=initial,
            analytic_g=self.analytic_curve(),
            initial_state=initial,
            trace_columns=columns,
            trace_values=lambda st: tuple(float(v) for v in np.atleast_1d(st.value)),
        )
