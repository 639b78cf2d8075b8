"""Temperature-ladder tuning by minimising the expected log-rejection.

A tempered sweep accumulates weighted energy sums F (heating) and F'
(cooling) and accepts with probability min{1, exp(-(F' - F))}.  Under
per-level equilibrium the expectation of F' - F equals the gap between two
Riemann step functions of the mean-energy curve g(beta) = E_beta[h(X)]:

    gap(beta_0..beta_n) = sum_i (beta_i - beta_{i+1}) (g(beta_{i+1}) - g(beta_i))

which is nonnegative because g is decreasing, and identically the sum of the
symmetrised Kullback-Leibler divergences between consecutive levels.  This
module evaluates the gap, its analytic gradient in the interior betas, and
minimises it subject to the ordering constraint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from tempertune.core import AnalyticCurve, TemperatureLadder, TemperingError

logger = logging.getLogger(__name__)

_GRADIENT_TOL = 1e-8
_MAX_ITER = 500
_TIE_TOL = 1e-12


class MeanEnergyCurve:
    """g(beta) = E_beta[h(X)] with its derivative, on a fixed beta interval.

    Wraps vectorised callables and enforces the domain: evaluation outside
    [beta_min, beta_max] raises, which catches ladders that escape the range
    an estimated curve was built on.
    """

    def __init__(
        self,
        g: Callable[[np.ndarray], np.ndarray],
        g_prime: Callable[[np.ndarray], np.ndarray],
        domain: tuple[float, float],
        clipped_points: int = 0,
    ) -> None:
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"domain must satisfy beta_min < beta_max, got ({lo}, {hi})")
        self._g = g
        self._g_prime = g_prime
        self.domain = (lo, hi)
        #: number of grid points whose estimated derivative was clipped to 0
        self.clipped_points = clipped_points

    def _check(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        lo, hi = self.domain
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(beta < lo - tol) or np.any(beta > hi + tol):
            raise ValueError(
                f"beta outside curve domain [{lo}, {hi}]: {beta[(beta < lo - tol) | (beta > hi + tol)]}"
            )
        return np.clip(beta, lo, hi)

    def g(self, beta):
        b = self._check(beta)
        out = np.asarray(self._g(b), dtype=float)
        return float(out) if np.isscalar(beta) or out.ndim == 0 else out

    def g_prime(self, beta):
        b = self._check(beta)
        out = np.asarray(self._g_prime(b), dtype=float)
        return float(out) if np.isscalar(beta) or out.ndim == 0 else out

    @classmethod
    def from_analytic(cls, curve: AnalyticCurve, domain: tuple[float, float]) -> "MeanEnergyCurve":
        g = np.vectorize(curve.g, otypes=[float])
        gp = np.vectorize(curve.g_prime, otypes=[float])
        return cls(g, gp, domain)


@dataclass(frozen=True)
class TuningResult:
    """Outcome of a ladder optimisation run."""

    ladder: TemperatureLadder
    gap: float
    gradient_norm: float
    starts_used: tuple[str, ...]
    converged: bool

    def to_json_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.ladder.betas],
            "s_n": self.gap,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "starts": list(self.starts_used),
        }


def geometric_ladder(beta0: float, beta_n: float, n: int) -> TemperatureLadder:
    """Ladder with constant ratio beta_{i+1} / beta_i; endpoints exact."""
    if n < 1:
        raise ValueError(f"need n >= 1 levels, got {n}")
    if beta_n <= 0:
        raise ValueError(f"geometric spacing requires beta_n > 0, got {beta_n}")
    if not beta0 > beta_n:
        raise ValueError(f"need beta0 > beta_n, got {beta0} <= {beta_n}")
    c = (beta_n / beta0) ** (1.0 / n)
    betas = beta0 * c ** np.arange(n + 1, dtype=float)
    betas[0] = beta0
    betas[-1] = beta_n
    return TemperatureLadder(betas)


def uniform_ladder(beta0: float, beta_n: float, n: int) -> TemperatureLadder:
    """Equally spaced ladder; beta_n = 0 is allowed."""
    if n < 1:
        raise ValueError(f"need n >= 1 levels, got {n}")
    if beta_n < 0:
        raise ValueError(f"beta_n must be >= 0, got {beta_n}")
    if not beta0 > beta_n:
        raise ValueError(f"need beta0 > beta_n, got {beta0} <= {beta_n}")
    return TemperatureLadder(np.linspace(beta0, beta_n, n + 1))


def ladder_gap(ladder: TemperatureLadder, curve: MeanEnergyCurve) -> float:
    """Expected log-rejection of a sweep: the step-function area gap over g."""
    ladder.require_valid()
    betas = ladder.betas
    g = curve.g(betas)
    return float(np.sum((betas[:-1] - betas[1:]) * (g[1:] - g[:-1])))


def ladder_gap_gradient(ladder: TemperatureLadder, curve: MeanEnergyCurve) -> np.ndarray:
    """Partial derivatives of the gap in the interior betas (length n - 1).

    Component i (for interior index i = 1..n-1) is

        (g(b_{i-1}) - 2 g(b_i) + g(b_{i+1})) + (b_{i-1} - 2 b_i + b_{i+1}) g'(b_i).
    """
    ladder.require_valid()
    if ladder.n < 2:
        raise ValueError("gradient needs n >= 2 (at least one interior temperature)")
    betas = ladder.betas
    g = curve.g(betas)
    gp = curve.g_prime(betas[1:-1])
    second_g = g[:-2] - 2.0 * g[1:-1] + g[2:]
    second_b = betas[:-2] - 2.0 * betas[1:-1] + betas[2:]
    return second_g + second_b * gp


def gap_upper_bound(beta0: float, beta_n: float, n: int, curve: MeanEnergyCurve) -> float:
    """(1/n)(beta0 - beta_n)(g(beta_n) - g(beta0)), an upper bound on the minimum.

    Achieved by spacing either the betas or the g values uniformly.
    """
    return (beta0 - beta_n) * (curve.g(beta_n) - curve.g(beta0)) / n


def symmetrized_kl_sum(ladder: TemperatureLadder, kl: Callable[[int, int], float]) -> float:
    """Sum over consecutive levels of KL[p_{i+1}, p_i] + KL[p_i, p_{i+1}].

    ``kl(i, j)`` must return the Kullback-Leibler divergence between ladder
    levels i and j.  Under per-level equilibrium this sum equals the ladder
    gap exactly.
    """
    ladder.require_valid()
    total = 0.0
    for i in range(ladder.n):
        forward = float(kl(i + 1, i))
        backward = float(kl(i, i + 1))
        for value, pair in ((forward, (i + 1, i)), (backward, (i, i + 1))):
            if value < -1e-12:
                raise ValueError(f"negative KL divergence {value} for levels {pair}")
        total += max(forward, 0.0) + max(backward, 0.0)
    return total


# --- constrained minimisation ------------------------------------------------
#
# Interior temperatures are parameterised by unconstrained u_1..u_{n-1}: the n
# interval widths are softmax-normalised positive increments (last weight
# pinned to 1), so beta0 > beta_1 > ... > beta_n holds by construction and the
# optimiser can never produce a non-ordered ladder.


def _betas_from_u(u: np.ndarray, beta0: float, beta_n: float) -> np.ndarray:
    w = np.exp(np.concatenate([u, [0.0]]))
    fractions = w / w.sum()
    betas = beta0 - (beta0 - beta_n) * np.concatenate([[0.0], np.cumsum(fractions)])
    betas[0] = beta0
    betas[-1] = beta_n
    return betas


def _u_from_betas(betas: np.ndarray) -> np.ndarray:
    widths = betas[:-1] - betas[1:]
    if np.any(widths <= 0):
        raise ValueError("start ladder must be strictly decreasing")
    return np.log(widths[:-1] / widths[-1])


def _u_gradient(u: np.ndarray, grad_beta: np.ndarray, beta0: float, beta_n: float) -> np.ndarray:
    # chain rule through the softmax-cumsum map:
    # dbeta_i/du_j = -(beta0 - beta_n) * f_j * (I[j <= i] - c_i)
    w = np.exp(np.concatenate([u, [0.0]]))
    fractions = w / w.sum()
    c = np.cumsum(fractions)[:-1]  # c_i, i = 1..n-1
    k = len(u)
    lower = np.tril(np.ones((k, k)))  # I[j <= i]
    jac = -(beta0 - beta_n) * fractions[:k][None, :] * (lower - c[:, None])
    return jac.T @ grad_beta


def _resolve_start(
    start, beta0: float, beta_n: float, n: int, index: int
) -> tuple[str, TemperatureLadder]:
    if isinstance(start, str):
        if start == "geometric":
            return "geometric", geometric_ladder(beta0, beta_n, n)
        if start == "uniform":
            return "uniform", uniform_ladder(beta0, beta_n, n)
        raise ValueError(f"unknown start label {start!r}; use 'geometric', 'uniform', or a ladder")
    if isinstance(start, TemperatureLadder):
        ladder = start
        label = f"explicit-{index}"
    else:
        label, ladder = start
        if not isinstance(ladder, TemperatureLadder):
            ladder = TemperatureLadder(np.asarray(ladder, dtype=float))
    ladder.require_valid()
    if len(ladder) != n + 1:
        raise ValueError(f"start ladder has {len(ladder)} betas, expected {n + 1}")
    if not (np.isclose(ladder.beta0, beta0) and np.isclose(ladder.beta_n, beta_n)):
        raise ValueError("start ladder endpoints must match (beta0, beta_n)")
    return label, ladder


def optimize_ladder(
    curve: MeanEnergyCurve,
    beta0: float,
    beta_n: float,
    n: int,
    starts: Sequence = ("geometric", "uniform"),
) -> TuningResult:
    """Minimise the ladder gap over the interior inverse temperatures.

    Runs a quasi-Newton (BFGS) search from every start and keeps the best
    final gap; ties within 1e-12 go to the earlier start, so the default
    geometric start wins exact ties.  Starts may be the labels ``"geometric"``
    and ``"uniform"``, explicit :class:`TemperatureLadder` objects, or
    ``(label, ladder)`` pairs.  The returned gap is never above any start's
    gap.  If no start converges the best iterate is still returned with
    ``converged=False``.
    """
    if n < 2:
        raise ValueError(f"nothing to tune for n < 2, got n={n}")
    if not beta0 > beta_n:
        raise ValueError(f"need beta0 > beta_n, got {beta0} <= {beta_n}")
    if not starts:
        raise ValueError("need at least one start")

    def objective(u: np.ndarray) -> float:
        betas = _betas_from_u(u, beta0, beta_n)
        g = curve.g(betas)
        return float(np.sum((betas[:-1] - betas[1:]) * (g[1:] - g[:-1])))

    def jacobian(u: np.ndarray) -> np.ndarray:
        betas = _betas_from_u(u, beta0, beta_n)
        grad_beta = ladder_gap_gradient(TemperatureLadder(betas), curve)
        return _u_gradient(u, grad_beta, beta0, beta_n)

    best: tuple[float, int, str, np.ndarray, bool] | None = None
    labels: list[str] = []
    for index, raw in enumerate(starts):
        label, ladder = _resolve_start(raw, beta0, beta_n, n, index)
        labels.append(label)
        u0 = _u_from_betas(ladder.betas)
        result = _scipy_minimize(
            objective,
            u0,
            jac=jacobian,
            method="BFGS",
            options={"gtol": _GRADIENT_TOL, "maxiter": _MAX_ITER},
        )
        value = objective(result.x)
        if not np.isfinite(value):
            raise TemperingError(f"ladder optimisation produced non-finite gap from start {label!r}")
        if best is None or value < best[0] - _TIE_TOL:
            best = (value, index, label, result.x, bool(result.success))

    assert best is not None
    gap_value, _, best_label, u_best, converged = best
    tuned = TemperatureLadder(_betas_from_u(u_best, beta0, beta_n))
    grad_norm = float(np.linalg.norm(ladder_gap_gradient(tuned, curve)))
    if not converged:
        logger.warning(
            "ladder optimisation did not meet the gradient tolerance from start %s "
            "(gap %.6g, gradient norm %.3g); returning best iterate",
            best_label,
            gap_value,
            grad_norm,
        )
    return TuningResult(
        ladder=tuned,
        gap=gap_value,
        gradient_norm=grad_norm,
        starts_used=tuple(labels),
        converged=converged,
    )
