"""Target families, chain states, and temperature ladders.

A target family describes an unnormalised density pi(x) exp(-beta0 h(x)) via
its energy h(x) and log base density log pi(x), together with a transition
kernel that leaves each tempered level

    p_beta(x) ~ pi(x) exp(-beta h(x))

invariant.  Everything downstream (sweeps, curve estimation, tuning) works
through this interface; concrete states are opaque to this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Optional, Sequence

import numpy as np


class TemperingError(RuntimeError):
    """A numerical failure inside the tempering machinery."""


class ChainState(NamedTuple):
    """A model state together with its cached energy h(value).

    States are immutable; kernels return fresh states with the energy already
    filled in, so the cache can never go stale.
    """

    value: Any
    energy: float


class AnalyticCurve(NamedTuple):
    """Closed forms for g(beta) = E_beta[h(X)] and its first two derivatives."""

    g: Callable[[float], float]
    g_prime: Callable[[float], float]
    g_double_prime: Callable[[float], float]


@dataclass(frozen=True)
class TemperatureLadder:
    """Ordered inverse temperatures beta_0 > beta_1 > ... > beta_n >= 0.

    ``betas[0]`` is the target temperature and ``betas[n]`` the flattest
    level.  The constructor does not validate; use :func:`validate_ladder`
    for a violation report or :meth:`require_valid` to raise.
    """

    betas: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.betas, dtype=float)
        object.__setattr__(self, "betas", arr)

    @property
    def n(self) -> int:
        """Number of tempered levels (ladder length minus one)."""
        return len(self.betas) - 1

    @property
    def beta0(self) -> float:
        return float(self.betas[0])

    @property
    def beta_n(self) -> float:
        return float(self.betas[-1])

    def require_valid(self) -> "TemperatureLadder":
        violations = validate_ladder(self)
        if violations:
            raise ValueError("invalid temperature ladder: " + "; ".join(violations))
        return self

    def __len__(self) -> int:
        return len(self.betas)


def validate_ladder(ladder: TemperatureLadder | Sequence[float]) -> list[str]:
    """Report every violated ladder invariant; an empty list means valid.

    Checks strict decrease, nonnegativity of the last entry, length >= 2,
    and finiteness.  Diagnostic only: never raises.
    """
    betas = ladder.betas if isinstance(ladder, TemperatureLadder) else np.asarray(ladder, dtype=float)
    violations: list[str] = []
    if betas.ndim != 1:
        return [f"betas must be one-dimensional, got shape {betas.shape}"]
    if len(betas) < 2:
        violations.append(f"need n >= 1 tempered levels, so at least 2 betas (got {len(betas)})")
        return violations
    if not np.all(np.isfinite(betas)):
        violations.append("betas must all be finite")
    for i in range(1, len(betas)):
        if not betas[i] < betas[i - 1]:
            violations.append(f"ordering broken at index {i}: beta[{i}]={betas[i]} >= beta[{i-1}]={betas[i-1]}")
    if betas[-1] < 0:
        violations.append(f"final beta must be >= 0, got {betas[-1]}")
    return violations


@dataclass(frozen=True)
class TargetFamily:
    """The pieces a tempered sampler needs from a concrete target.

    Parameters
    ----------
    energy:
        h(x), finite for every reachable state.
    log_base:
        log pi(x) up to an additive constant.  Only differences are ever
        used, so normalising constants may be dropped.
    kernel:
        ``kernel(beta, state, rng) -> state`` satisfying detailed balance
        with respect to p_beta.  Ladder levels enter only through their
        inverse temperature, which also lets curve estimation run the same
        kernel at arbitrary beta.
    base_sampler:
        Optional independent draw from the flattest useful level.
    analytic_g:
        Optional closed forms for the mean-energy curve g(beta) = E_beta[h].
    initial_state:
        Optional deterministic-or-random chain initialiser; falls back to
        ``base_sampler``.
    trace_columns / trace_values:
        Names and extractor for the model-specific trace columns written by
        the chain driver.
    """

    name: str
    energy: Callable[[Any], float]
    log_base: Callable[[Any], float]
    kernel: Callable[[float, ChainState, np.random.Generator], ChainState]
    base_sampler: Optional[Callable[[np.random.Generator], ChainState]] = None
    analytic_g: Optional[AnalyticCurve] = None
    initial_state: Optional[Callable[[np.random.Generator], ChainState]] = None
    trace_columns: tuple[str, ...] = ("x",)
    trace_values: Optional[Callable[[ChainState], tuple[float, ...]]] = None

    def make_state(self, value: Any) -> ChainState:
        """Build a state with its energy computed and checked finite."""
        e = float(self.energy(value))
        if not math.isfinite(e):
            raise TemperingError(f"non-finite energy {e!r} for state {value!r} of target {self.name}")
        return ChainState(value, e)

    def start_state(self, rng: np.random.Generator) -> ChainState:
        if self.initial_state is not None:
            return self.initial_state(rng)
        if self.base_sampler is not None:
            return self.base_sampler(rng)
        raise ValueError(f"target {self.name} defines neither initial_state nor base_sampler")

    def trace_row(self, state: ChainState) -> tuple[float, ...]:
        if self.trace_values is not None:
            return self.trace_values(state)
        return (float(state.value),)


def log_unnorm_density(family: TargetFamily, beta: float, state: ChainState) -> float:
    """log of pi(x) exp(-beta h(x)) up to a state-independent constant.

    The additive constant is consistent across calls for a fixed family, so
    ratios of exponentiated values are exact density ratios.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if not math.isfinite(state.energy):
        raise TemperingError(f"state has non-finite cached energy {state.energy!r}")
    return float(family.log_base(state.value)) - beta * state.energy
