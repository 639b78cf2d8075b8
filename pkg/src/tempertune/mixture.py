"""Three-component Gaussian mixture posterior with likelihood-only tempering.

The state is x = (z, w, mu, sigma2): component labels for each of the 82
galaxy velocities, simplex weights, component means and variances.  Only the
likelihood factor is raised to the power beta; the priors (and the
allocation factor f(z | w)) stay untempered, so every tempered level is a
proper distribution.  The energy is minus the log-likelihood up to a
constant:

    h(x) = sum_j [ n_j/2 log sigma2_j + (1 / 2 sigma2_j) sum_{i: z_i=j} (y_i - mu_j)^2 ]

Raising the likelihood to beta preserves Normal / inverse-gamma conjugacy
with beta-scaled sufficient statistics, so the means and variances keep
exact Gibbs updates at every level; the labels use a symmetric two-way
Metropolis proposal.  Labels are stored 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple, Optional

import numpy as np

from tempertune.core import ChainState, TargetFamily

N_COMPONENTS = 3


@dataclass(frozen=True)
class GalaxyData:
    """Velocity observations (units of 1000 km/s)."""

    y: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.y, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("data must be a nonempty vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("data must be finite")
        object.__setattr__(self, "y", arr)

    def __len__(self) -> int:
        return len(self.y)


def bundled_galaxy_path():
    return resources.files("tempertune").joinpath("data/galaxy.txt")


def load_galaxy_data(path=None, expected_count: int = 82) -> GalaxyData:
    """Read one velocity per line; blank leading/trailing lines tolerated.

    Raises with the offending line number for anything non-numeric, and
    checks the count against ``expected_count`` (82 for the bundled set).
    """
    source = bundled_galaxy_path() if path is None else path
    values: list[float] = []
    text = source.read_text() if hasattr(source, "read_text") else open(source).read()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            values.append(float(stripped))
        except ValueError as exc:
            raise ValueError(f"galaxy data {source}: line {lineno} is not numeric: {stripped!r}") from exc
    if not values:
        raise ValueError(f"galaxy data {source} contains no values")
    if expected_count is not None and len(values) != expected_count:
        raise ValueError(f"galaxy data {source}: expected {expected_count} values, found {len(values)}")
    return GalaxyData(np.array(values))


@dataclass(frozen=True)
class MixturePriors:
    """Prior constants; defaults follow the standard proper choices.

    ``mean_variance`` is the variance (not the standard deviation) of the
    zero-mean normal prior on each component mean.  The inverse-gamma prior
    on the variances uses the shape-rate convention, density ~
    x^{-(shape+1)} exp(-rate / x).
    """

    weight_concentration: float = 1.0
    mean_variance: float = 1000.0
    variance_shape: float = 1.0
    variance_rate: float = 1.0


class MixtureState(NamedTuple):
    """Allocations (0-based labels), weights, means and variances."""

    z: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray


def component_counts(z: np.ndarray) -> np.ndarray:
    return np.bincount(z, minlength=N_COMPONENTS)


def _suff_stats(z: np.ndarray, y: np.ndarray, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts n_j and residual sums of squares around mu_j."""
    n = np.bincount(z, minlength=N_COMPONENTS)
    resid2 = (y - mu[z]) ** 2
    ss = np.bincount(z, weights=resid2, minlength=N_COMPONENTS)
    return n, ss


def mixture_energy(state: MixtureState, data: GalaxyData) -> float:
    """h(x): minus the log-likelihood, dropping the (m/2) log(2 pi) constant."""
    if np.any(state.sigma2 <= 0):
        raise ValueError(f"variances must be positive, got {state.sigma2}")
    n, ss = _suff_stats(state.z, data.y, state.mu)
    return float(np.sum(0.5 * n * np.log(state.sigma2) + 0.5 * ss / state.sigma2))


def update_weights(
    state: MixtureState,
    rng: np.random.Generator,
    priors: MixturePriors = MixturePriors(),
) -> MixtureState:
    """Gibbs draw w ~ Dirichlet(c + n); untempered.

    The allocation factor f(z | w) sits outside the tempered likelihood, so
    the weight conditional does not depend on beta.
    """
    n = component_counts(state.z)
    w = rng.dirichlet(priors.weight_concentration + n)
    return state._replace(w=w)


def update_means(
    state: MixtureState,
    data: GalaxyData,
    beta: float,
    rng: np.random.Generator,
    priors: MixturePriors = MixturePriors(),
) -> MixtureState:
    """Tempered Gibbs draw of the component means.

    mu_j ~ N(m_j, 1/P_j) with precision P_j = beta n_j / sigma2_j + 1/v0 and
    mean m_j = (beta sum_{z_i=j} y_i / sigma2_j) / P_j; at beta -> 0 this is
    the prior, and an empty component always draws from the prior.
    """
    n = component_counts(state.z)
    ysum = np.bincount(state.z, weights=data.y, minlength=N_COMPONENTS)
    precision = beta * n / state.sigma2 + 1.0 / priors.mean_variance
    mean = (beta * ysum / state.sigma2) / precision
    mu = mean + rng.standard_normal(N_COMPONENTS) / np.sqrt(precision)
    return state._replace(mu=mu)


def update_variances(
    state: MixtureState,
    data: GalaxyData,
    beta: float,
    rng: np.random.Generator,
    priors: MixturePriors = MixturePriors(),
) -> MixtureState:
    """Tempered Gibbs draw sigma2_j ~ InvGamma(a0 + beta n_j / 2, r0 + beta SS_j / 2)."""
    n, ss = _suff_stats(state.z, data.y, state.mu)
    shape = priors.variance_shape + 0.5 * beta * n
    rate = priors.variance_rate + 0.5 * beta * ss
    sigma2 = rate / rng.gamma(shape)
    return state._replace(sigma2=sigma2)


def update_allocations(
    state: MixtureState,
    data: GalaxyData,
    beta: float,
    rng: np.random.Generator,
) -> MixtureState:
    """Metropolis sweep over the labels with a uniform two-way proposal.

    Each site proposes one of the two other labels and accepts with
    probability min{1, w_new phi(y; new)^beta / (w_old phi(y; old)^beta)}.
    Given (w, mu, sigma2) the sites are conditionally independent, so the
    in-turn sweep is performed as one vectorised update.
    """
    log_phi = _log_densities(data.y, state.mu, state.sigma2)
    z_new = _allocation_sweep(state.z, state.w, log_phi, beta, rng)
    return state._replace(z=z_new)


def _log_densities(y: np.ndarray, mu: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """log phi(y_i; mu_j, sigma2_j), shape (m, 3)."""
    diff = y[:, None] - mu[None, :]
    return (-0.5 * np.log(2.0 * math.pi * sigma2))[None, :] - (0.5 / sigma2)[None, :] * diff * diff


def _allocation_sweep(
    z: np.ndarray, w: np.ndarray, log_phi: np.ndarray, beta: float, rng: np.random.Generator
) -> np.ndarray:
    m = len(z)
    score = np.log(w)[None, :] + beta * log_phi
    proposal = (z + rng.integers(1, N_COMPONENTS, size=m)) % N_COMPONENTS
    rows = np.arange(m)
    log_ratio = score[rows, proposal] - score[rows, z]
    accept = np.log(rng.random(m)) < log_ratio
    return np.where(accept, proposal, z)


def scan_with_energy(
    state: MixtureState,
    data: GalaxyData,
    beta: float,
    rng: np.random.Generator,
    priors: MixturePriors = MixturePriors(),
) -> tuple[MixtureState, float]:
    """One full kernel scan (w, mu, sigma2, z) returning the new energy too.

    Identical in distribution and in random-stream consumption to composing
    the four update functions; fused so that the sufficient statistics and
    the per-site density matrix are each computed once, and so the energy
    falls out of the matrix already in hand (the sweep evaluates h 2n times,
    which dominates the cost of a tempered run).
    """
    y = data.y
    z = state.z
    n = np.bincount(z, minlength=N_COMPONENTS)
    w = rng.dirichlet(priors.weight_concentration + n)

    ysum = np.bincount(z, weights=y, minlength=N_COMPONENTS)
    precision = beta * n / state.sigma2 + 1.0 / priors.mean_variance
    mean = (beta * ysum / state.sigma2) / precision
    mu = mean + rng.standard_normal(N_COMPONENTS) / np.sqrt(precision)

    resid2 = (y - mu[z]) ** 2
    ss = np.bincount(z, weights=resid2, minlength=N_COMPONENTS)
    shape = priors.variance_shape + 0.5 * beta * n
    rate = priors.variance_rate + 0.5 * beta * ss
    sigma2 = rate / rng.gamma(shape)

    log_phi = _log_densities(y, mu, sigma2)
    z_new = _allocation_sweep(z, w, log_phi, beta, rng)

    # h = -loglik - (m/2) log(2 pi); the matrix already holds the log densities
    loglik = float(log_phi[np.arange(len(y)), z_new].sum())
    energy = -loglik - 0.5 * len(y) * math.log(2.0 * math.pi)
    return MixtureState(z=z_new, w=w, mu=mu, sigma2=sigma2), energy


def level_scan(
    state: MixtureState,
    data: GalaxyData,
    beta: float,
    rng: np.random.Generator,
    priors: MixturePriors = MixturePriors(),
) -> MixtureState:
    """One full kernel scan at inverse temperature beta: w, mu, sigma2, z."""
    new_state, _ = scan_with_energy(state, data, beta, rng, priors)
    return new_state


def initial_mixture_state(data: GalaxyData) -> MixtureState:
    """Deterministic start: quantile split into three groups of sorted data."""
    order = np.argsort(data.y)
    z = np.empty(len(data), dtype=np.intp)
    for j, chunk in enumerate(np.array_split(order, N_COMPONENTS)):
        z[chunk] = j
    mu = np.array([data.y[z == j].mean() for j in range(N_COMPONENTS)])
    sigma2 = np.array([max(data.y[z == j].var(), 1e-6) for j in range(N_COMPONENTS)])
    w = np.full(N_COMPONENTS, 1.0 / N_COMPONENTS)
    return MixtureState(z=z, w=w, mu=mu, sigma2=sigma2)


def mixture_family(
    data: GalaxyData,
    priors: MixturePriors = MixturePriors(),
    include_allocations: bool = False,
) -> TargetFamily:
    """Target family whose level kernel is one full scan per invocation."""

    def energy(value: MixtureState) -> float:
        return mixture_energy(value, data)

    def log_base(value: MixtureState) -> float:
        # log prior density of (z, w, mu, sigma2) up to a constant
        if np.any(value.w <= 0) or np.any(value.sigma2 <= 0):
            return -math.inf
        log_alloc = float(np.sum(np.log(value.w[value.z])))
        log_mu = float(-0.5 * np.sum(value.mu**2) / priors.mean_variance)
        log_sigma2 = float(
            np.sum(-(priors.variance_shape + 1.0) * np.log(value.sigma2) - priors.variance_rate / value.sigma2)
        )
        log_w = float((priors.weight_concentration - 1.0) * np.sum(np.log(value.w)))
        return log_alloc + log_mu + log_sigma2 + log_w

    def kernel(beta: float, state: ChainState, rng: np.random.Generator) -> ChainState:
        new_value, energy = scan_with_energy(state.value, data, beta, rng, priors)
        return ChainState(new_value, energy)

    def initial(rng: np.random.Generator) -> ChainState:
        value = initial_mixture_state(data)
        return ChainState(value, mixture_energy(value, data))

    columns = tuple(
        f"{group}_{j + 1}" for group in ("w", "mu", "sigma2") for j in range(N_COMPONENTS)
    )
    if include_allocations:
        columns = columns + tuple(f"z_{i + 1}" for i in range(len(data)))

    def trace_values(state: ChainState) -> tuple[float, ...]:
        v: MixtureState = state.value
        row = tuple(v.w) + tuple(v.mu) + tuple(v.sigma2)
        if include_allocations:
            row = row + tuple(float(label) for label in v.z)
        return row

    return TargetFamily(
        name="galaxy-mixture",
        energy=energy,
        log_base=log_base,
        kernel=kernel,
        initial_state=initial,
        trace_columns=columns,
        trace_values=trace_values,
    )
