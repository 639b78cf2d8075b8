"""Tempered-transitions MCMC with automatic temperature-ladder tuning.

The package is organised around a small set of pieces:

* :mod:`tempertune.core` -- target families p_beta(x) ~ pi(x) exp(-beta h(x)),
  chain states with cached energies, and temperature ladders.
* :mod:`tempertune.targets` -- analytic targets (Witch's Hat, Gaussian) with
  closed-form mean-energy curves and exact per-level samplers.
* :mod:`tempertune.tuning` -- the ladder-gap objective (the expected
  log-rejection of a tempered sweep), its gradient, and constrained
  minimisation over interior inverse temperatures.
* :mod:`tempertune.estimation` -- grid estimation of the mean-energy curve by
  per-level MCMC plus importance reweighting, for intractable targets.
* :mod:`tempertune.sampler` -- the tempered-transitions proposal and chain
  driver.
* :mod:`tempertune.mixture` -- the three-component Gaussian mixture posterior
  for the galaxy data with likelihood-only tempering.
* :mod:`tempertune.diagnostics` -- acceptance rates and integrated
  autocorrelation times, including group-centred estimation.
* :mod:`tempertune.cli` -- batch front-end (tune / estimate-g / sample /
  analyze) driven by a YAML config.
"""

from tempertune.core import (
    AnalyticCurve,
    ChainState,
    TargetFamily,
    TemperatureLadder,
    log_unnorm_density,
    validate_ladder,
)
from tempertune.tuning import (
    MeanEnergyCurve,
    TuningResult,
    gap_upper_bound,
    geometric_ladder,
    ladder_gap,
    ladder_gap_gradient,
    optimize_ladder,
    symmetrized_kl_sum,
    uniform_ladder,
)

__all__ = [
    "AnalyticCurve",
    "ChainState",
    "MeanEnergyCurve",
    "TargetFamily",
    "TemperatureLadder",
    "TuningResult",
    "gap_upper_bound",
    "geometric_ladder",
    "ladder_gap",
    "ladder_gap_gradient",
    "log_unnorm_density",
    "optimize_ladder",
    "symmetrized_kl_sum",
    "uniform_ladder",
    "validate_ladder",
]

__version__ = "0.1.0"
