"""Acceptance-rate and integrated-autocorrelation-time estimation.

The integrated autocorrelation time tau = 1 + 2 sum_k rho_k measures how
many iterations one effectively pays per independent sample.  Truncation
uses the initial-positive-sequence rule on pairwise sums of autocovariances.
Centring matters: with the usual sample-mean centring a chain stuck in one
mode still looks healthy, while centring at a known external value (or at
the grand mean across exchangeable chains) exposes the missing moves as a
squared offset that keeps the autocorrelations from decaying.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

#: tau estimates above (trace length / this divisor) are flagged unreliable
RELIABLE_LENGTH_DIVISOR = 10.0

_MIN_TRACE_LENGTH = 100


@dataclass(frozen=True)
class IactEstimate:
    """One integrated-autocorrelation-time estimate.

    ``reliable`` is False when tau exceeds a tenth of the trace length (the
    estimate has not converged); ``degenerate`` marks zero-variance traces,
    for which tau is defined as 1.
    """

    tau: float
    reliable: bool
    degenerate: bool = False


def autocovariances(trace: np.ndarray, center: float, max_lag: Optional[int] = None) -> np.ndarray:
    """FFT autocovariances of (trace - center), 1/N normalisation."""
    dev = np.asarray(trace, dtype=float) - center
    n = len(dev)
    if max_lag is None:
        max_lag = n - 1
    size = 1
    while size < 2 * n:
        size <<= 1
    f = np.fft.rfft(dev, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[: max_lag + 1]
    return acov / n


def integrated_autocorr_time(
    trace: Sequence[float],
    center: Union[float, None] = None,
) -> IactEstimate:
    """Estimate tau = 1 + 2 sum rho_k with initial-positive-sequence truncation.

    ``center`` fixes the value the autocovariances are computed around;
    ``None`` uses the sample mean.  Lags are accumulated in consecutive
    pairs and summation stops at the first nonpositive pair sum.  The result
    is floored at 1 so that noise (or an antithetic trace) cannot drive the
    estimate below the i.i.d. value.
    """
    x = np.asarray(trace, dtype=float)
    if len(x) < _MIN_TRACE_LENGTH:
        raise ValueError(f"trace too short for tau estimation: {len(x)} < {_MIN_TRACE_LENGTH}")
    sample_mean = float(np.mean(x))
    # degeneracy is intrinsic to the trace, independent of the centring
    if float(np.var(x)) <= 1e-24 * max(1.0, sample_mean * sample_mean):
        return IactEstimate(tau=1.0, reliable=True, degenerate=True)
    c = sample_mean if center is None else float(center)
    acov = autocovariances(x, c)
    var0 = acov[0]
    if var0 <= 1e-300 or not np.isfinite(var0):
        return IactEstimate(tau=1.0, reliable=True, degenerate=True)
    n_pairs = len(acov) // 2
    pair_sums = acov[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    nonpositive = np.nonzero(pair_sums <= 0.0)[0]
    last = int(nonpositive[0]) if len(nonpositive) else n_pairs
    tau = 2.0 * float(np.sum(pair_sums[:last])) / float(var0) - 1.0
    tau = max(tau, 1.0)
    reliable = tau <= len(x) / RELIABLE_LENGTH_DIVISOR
    return IactEstimate(tau=float(tau), reliable=bool(reliable))


def group_centered_iact(traces: Sequence[Sequence[float]]) -> list[IactEstimate]:
    """Per-chain tau with every chain centred at the group's grand mean.

    For exchangeable parameter groups (mixture components under label
    switching) the marginal distributions should coincide; centring each
    chain at the pooled mean makes a non-switching group show up as a huge,
    unreliable tau instead of hiding behind per-chain means.
    """
    arrays = [np.asarray(t, dtype=float) for t in traces]
    if len({len(a) for a in arrays}) != 1:
        raise ValueError("group traces must have equal lengths")
    grand_mean = float(np.mean(np.stack(arrays)))
    return [integrated_autocorr_time(a, center=grand_mean) for a in arrays]


def acceptance_rate(records: Iterable) -> float:
    """Fraction of accepted sweeps; accepts records or a boolean vector."""
    if isinstance(records, np.ndarray):
        flags = records.astype(bool)
    else:
        flags = np.array([r.accepted if hasattr(r, "accepted") else bool(r) for r in records], dtype=bool)
    if flags.size == 0:
        raise ValueError("no sweep records")
    return float(flags.mean())


def batch_means_standard_error(trace: Sequence[float], n_batches: int = 50) -> float:
    """Standard error of the trace mean from batch means.

    Splits the trace into ``n_batches`` equal batches (trailing remainder
    dropped) and returns sd(batch means) / sqrt(n_batches), which absorbs
    autocorrelation at the batch scale.
    """
    x = np.asarray(trace, dtype=float)
    if len(x) < 2 * n_batches:
        raise ValueError(f"trace of length {len(x)} too short for {n_batches} batches")
    batch_size = len(x) // n_batches
    batches = x[: n_batches * batch_size].reshape(n_batches, batch_size)
    means = batches.mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


@dataclass
class DiagnosticsReport:
    """Acceptance rate plus per-group tau estimates and metadata."""

    acceptance_rate: Optional[float]
    iact: dict[str, list[IactEstimate]]
    run_metadata: dict = field(default_factory=dict)

    @property
    def convergence_flags(self) -> dict[str, list[bool]]:
        return {group: [e.reliable for e in estimates] for group, estimates in self.iact.items()}

    def to_json_dict(self) -> dict:
        return {
            "acceptance_rate": None if self.acceptance_rate is None else float(self.acceptance_rate),
            "iact": {
                group: [
                    {"tau": float(e.tau), "reliable": bool(e.reliable), "degenerate": bool(e.degenerate)}
                    for e in estimates
                ]
                for group, estimates in self.iact.items()
            },
            "run_metadata": self.run_metadata,
        }

    def to_csv_rows(self) -> list[tuple]:
        rows = [("group", "chain", "tau", "reliable")]
        for group, estimates in sorted(self.iact.items()):
            for chain_index, e in enumerate(estimates):
                rows.append((group, chain_index, repr(e.tau), int(e.reliable)))
        return rows
