"""Grid estimation of the mean-energy curve for intractable targets.

For each point on a uniform beta grid, a chain targeting that level produces
energies h(x); the curve g(beta) = E_beta[h] is estimated directly as their
mean and its derivative as minus their variance.  Each point (except the
flattest) is estimated a second time by importance-reweighting the retained
sample of the next smaller grid value, with self-normalised weights
proportional to exp(-(beta - beta_src) h).  The two estimates are averaged;
a large relative gap between them is the warning sign that neither can be
trusted.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from tempertune.core import TargetFamily, TemperingError
from tempertune.tuning import MeanEnergyCurve

logger = logging.getLogger(__name__)

#: importance estimates with fewer effective samples than this are discarded
ESS_FLOOR = 10.0

#: default relative-gap threshold for flagging direct/importance disagreement
DISCREPANCY_THRESHOLD = 0.2


@dataclass(frozen=True)
class EstimatedCurve:
    """Tabulated estimates of g and g' on an increasing beta grid.

    ``g_importance``, ``gp_importance`` and ``ess`` are NaN where no usable
    importance estimate exists (always at the first grid point, and wherever
    the effective sample size fell below :data:`ESS_FLOOR`).  ``g_avg`` is
    the mean of the available estimates.
    """

    grid: np.ndarray
    g_direct: np.ndarray
    g_importance: np.ndarray
    g_avg: np.ndarray
    gp_direct: np.ndarray
    gp_importance: np.ndarray
    gp_avg: np.ndarray
    ess: np.ndarray
    sample_count: int
    burn_in: int

    def __post_init__(self) -> None:
        for name in ("grid", "g_direct", "g_importance", "g_avg", "gp_direct", "gp_importance", "gp_avg", "ess"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        lengths = {len(getattr(self, name)) for name in ("grid", "g_direct", "g_importance", "g_avg", "gp_direct", "gp_importance", "gp_avg", "ess")}
        if len(lengths) != 1:
            raise ValueError(f"column lengths differ: {lengths}")

    def interpolate(self) -> MeanEnergyCurve:
        """Piecewise-linear curve through the averaged points.

        g and g' are interpolated independently.  Positive g' averages are
        clipped to 0 (the derivative is minus a variance) and the number of
        clipped points is recorded on the returned curve.
        """
        grid = self.grid
        g_nodes = self.g_avg
        gp_nodes = self.gp_avg.copy()
        clipped = int(np.sum(gp_nodes > 0.0))
        if clipped:
            logger.warning("clipping %d positive g' estimates to 0", clipped)
            gp_nodes = np.minimum(gp_nodes, 0.0)
        domain = (float(grid[0]), float(grid[-1]))
        return MeanEnergyCurve(
            g=lambda beta: np.interp(beta, grid, g_nodes),
            g_prime=lambda beta: np.interp(beta, grid, gp_nodes),
            domain=domain,
            clipped_points=clipped,
        )

    # -- CSV wire format: one row per grid point, missing values empty -----

    CSV_COLUMNS = ("beta", "g_direct", "g_importance", "g_avg", "gp_direct", "gp_importance", "gp_avg", "ess")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for i in range(len(self.grid)):
                row = [
                    self.grid[i], self.g_direct[i], self.g_importance[i], self.g_avg[i],
                    self.gp_direct[i], self.gp_importance[i], self.gp_avg[i], self.ess[i],
                ]
                writer.writerow(["" if isinstance(v, float) and math.isnan(v) else repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path, sample_count: int = 0, burn_in: int = 0) -> "EstimatedCurve":
        columns: dict[str, list[float]] = {name: [] for name in cls.CSV_COLUMNS}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != cls.CSV_COLUMNS:
                raise ValueError(f"curve file {path} has unexpected header {header}")
            for row in reader:
                if len(row) != len(cls.CSV_COLUMNS):
                    raise ValueError(f"curve file {path}: row has {len(row)} fields, expected {len(cls.CSV_COLUMNS)}")
                for name, cell in zip(cls.CSV_COLUMNS, row):
                    columns[name].append(float(cell) if cell != "" else float("nan"))
        return cls(
            grid=np.array(columns["beta"]),
            g_direct=np.array(columns["g_direct"]),
            g_importance=np.array(columns["g_importance"]),
            g_avg=np.array(columns["g_avg"]),
            gp_direct=np.array(columns["gp_direct"]),
            gp_importance=np.array(columns["gp_importance"]),
            gp_avg=np.array(columns["gp_avg"]),
            ess=np.array(columns["ess"]),
            sample_count=sample_count,
            burn_in=burn_in,
        )


@dataclass(frozen=True)
class DiscrepancyReport:
    """Relative direct-vs-importance gaps per grid point.

    ``rel_gap`` is |g_direct - g_importance| / max(|g_avg|, eps), NaN where
    one estimate is unavailable; ``flagged`` marks points whose gap exceeds
    the threshold.
    """

    grid: np.ndarray
    rel_gap: np.ndarray
    flagged: np.ndarray
    threshold: float

    @property
    def any_flagged(self) -> bool:
        return bool(np.any(self.flagged))

    def to_json_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "points": [
                {
                    "beta": float(b),
                    "rel_gap": None if math.isnan(g) else float(g),
                    "flagged": bool(f),
                }
                for b, g, f in zip(self.grid, self.rel_gap, self.flagged)
            ],
        }


def importance_estimate(
    energies: np.ndarray, beta_src: float, beta_target: float
) -> tuple[float, float, float]:
    """Reweight energies sampled at beta_src to estimate g, g' at beta_target.

    Self-normalised weights are proportional to
    exp(-(beta_target - beta_src) h).  Returns ``(g_hat, gp_hat, ess)`` where
    gp uses the population-variance form (so a single-point sample gives 0)
    and ess = 1 / sum of squared normalised weights.
    """
    h = np.asarray(energies, dtype=float)
    if h.size == 0:
        raise ValueError("importance estimate needs a nonempty sample")
    if beta_target < beta_src:
        raise ValueError(
            f"reweighting runs toward colder levels: need beta_target >= beta_src, got {beta_target} < {beta_src}"
        )
    log_w = -(beta_target - beta_src) * h
    log_w -= np.max(log_w)
    w = np.exp(log_w)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise TemperingError("importance weights underflowed or are non-finite")
    w /= total
    g_hat = float(w @ h)
    gp_hat = -(float(w @ (h * h)) - g_hat * g_hat)
    ess = 1.0 / float(w @ w)
    return g_hat, gp_hat, ess


def level_energies(
    family: TargetFamily,
    beta: float,
    samples: int,
    burn_in: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Energies from a chain run at a single level, burn-in discarded."""
    if samples <= burn_in:
        raise ValueError(f"samples ({samples}) must exceed burn_in ({burn_in})")
    state = family.start_state(rng)
    out = np.empty(samples - burn_in)
    kernel = family.kernel
    for t in range(samples):
        state = kernel(beta, state, rng)
        if t >= burn_in:
            out[t - burn_in] = state.energy
    return out


def assemble_curve(
    grid: np.ndarray,
    energies: Sequence[np.ndarray],
    sample_count: int,
    burn_in: int,
) -> EstimatedCurve:
    """Combine per-grid-point energy samples into an estimated curve."""
    m = len(grid)
    g_direct = np.empty(m)
    gp_direct = np.empty(m)
    g_imp = np.full(m, np.nan)
    gp_imp = np.full(m, np.nan)
    ess = np.full(m, np.nan)
    for k in range(m):
        h = energies[k]
        g_direct[k] = h.mean()
        gp_direct[k] = -float(np.var(h))  # population form
        if k > 0:
            g_hat, gp_hat, point_ess = importance_estimate(energies[k - 1], grid[k - 1], grid[k])
            if point_ess >= ESS_FLOOR:
                g_imp[k], gp_imp[k], ess[k] = g_hat, gp_hat, point_ess
            else:
                logger.warning(
                    "importance estimate at beta=%.6g discarded: effective sample size %.2f < %.0f",
                    grid[k], point_ess, ESS_FLOOR,
                )
    have_imp = ~np.isnan(g_imp)
    g_avg = np.where(have_imp, 0.5 * (g_direct + g_imp), g_direct)
    gp_avg = np.where(have_imp, 0.5 * (gp_direct + gp_imp), gp_direct)
    return EstimatedCurve(
        grid=grid,
        g_direct=g_direct,
        g_importance=g_imp,
        g_avg=g_avg,
        gp_direct=gp_direct,
        gp_importance=gp_imp,
        gp_avg=gp_avg,
        ess=ess,
        sample_count=sample_count,
        burn_in=burn_in,
    )


def estimate_curve(
    family: TargetFamily,
    beta0: float,
    beta_n: float,
    grid_size: int = 20,
    samples: int = 10_000,
    burn_in: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> EstimatedCurve:
    """Estimate g and g' on a uniform grid over [beta_n, beta0].

    Each grid point runs its own chain on an independent stream spawned from
    ``rng``, so results do not depend on evaluation order.  ``burn_in``
    defaults to 10% of ``samples``.
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    if not beta0 > beta_n >= 0:
        raise ValueError(f"need beta0 > beta_n >= 0, got ({beta0}, {beta_n})")
    if burn_in is None:
        burn_in = samples // 10
    if rng is None:
        rng = np.random.default_rng()
    grid = np.linspace(beta_n, beta0, grid_size)
    streams = rng.spawn(grid_size)
    energies = [level_energies(family, grid[k], samples, burn_in, streams[k]) for k in range(grid_size)]
    return assemble_curve(grid, energies, samples, burn_in)


def discrepancy_report(curve: EstimatedCurve, threshold: float = DISCREPANCY_THRESHOLD) -> DiscrepancyReport:
    """Relative gap between the direct and importance estimates per point.

    The denominator is floored at 5% of the curve's overall scale so that
    grid points where g is near zero (and both estimates are dominated by
    shot noise) cannot raise false alarms: the report is meant to catch
    disagreements that would be visible against the whole curve.
    """
    scale = float(np.nanmax(np.abs(curve.g_avg)))
    eps = max(0.05 * scale, 1e-12)
    denom = np.maximum(np.abs(curve.g_avg), eps)
    rel_gap = np.abs(curve.g_direct - curve.g_importance) / denom
    flagged = np.where(np.isnan(rel_gap), False, rel_gap > threshold)
    return DiscrepancyReport(grid=curve.grid, rel_gap=rel_gap, flagged=flagged, threshold=threshold)
