"""Figure rendering for the CLI report paths.

Every command that writes delimited output also renders a small matplotlib
figure next to it (disable with --no-figures).  The library modules stay
plot-free; everything here consumes the same data that goes into the CSV
and JSON files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt

from tempertune.diagnostics import DiagnosticsReport
from tempertune.estimation import EstimatedCurve
from tempertune.sampler import Trace
from tempertune.tuning import MeanEnergyCurve, TemperatureLadder


def save_curve_figure(curve: EstimatedCurve, path) -> None:
    """Direct vs importance estimates of g and g' over the beta grid."""
    fig, (ax_g, ax_gp) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    for ax, direct, imp, avg, label in (
        (ax_g, curve.g_direct, curve.g_importance, curve.g_avg, "g"),
        (ax_gp, curve.gp_direct, curve.gp_importance, curve.gp_avg, "g'"),
    ):
        ax.plot(curve.grid, avg, "k-", lw=1, label="average")
        ax.plot(curve.grid, direct, "o", color="tab:red", ms=4, label="direct")
        mask = ~np.isnan(imp)
        ax.plot(curve.grid[mask], imp[mask], "^", color="tab:blue", ms=4, label="importance")
        ax.set_xlabel(r"$\beta$")
        ax.set_ylabel(label)
    ax_g.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ladder_figure(curve: MeanEnergyCurve, ladders: dict[str, TemperatureLadder], path) -> None:
    """The mean-energy curve with the step functions each ladder induces."""
    lo, hi = curve.domain
    beta_grid = np.linspace(lo, hi, 400)
    g_grid = curve.g(beta_grid)
    n_panels = max(len(ladders), 1)
    fig, axes = plt.subplots(1, n_panels, figsize=(4.5 * n_panels, 4.0), squeeze=False)
    for ax, (label, ladder) in zip(axes[0], ladders.items()):
        betas = ladder.betas
        g_nodes = curve.g(betas)
        ax.plot(beta_grid, g_grid, "k-", lw=1.2)
        # step functions evaluated at the left and right interval ends
        ax.step(betas, g_nodes, where="post", color="tab:red", lw=1, alpha=0.8)
        ax.step(betas, g_nodes, where="pre", color="tab:blue", lw=1, alpha=0.8)
        for b in betas:
            ax.axvline(b, color="0.8", lw=0.5, zorder=0)
        ax.set_title(label, fontsize=10)
        ax.set_xlabel(r"$\beta$")
        ax.set_ylabel("g")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trace_figure(trace: Trace, columns: list[str], path) -> None:
    """Trace plots and histograms for the chosen state columns."""
    columns = [c for c in columns if c in trace.columns]
    if not columns:
        return
    iters = trace.columns.get("iteration", np.arange(len(trace)))
    fig, axes = plt.subplots(len(columns), 2, figsize=(9.0, 2.2 * len(columns)), squeeze=False)
    for row, name in enumerate(columns):
        series = trace.columns[name]
        axes[row][0].plot(iters, series, lw=0.4)
        axes[row][0].set_ylabel(name)
        axes[row][1].hist(series, bins=60, color="0.4")
    axes[-1][0].set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_iact_figure(report: DiagnosticsReport, path) -> None:
    """Bar chart of tau per parameter group; unreliable estimates hatched."""
    labels: list[str] = []
    taus: list[float] = []
    hatches: list[str] = []
    for group, estimates in sorted(report.iact.items()):
        for chain_index, e in enumerate(estimates):
            labels.append(f"{group}[{chain_index}]" if len(estimates) > 1 else group)
            taus.append(e.tau)
            hatches.append("" if e.reliable else "//")
    if not taus:
        return
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(taus) + 2), 4.0))
    bars = ax.bar(range(len(taus)), taus, color="tab:blue")
    for bar, hatch in zip(bars, hatches):
        bar.set_hatch(hatch)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel(r"integrated autocorrelation time $\tau$")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
