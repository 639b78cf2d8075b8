"""Batch front-end: tune ladders, estimate curves, run chains, analyze traces.

Every command reads one YAML config and writes its outputs (CSV/JSON plus a
rendered figure) into an output directory.  Primary outputs are
deterministic given (config, seed); wall-clock timings live in a separate
"timings" field and are excluded from that contract.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from tempertune import figures
from tempertune.config import (
    SEED_CHAIN,
    SEED_ESTIMATION,
    SEED_TUNING,
    ConfigError,
    ExperimentConfig,
    build_target,
    explicit_ladder,
    ladder_endpoints,
    load_config,
)
from tempertune.core import TargetFamily, TemperatureLadder, TemperingError
from tempertune.diagnostics import (
    DiagnosticsReport,
    acceptance_rate,
    group_centered_iact,
    integrated_autocorr_time,
)
from tempertune.estimation import (
    EstimatedCurve,
    assemble_curve,
    discrepancy_report,
    estimate_curve,
    level_energies,
)
from tempertune.mixture import N_COMPONENTS
from tempertune.sampler import RunConfig, Trace, run_chain, run_level_chain
from tempertune.targets import WitchsHat
from tempertune.tuning import (
    MeanEnergyCurve,
    TuningResult,
    geometric_ladder,
    ladder_gap,
    ladder_gap_gradient,
    optimize_ladder,
    uniform_ladder,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; remap to the documented 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempertune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("tune", "minimise the ladder gap and report geometric/uniform/tuned side by side"),
        ("estimate-g", "estimate the mean-energy curve on a beta grid"),
        ("sample", "run the tempered-transitions chain and write its trace"),
        ("analyze", "acceptance rate and autocorrelation times for a trace"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="YAML experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default="out", help="output directory (default: ./out)")
        cmd.add_argument("--jobs", type=int, default=1, help="parallel workers where supported")
        cmd.add_argument("--no-figures", action="store_true", help="skip figure rendering")
        if name == "analyze":
            cmd.add_argument("--trace", required=True, help="trace CSV produced by 'sample'")
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# -- curve resolution ---------------------------------------------------------


def _estimate_point_worker(payload) -> np.ndarray:
    config, beta, stream, samples, burn_in = payload
    family = build_target(config)
    return level_energies(family, beta, samples, burn_in, stream)


def _estimate(config: ExperimentConfig, family: TargetFamily, jobs: int) -> EstimatedCurve:
    g = config.g_source
    beta0, beta_n, _ = ladder_endpoints(config)
    burn_in = g.burn_in if g.burn_in is not None else g.samples // 10
    rng = config.rng(SEED_ESTIMATION)
    if jobs <= 1:
        return estimate_curve(family, beta0, beta_n, g.grid, g.samples, burn_in, rng)
    grid = np.linspace(beta_n, beta0, g.grid)
    streams = rng.spawn(g.grid)
    payloads = [(config, grid[k], streams[k], g.samples, burn_in) for k in range(g.grid)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        energies = list(pool.map(_estimate_point_worker, payloads))
    return assemble_curve(grid, energies, g.samples, burn_in)


def _resolve_curve(
    config: ExperimentConfig, family: TargetFamily, jobs: int
) -> tuple[MeanEnergyCurve, Optional[EstimatedCurve], float]:
    """Mean-energy curve per the g_source section, with the time it took."""
    g = config.g_source
    beta0, beta_n, _ = ladder_endpoints(config)
    if g is None or g.kind == "analytic":
        if family.analytic_g is None:
            raise ConfigError(f"target {family.name} has no analytic curve; use an estimate g_source")
        return MeanEnergyCurve.from_analytic(family.analytic_g, (beta_n, beta0)), None, 0.0
    if g.kind == "curve-file":
        start = time.perf_counter()
        curve = EstimatedCurve.read_csv(g.path)
        return curve.interpolate(), curve, time.perf_counter() - start
    start = time.perf_counter()
    curve = _estimate(config, family, jobs)
    return curve.interpolate(), curve, time.perf_counter() - start


def _resolve_ladder(
    config: ExperimentConfig, family: TargetFamily, jobs: int
) -> tuple[TemperatureLadder, Optional[TuningResult], float, float]:
    """Ladder per the config mode; returns (ladder, tuning, estimate_s, tune_s)."""
    mode = config.ladder.mode
    if mode == "explicit":
        return explicit_ladder(config), None, 0.0, 0.0
    beta0, beta_n, n = ladder_endpoints(config)
    if mode == "geometric":
        return geometric_ladder(beta0, beta_n, n), None, 0.0, 0.0
    if mode == "uniform":
        return uniform_ladder(beta0, beta_n, n), None, 0.0, 0.0
    curve, _, estimate_seconds = _resolve_curve(config, family, jobs)
    starts = _tuning_starts(config, beta0, beta_n, n)
    start = time.perf_counter()
    result = optimize_ladder(curve, beta0, beta_n, n, starts=starts)
    return result.ladder, result, estimate_seconds, time.perf_counter() - start


def _tuning_starts(config: ExperimentConfig, beta0: float, beta_n: float, n: int) -> list:
    starts: list = ["geometric", "uniform"]
    extra = config.ladder.extra_random_starts
    if extra > 0:
        rng = config.rng(SEED_TUNING)
        for k in range(extra):
            cuts = np.sort(rng.random(n - 1))[::-1]
            betas = np.concatenate([[beta0], beta_n + (beta0 - beta_n) * cuts, [beta_n]])
            starts.append((f"random-{k}", TemperatureLadder(betas)))
    return starts


# -- commands -----------------------------------------------------------------


def cmd_tune(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    family = build_target(config)
    beta0, beta_n, n = ladder_endpoints(config)
    curve, estimated, estimate_seconds = _resolve_curve(config, family, args.jobs)

    ladders: dict[str, TemperatureLadder] = {}
    if beta_n > 0:
        ladders["geometric"] = geometric_ladder(beta0, beta_n, n)
    ladders["uniform"] = uniform_ladder(beta0, beta_n, n)

    tune_seconds = 0.0
    if config.ladder.mode == "explicit":
        ladder = explicit_ladder(config)
        label = "explicit"
        result = None
    elif config.ladder.mode == "tuned":
        start = time.perf_counter()
        result = optimize_ladder(curve, beta0, beta_n, n, starts=_tuning_starts(config, beta0, beta_n, n))
        tune_seconds = time.perf_counter() - start
        ladder = result.ladder
        label = "tuned"
    else:
        ladder = ladders[config.ladder.mode]
        label = config.ladder.mode
        result = None
    ladders[label] = ladder

    gaps = {name: ladder_gap(lad, curve) for name, lad in ladders.items()}
    width = max(len(name) for name in gaps)
    print("ladder gap (expected log-rejection) by spacing:")
    for name in ("geometric", "uniform", label):
        if name in gaps:
            print(f"  {name:<{width}}  {_fmt(gaps[name])}")

    if result is None:
        grad = ladder_gap_gradient(ladder, curve) if ladder.n >= 2 else np.zeros(0)
        payload = {
            "beta": [float(b) for b in ladder.betas],
            "s_n": gaps[label],
            "gradient_norm": float(np.linalg.norm(grad)),
            "converged": True,
            "starts": [],
        }
    else:
        payload = result.to_json_dict()
    payload["comparison"] = {name: gaps[name] for name in sorted(gaps)}
    payload["timings"] = {"estimate_seconds": estimate_seconds, "tune_seconds": tune_seconds}
    _write_json(out / "tuning.json", payload)

    if not args.no_figures:
        figures.save_ladder_figure(curve, ladders, out / "ladders.png")
    print(f"wrote {out / 'tuning.json'}")
    return 0


def cmd_estimate_g(args) -> int:
    config = _load(args)
    if config.g_source is None or config.g_source.kind != "estimate":
        raise ConfigError("estimate-g requires a g_source section with kind: estimate")
    out = _out_dir(args)
    family = build_target(config)
    start = time.perf_counter()
    curve = _estimate(config, family, args.jobs)
    elapsed = time.perf_counter() - start
    curve.write_csv(out / "gcurve.csv")
    report = discrepancy_report(curve)
    payload = report.to_json_dict()
    payload["timings"] = {"estimate_seconds": elapsed}
    _write_json(out / "discrepancy.json", payload)
    if report.any_flagged:
        flagged = [p["beta"] for p in payload["points"] if p["flagged"]]
        print(f"direct/importance discrepancy above {report.threshold:g} at beta = {flagged}")
    if not args.no_figures:
        figures.save_curve_figure(curve, out / "gcurve.png")
    print(f"wrote {out / 'gcurve.csv'}")
    return 0


def cmd_sample(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    family = build_target(config)
    run = config.run
    rng = config.rng(SEED_CHAIN)

    if run.vanilla:
        beta0, _, _ = ladder_endpoints(config)
        start = time.perf_counter()
        trace = run_level_chain(family, beta0, run.iterations, run.burn_in, run.thinning, rng)
        sampling_seconds = time.perf_counter() - start
        trace.write_csv(out / "trace.csv")
        summary = {
            "mode": "vanilla",
            "iterations": run.iterations,
            "trace_length": len(trace),
            "timings": {"sampling_seconds": sampling_seconds},
        }
    else:
        ladder, tuning, estimate_seconds, tune_seconds = _resolve_ladder(config, family, args.jobs)
        chain = run_chain(
            family,
            RunConfig(
                ladder=ladder,
                iterations=run.iterations,
                burn_in=run.burn_in,
                base_moves_per_temper=run.base_moves,
                seed=config.seed,
                trace_thinning=run.thinning,
                keep_sweep_details=False,
            ),
            rng,
        )
        chain.trace.write_csv(out / "trace.csv")
        summary = chain.summary_dict()
        summary["mode"] = config.ladder.mode
        summary["beta"] = [float(b) for b in ladder.betas]
        if tuning is not None:
            summary["tuning"] = tuning.to_json_dict()
        summary["timings"].update(
            {"estimate_seconds": estimate_seconds, "tune_seconds": tune_seconds}
        )
        print(f"acceptance rate {chain.acceptance_rate:.6g} over {run.iterations} sweeps")
    _write_json(out / "summary.json", summary)
    if not args.no_figures:
        columns = [c for c in family.trace_columns if not c.startswith("z_")][:6]
        figures.save_trace_figure(Trace.read_csv(out / "trace.csv"), columns, out / "trace.png")
    print(f"wrote {out / 'trace.csv'}")
    return 0


def _analyze_report(config: ExperimentConfig, trace: Trace) -> DiagnosticsReport:
    kind = config.target.kind
    rate = acceptance_rate(trace.columns["accepted"].astype(bool)) if "accepted" in trace.columns else None
    iact: dict[str, list] = {}
    if kind == "witch-hat":
        params = WitchsHat(a=config.target.a, b=config.target.b)
        iact["x"] = [integrated_autocorr_time(trace.columns["x"], center=params.theoretical_mean())]
    elif kind == "mixture":
        for group in ("w", "mu", "sigma2"):
            series = [trace.columns[f"{group}_{j + 1}"] for j in range(N_COMPONENTS)]
            iact[group] = group_centered_iact(series)
            iact[f"{group}_chainwise"] = [integrated_autocorr_time(s) for s in series]
    else:
        for name, series in trace.columns.items():
            if name.startswith("x_"):
                iact[name] = [integrated_autocorr_time(series)]
    return DiagnosticsReport(
        acceptance_rate=rate,
        iact=iact,
        run_metadata={"seed": config.seed, "trace_length": len(trace), "target": kind},
    )


def cmd_analyze(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    try:
        trace = Trace.read_csv(args.trace)
    except OSError as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc}") from exc
    report = _analyze_report(config, trace)
    _write_json(out / "report.json", report.to_json_dict())
    with open(out / "report.csv", "w") as fh:
        for row in report.to_csv_rows():
            fh.write(",".join(str(v) for v in row) + "\n")
    if report.acceptance_rate is not None:
        print(f"acceptance rate {report.acceptance_rate:.6g}")
    for group, estimates in sorted(report.iact.items()):
        taus = ", ".join(
            _fmt(e.tau) + ("" if e.reliable else " (unreliable)") + (" [degenerate]" if e.degenerate else "")
            for e in estimates
        )
        print(f"tau[{group}]: {taus}")
    if not args.no_figures:
        figures.save_iact_figure(report, out / "iact.png")
    print(f"wrote {out / 'report.json'}")
    return 0


_COMMANDS = {
    "tune": cmd_tune,
    "estimate-g": cmd_estimate_g,
    "sample": cmd_sample,
    "analyze": cmd_analyze,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TemperingError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
