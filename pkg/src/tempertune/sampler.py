"""The tempered-transitions proposal and chain driver.

One proposal sweeps the chain up the ladder (one kernel application per
level, flattest last) and back down, recording 2n energies: h of the state
*before* each heating move and h of the state *after* each cooling move.
Those energies form the weighted sums

    F  = sum_i (beta_i - beta_{i+1}) h(x_i)        (heating half)
    F' = sum_i (beta_i - beta_{i+1}) h(x'_i)       (cooling half)

and the endpoint is accepted with probability min{1, exp(-(F' - F))}.  The
energy recording points are the most error-prone part of the algorithm and
are pinned down by tests against a deterministic kernel.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from tempertune.core import ChainState, TargetFamily, TemperatureLadder, TemperingError


@dataclass(slots=True)
class SweepRecord:
    """Energies and outcome of one tempered proposal.

    ``down_energies`` is order-normalised so that index i holds h(x'_i), the
    energy after the cooling move at level i+1 (the reverse of generation
    order).  In lean runs the energy arrays and endpoint are dropped to keep
    memory flat; F, F' and the outcome are always present.
    """

    F: float
    F_prime: float
    accepted: bool = False
    failed: bool = False
    up_energies: Optional[np.ndarray] = None
    down_energies: Optional[np.ndarray] = None
    proposal_endpoint: Optional[ChainState] = None


@dataclass(frozen=True)
class RunConfig:
    """Settings for one tempered-transitions run."""

    ladder: TemperatureLadder
    iterations: int
    burn_in: int = 0
    base_moves_per_temper: int = 1
    seed: int = 0
    trace_thinning: int = 1
    keep_sweep_details: bool = True

    def __post_init__(self) -> None:
        self.ladder.require_valid()
        if not self.iterations > self.burn_in >= 0:
            raise ValueError(f"need iterations > burn_in >= 0, got ({self.iterations}, {self.burn_in})")
        if self.base_moves_per_temper < 0:
            raise ValueError(f"base_moves_per_temper must be >= 0, got {self.base_moves_per_temper}")
        if self.trace_thinning < 1:
            raise ValueError(f"trace_thinning must be >= 1, got {self.trace_thinning}")


@dataclass
class Trace:
    """Column-oriented chain trace; column order is the CSV column order."""

    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        first = next(iter(self.columns.values()), np.empty(0))
        return len(first)

    def write_csv(self, path) -> None:
        names = list(self.columns)
        arrays = [self.columns[name] for name in names]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for i in range(len(self)):
                row = []
                for arr in arrays:
                    v = arr[i]
                    if isinstance(v, (np.bool_, bool)):
                        row.append(int(v))
                    elif isinstance(v, (np.integer, int)):
                        row.append(int(v))
                    else:
                        row.append(repr(float(v)))
                writer.writerow(row)

    @classmethod
    def read_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise ValueError(f"trace file {path} is empty")
            cells: list[list[float]] = [[] for _ in header]
            for row_index, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise ValueError(f"trace file {path}: row {row_index} has {len(row)} fields, expected {len(header)}")
                for j, cell in enumerate(row):
                    try:
                        cells[j].append(float(cell))
                    except ValueError as exc:
                        raise ValueError(f"trace file {path}: row {row_index}, column {header[j]!r}: {cell!r}") from exc
        return cls(columns={name: np.array(col) for name, col in zip(header, cells)})


@dataclass
class ChainRun:
    """Everything a tempered run produces."""

    trace: Trace
    records: list[SweepRecord]
    accepted: np.ndarray
    F: np.ndarray
    F_prime: np.ndarray
    failures: int
    wall_time: float

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def summary_dict(self) -> dict:
        return {
            "iterations": int(len(self.accepted)),
            "accepted": int(self.accepted.sum()),
            "acceptance_rate": self.acceptance_rate,
            "sweep_failures": int(self.failures),
            "timings": {"sampling_seconds": self.wall_time},
        }


def acceptance_probability(F: float, F_prime: float) -> float:
    """min{1, exp(-(F' - F))}, safe against overflow for any finite inputs."""
    if math.isnan(F) or math.isnan(F_prime):
        raise ValueError(f"F and F' must not be NaN, got ({F}, {F_prime})")
    diff = F_prime - F
    if diff <= 0.0:
        return 1.0
    return math.exp(-diff)  # underflows to 0.0 for very unfavourable sweeps


def tempered_sweep(
    state: ChainState,
    ladder: TemperatureLadder,
    family: TargetFamily,
    rng: np.random.Generator,
    keep_details: bool = True,
) -> SweepRecord:
    """Run one up/down sweep from ``state`` and score it.

    Heating applies the level kernels at beta_1..beta_n, recording the energy
    of the state *before* each move; cooling applies them at beta_n..beta_1,
    recording the energy *after* each move.  A kernel that produces a
    non-finite energy aborts the sweep, which is then scored as a certain
    rejection and flagged.
    """
    betas = ladder.betas
    n = len(betas) - 1
    up = np.empty(n)
    down = np.empty(n)
    kernel = family.kernel
    x = state
    F = 0.0
    F_prime = 0.0
    try:
        for i in range(n):
            up[i] = x.energy  # h(x_i) before the move targeting beta_{i+1}
            F += (betas[i] - betas[i + 1]) * x.energy
            x = kernel(betas[i + 1], x, rng)
            if not math.isfinite(x.energy):
                raise FloatingPointError
        for i in range(n - 1, -1, -1):
            x = kernel(betas[i + 1], x, rng)
            if not math.isfinite(x.energy):
                raise FloatingPointError
            down[i] = x.energy  # h(x'_i) after the move targeting beta_{i+1}
            F_prime += (betas[i] - betas[i + 1]) * x.energy
    except (FloatingPointError, TemperingError):
        return SweepRecord(F=F, F_prime=math.inf, failed=True, proposal_endpoint=None)
    if keep_details:
        return SweepRecord(F=F, F_prime=F_prime, up_energies=up, down_energies=down, proposal_endpoint=x)
    record = SweepRecord(F=F, F_prime=F_prime)
    record.proposal_endpoint = x  # consumed and dropped by the driver
    return record


def run_chain(
    family: TargetFamily,
    config: RunConfig,
    rng: Optional[np.random.Generator] = None,
) -> ChainRun:
    """Drive a chain: base-level moves, one tempered sweep, accept/reject.

    Each iteration performs ``base_moves_per_temper`` kernel applications at
    the target temperature followed by one tempered sweep, accepted using a
    single uniform deviate.  The trace stores thinned post-burn-in states.
    Two runs with the same config and rng seed produce identical output.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    ladder = config.ladder
    beta0 = ladder.beta0
    keep = config.keep_sweep_details

    state = family.start_state(rng)
    iterations = config.iterations
    accepted = np.zeros(iterations, dtype=bool)
    F = np.empty(iterations)
    F_prime = np.empty(iterations)
    records: list[SweepRecord] = []
    failures = 0

    trace_rows = []
    trace_iters = []
    trace_meta_rows = []  # (accepted, F, F')

    start_time = time.perf_counter()
    for it in range(iterations):
        for _ in range(config.base_moves_per_temper):
            state = family.kernel(beta0, state, rng)
        record = tempered_sweep(state, ladder, family, rng, keep_details=keep)
        u = rng.random()
        if record.failed:
            failures += 1
        else:
            if u < acceptance_probability(record.F, record.F_prime):
                record.accepted = True
                state = record.proposal_endpoint
        if not keep:
            record.proposal_endpoint = None
        accepted[it] = record.accepted
        F[it] = record.F
        F_prime[it] = record.F_prime
        if keep:
            records.append(record)
        if it >= config.burn_in and (it - config.burn_in) % config.trace_thinning == 0:
            trace_iters.append(it)
            trace_meta_rows.append((record.accepted, record.F, record.F_prime))
            trace_rows.append(family.trace_row(state))
    wall = time.perf_counter() - start_time

    columns: dict[str, np.ndarray] = {
        "iteration": np.array(trace_iters, dtype=int),
        "accepted": np.array([m[0] for m in trace_meta_rows], dtype=bool),
        "F": np.array([m[1] for m in trace_meta_rows]),
        "F_prime": np.array([m[2] for m in trace_meta_rows]),
    }
    state_matrix = np.array(trace_rows) if trace_rows else np.empty((0, len(family.trace_columns)))
    for j, name in enumerate(family.trace_columns):
        columns[name] = state_matrix[:, j]
    return ChainRun(
        trace=Trace(columns),
        records=records,
        accepted=accepted,
        F=F,
        F_prime=F_prime,
        failures=failures,
        wall_time=wall,
    )


def run_level_chain(
    family: TargetFamily,
    beta: float,
    iterations: int,
    burn_in: int = 0,
    thinning: int = 1,
    rng: Optional[np.random.Generator] = None,
) -> Trace:
    """Plain single-level chain at fixed beta (no tempering moves).

    Used for curve estimation internals and as the no-tempering baseline;
    the trace carries only the iteration index and the state columns.
    """
    if not iterations > burn_in >= 0:
        raise ValueError(f"need iterations > burn_in >= 0, got ({iterations}, {burn_in})")
    if rng is None:
        rng = np.random.default_rng()
    state = family.start_state(rng)
    rows = []
    iters = []
    for it in range(iterations):
        state = family.kernel(beta, state, rng)
        if it >= burn_in and (it - burn_in) % thinning == 0:
            iters.append(it)
            rows.append(family.trace_row(state))
    columns: dict[str, np.ndarray] = {"iteration": np.array(iters, dtype=int)}
    matrix = np.array(rows)
    for j, name in enumerate(family.trace_columns):
        columns[name] = matrix[:, j]
    return Trace(columns)
