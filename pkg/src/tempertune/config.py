"""Experiment configuration: YAML schema, validation, and target wiring.

One config file describes a full experiment: the target, the ladder
endpoints and spacing mode, where the mean-energy curve comes from, and the
run settings.  Random streams are derived from the root seed per purpose
(curve estimation, chain, tuning starts) so that, for example, changing the
estimation grid never perturbs the chain stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from tempertune.core import TargetFamily, TemperatureLadder
from tempertune.mixture import MixturePriors, load_galaxy_data, mixture_family
from tempertune.targets import Gaussian, WitchsHat

# purpose indices for seed derivation
SEED_ESTIMATION = 1
SEED_CHAIN = 2
SEED_TUNING = 3

LADDER_MODES = ("geometric", "uniform", "tuned", "explicit")
G_SOURCE_KINDS = ("analytic", "estimate", "curve-file")
TARGET_KINDS = ("witch-hat", "gaussian", "mixture")


class ConfigError(ValueError):
    """A usage or configuration error (CLI exit code 1)."""


@dataclass(frozen=True)
class TargetConfig:
    kind: str
    a: Optional[float] = None
    b: Optional[float] = None
    d: Optional[int] = None
    data: Optional[str] = None
    mean_prior_variance: float = 1000.0
    variance_prior_shape: float = 1.0
    variance_prior_rate: float = 1.0
    include_allocations: bool = False


@dataclass(frozen=True)
class LadderConfig:
    beta0: float = 1.0
    betan: float = 1.0 / 16.0
    n: int = 4
    mode: str = "geometric"
    betas: Optional[tuple[float, ...]] = None
    extra_random_starts: int = 0


@dataclass(frozen=True)
class GSourceConfig:
    kind: str = "analytic"
    grid: int = 20
    samples: int = 10_000
    burn_in: Optional[int] = None
    path: Optional[str] = None


@dataclass(frozen=True)
class RunSettings:
    iterations: int = 10_000
    burn_in: int = 1_000
    base_moves: int = 1
    thinning: int = 1
    vanilla: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetConfig
    ladder: LadderConfig = LadderConfig()
    g_source: Optional[GSourceConfig] = None
    run: RunSettings = RunSettings()
    seed: int = 0

    def rng(self, purpose: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([int(self.seed), int(purpose)]))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(self.target, self.ladder, self.g_source, self.run, int(seed))


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping, got {type(value).__name__}")
    return value


def _coerce(name: str, value, target_type):
    # YAML 1.1 parses unsigned exponents like 9.5e3 as strings; be lenient
    try:
        if target_type is float:
            return float(value)
        if target_type is int:
            f = float(value)
            if f != int(f):
                raise ValueError(f"{value!r} is not an integer")
            return int(f)
        if target_type is bool:
            if isinstance(value, bool):
                return value
            raise ValueError(f"{value!r} is not a boolean")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc
    return value


_FIELD_TYPES = {
    float: {"a", "b", "beta0", "betan", "mean_prior_variance", "variance_prior_shape", "variance_prior_rate"},
    int: {"d", "n", "extra_random_starts", "grid", "samples", "burn_in", "iterations", "base_moves", "thinning"},
    bool: {"include_allocations", "vanilla"},
}


def _build(cls, section: dict, name: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    section = dict(section)
    for target_type, fields in _FIELD_TYPES.items():
        for key in fields & set(section):
            if section[key] is not None:
                section[key] = _coerce(f"{name}.{key}", section[key], target_type)
    if "betas" in section and section["betas"] is not None:
        try:
            section["betas"] = tuple(float(b) for b in section["betas"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {name}.betas: {exc}") from exc
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"bad section {name!r}: {exc}") from exc


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if "target" not in raw:
        raise ConfigError("config requires a 'target' section")
    target = _build(TargetConfig, _section(raw, "target"), "target")
    ladder = _build(LadderConfig, _section(raw, "ladder"), "ladder")
    g_source = _build(GSourceConfig, _section(raw, "g_source"), "g_source") if raw.get("g_source") else None
    run = _build(RunSettings, _section(raw, "run"), "run")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    config = ExperimentConfig(target=target, ladder=ladder, g_source=g_source, run=run, seed=seed)
    validate_config(config)
    return config


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(raw or {})


def validate_config(config: ExperimentConfig) -> None:
    t, lad, g, run = config.target, config.ladder, config.g_source, config.run
    if t.kind not in TARGET_KINDS:
        raise ConfigError(f"target.kind must be one of {TARGET_KINDS}, got {t.kind!r}")
    if t.kind == "witch-hat":
        if t.a is None or t.b is None:
            raise ConfigError("witch-hat target requires 'a' and 'b'")
        if not 0.0 < t.a < 1.0 or t.b < 0.0:
            raise ConfigError(f"witch-hat requires 0 < a < 1 and b >= 0, got a={t.a}, b={t.b}")
    if t.kind == "gaussian" and (t.d is None or t.d < 1):
        raise ConfigError("gaussian target requires a positive dimension 'd'")
    if lad.mode not in LADDER_MODES:
        raise ConfigError(f"ladder.mode must be one of {LADDER_MODES}, got {lad.mode!r}")
    if lad.mode == "explicit":
        if not lad.betas:
            raise ConfigError("explicit ladder mode requires 'betas'")
    else:
        if not lad.beta0 > lad.betan >= 0:
            raise ConfigError(f"need beta0 > betan >= 0, got ({lad.beta0}, {lad.betan})")
        if lad.n < 1:
            raise ConfigError(f"ladder.n must be >= 1, got {lad.n}")
    if lad.mode == "tuned":
        if g is None:
            raise ConfigError("tuned ladder mode requires a g_source section")
        if lad.n < 2:
            raise ConfigError("tuned ladder mode requires n >= 2")
    if g is not None:
        if g.kind not in G_SOURCE_KINDS:
            raise ConfigError(f"g_source.kind must be one of {G_SOURCE_KINDS}, got {g.kind!r}")
        if g.kind == "analytic" and t.kind == "mixture":
            raise ConfigError("analytic g_source requires an analytic target (witch-hat or gaussian)")
        if g.kind == "estimate":
            if g.grid < 2:
                raise ConfigError(f"g_source.grid must be >= 2, got {g.grid}")
            burn = g.burn_in if g.burn_in is not None else g.samples // 10
            if not g.samples > burn >= 0:
                raise ConfigError(f"need g_source.samples > burn_in >= 0, got ({g.samples}, {burn})")
        if g.kind == "curve-file" and not g.path:
            raise ConfigError("curve-file g_source requires 'path'")
    if not run.vanilla:
        if not run.iterations > run.burn_in >= 0:
            raise ConfigError(f"need run.iterations > run.burn_in >= 0, got ({run.iterations}, {run.burn_in})")
    elif run.iterations <= run.burn_in:
        raise ConfigError("vanilla run needs iterations > burn_in")
    if run.base_moves < 0 or run.thinning < 1:
        raise ConfigError("need run.base_moves >= 0 and run.thinning >= 1")


def build_target(config: ExperimentConfig) -> TargetFamily:
    t = config.target
    if t.kind == "witch-hat":
        return WitchsHat(a=t.a, b=t.b).family()
    if t.kind == "gaussian":
        return Gaussian(d=t.d).family()
    data = load_galaxy_data(t.data) if t.data else load_galaxy_data()
    priors = MixturePriors(
        mean_variance=t.mean_prior_variance,
        variance_shape=t.variance_prior_shape,
        variance_rate=t.variance_prior_rate,
    )
    return mixture_family(data, priors, include_allocations=t.include_allocations)


def ladder_endpoints(config: ExperimentConfig) -> tuple[float, float, int]:
    lad = config.ladder
    if lad.mode == "explicit":
        betas = np.asarray(lad.betas, dtype=float)
        return float(betas[0]), float(betas[-1]), len(betas) - 1
    return lad.beta0, lad.betan, lad.n


def explicit_ladder(config: ExperimentConfig) -> TemperatureLadder:
    return TemperatureLadder(np.asarray(config.ladder.betas, dtype=float)).require_valid()
