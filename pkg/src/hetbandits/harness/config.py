"""Experiment configuration, seeding and the built-in presets.

Config files are JSON objects whose keys are the ``ExperimentConfig`` fields;
``generation`` is a nested object with ``GenerationSpec`` fields. Unknown keys
are rejected.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..env import (
    GenerationSpec,
    Instance,
    constant_delay_matrix,
    generate_instance,
    uniform_delay_matrix,
)
from ..policies import inverse_round
from .simulate import ALGORITHMS

DELAY_MODES = ("instance", "constant", "matrix", "uniform")
DELTA_SCHEDULES = ("inverse_t", "constant")

# stream tags mixed into every SeedSequence so the different random needs
# of a trial never share entropy
_INSTANCE, _REWARDS, _DELAYS = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    generation: GenerationSpec | None = None
    instance_file: str | None = None
    algorithms: tuple[str, ...] = ALGORITHMS
    horizon: int = 30000
    trials: int = 10
    seed: int = 0
    alpha: float = 2.5
    delta_schedule: str = "inverse_t"
    delta_value: float = 0.01
    delay_mode: str = "instance"
    delay_value: float = 0
    delay_file: str | None = None
    out_dir: str = "results"
    stride: int = 100
    keep_message_log: bool = False
    engine: str = "fast"

    def __post_init__(self):
        if isinstance(self.generation, dict):
            object.__setattr__(self, "generation", GenerationSpec.from_dict(self.generation))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        self.validate()

    def validate(self) -> None:
        if (self.generation is None) == (self.instance_file is None):
            raise ConfigError("give exactly one of 'generation' or 'instance_file'")
        if not self.algorithms:
            raise ConfigError("algorithm list is empty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.alpha <= 2:
            raise ConfigError("alpha must exceed 2")
        if self.stride < 1 or self.horizon % self.stride:
            raise ConfigError(f"stride {self.stride} must divide the horizon {self.horizon}")
        if self.delta_schedule not in DELTA_SCHEDULES:
            raise ConfigError(f"delta_schedule must be one of {DELTA_SCHEDULES}")
        if self.delta_schedule == "constant" and not 0 < self.delta_value <= 1:
            raise ConfigError("constant delta must lie in (0, 1]")
        if self.delay_mode not in DELAY_MODES:
            raise ConfigError(f"delay_mode must be one of {DELAY_MODES}")
        if self.delay_mode == "matrix" and not self.delay_file:
            raise ConfigError("delay_mode 'matrix' needs delay_file")
        if self.delay_value < 0:
            raise ConfigError("delay_value must be nonnegative")
        if self.engine not in ("fast", "reference"):
            raise ConfigError("engine must be 'fast' or 'reference'")

    def delta(self):
        if self.delta_schedule == "inverse_t":
            return inverse_round
        value = self.delta_value
        return lambda t: value

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["algorithms"] = list(self.algorithms)
        if self.generation is not None:
            d["generation"] = self.generation.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def instance_seed(config: ExperimentConfig) -> list[int]:
    return [config.seed, _INSTANCE]


def reward_seed(config: ExperimentConfig, trial: int) -> list[int]:
    return [config.seed, _REWARDS, trial]


def delay_seed(config: ExperimentConfig, trial: int) -> list[int]:
    return [config.seed, _DELAYS, trial]


def base_instance(config: ExperimentConfig) -> Instance:
    """The fixed instance shared by all trials, before per-trial delays."""
    if config.instance_file:
        inst = Instance.load(config.instance_file)
    else:
        spec = dataclasses.replace(config.generation, horizon=config.horizon)
        inst = generate_instance(spec, instance_seed(config))
    return dataclasses.replace(inst, horizon=config.horizon)


def trial_instance(config: ExperimentConfig, trial: int, base: Instance | None = None) -> Instance:
    inst = base_instance(config) if base is None else base
    M = inst.num_agents
    if config.delay_mode == "constant":
        delays = constant_delay_matrix(M, int(config.delay_value))
    elif config.delay_mode == "matrix":
        rows = [line.split() for line in Path(config.delay_file).read_text().splitlines() if line.strip()]
        delays = [[int(x) for x in r] for r in rows]
    elif config.delay_mode == "uniform":
        rng = np.random.default_rng(delay_seed(config, trial))
        delays = uniform_delay_matrix(M, config.delay_value, rng)
    else:
        return inst
    return dataclasses.replace(inst, delay_matrix=delays)


def preset(name: str, **overrides) -> list[ExperimentConfig]:
    """Desk-scale versions of the three experiments, one config per sweep point."""
    if name == "exp1":
        return [
            ExperimentConfig(
                name=f"exp1_M{m}",
                generation=GenerationSpec(num_arms=20, num_agents=m, set_size=6),
                **overrides,
            )
            for m in (5, 25, 45, 65, 85, 105)
        ]
    if name == "exp2":
        return [
            ExperimentConfig(
                name=f"exp2_size{s}",
                generation=GenerationSpec(
                    num_arms=100, num_agents=10, set_size=s, disjoint=(s * 10 <= 100)
                ),
                **overrides,
            )
            for s in (10, 30, 50, 70, 90, 100)
        ]
    if name == "exp3":
        overrides.setdefault("algorithms", ("CO-AAE", "IND-AAE"))
        return [
            ExperimentConfig(
                name=f"exp3_delay{d}",
                generation=GenerationSpec(num_arms=20, num_agents=10, set_size=6),
                delay_mode="uniform",
                delay_value=d,
                **overrides,
            )
            for d in (0, 1000, 3000, 5000)
        ]
    raise ConfigError(f"unknown preset {name!r}; choose exp1, exp2 or exp3")
