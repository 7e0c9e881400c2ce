"""Problem instances, decision schedules and the Bernoulli reward source.

Arms and agents are 0-indexed throughout. Rounds are 1-indexed: the global
clock runs ``t = 1, ..., horizon`` and agent ``j`` decides at every multiple
of its inter-round gap.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Instance:
    """Immutable description of one cooperative bandit problem."""

    num_arms: int
    num_agents: int
    means: tuple[float, ...]
    local_sets: tuple[tuple[int, ...], ...]
    inter_round_gaps: tuple[int, ...]
    delay_matrix: tuple[tuple[int, ...], ...]
    horizon: int

    def __post_init__(self):
        # normalise containers so equal instances compare and hash equal
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(
            self, "local_sets", tuple(tuple(sorted(int(a) for a in s)) for s in self.local_sets)
        )
        object.__setattr__(self, "inter_round_gaps", tuple(int(w) for w in self.inter_round_gaps))
        object.__setattr__(
            self, "delay_matrix", tuple(tuple(int(d) for d in row) for row in self.delay_matrix)
        )
        self._validate()

    def _validate(self) -> None:
        K, M = self.num_arms, self.num_agents
        if K < 1 or M < 1:
            raise ValueError(f"need at least one arm and one agent, got K={K}, M={M}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.means) != K:
            raise ValueError(f"expected {K} means, got {len(self.means)}")
        for i, mu in enumerate(self.means):
            if not 0.0 <= mu <= 1.0:
                raise ValueError(f"mean of arm {i} outside [0, 1]: {mu}")
        if len(self.local_sets) != M or len(self.inter_round_gaps) != M:
            raise ValueError("local_sets and inter_round_gaps need one entry per agent")
        for j, arms in enumerate(self.local_sets):
            if not arms:
                raise ValueError(f"local set of agent {j} is empty")
            if len(set(arms)) != len(arms):
                raise ValueError(f"local set of agent {j} has duplicates")
            if arms[0] < 0 or arms[-1] >= K:
                raise ValueError(f"local set of agent {j} not within 0..{K - 1}")
        for j, w in enumerate(self.inter_round_gaps):
            if w < 1:
                raise ValueError(f"inter-round gap of agent {j} must be >= 1, got {w}")
        if len(self.delay_matrix) != M or any(len(row) != M for row in self.delay_matrix):
            raise ValueError(f"delay matrix must be {M}x{M}")
        for j, row in enumerate(self.delay_matrix):
            if row[j] != 0:
                raise ValueError(f"self-delay of agent {j} must be 0")
            if min(row) < 0:
                raise ValueError("delays must be nonnegative")

    @property
    def action_rates(self) -> tuple[float, ...]:
        return tuple(1.0 / w for w in self.inter_round_gaps)

    def num_decisions(self, agent: int) -> int:
        return self.horizon // self.inter_round_gaps[agent]

    def holders(self, arm: int) -> tuple[int, ...]:
        """Agents whose local set contains ``arm``, ascending."""
        return tuple(j for j, s in enumerate(self.local_sets) if arm in s)

    def local_optimum(self, agent: int) -> int:
        """Best local arm of ``agent``; lowest index among equal means."""
        arms = self.local_sets[agent]
        return max(arms, key=lambda a: (self.means[a], -a))

    def to_dict(self) -> dict:
        return {
            "num_arms": self.num_arms,
            "num_agents": self.num_agents,
            "means": list(self.means),
            "local_sets": [list(s) for s in self.local_sets],
            "inter_round_gaps": list(self.inter_round_gaps),
            "delay_matrix": [list(r) for r in self.delay_matrix],
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        return cls(
            num_arms=data["num_arms"],
            num_agents=data["num_agents"],
            means=data["means"],
            local_sets=data["local_sets"],
            inter_round_gaps=data["inter_round_gaps"],
            delay_matrix=data["delay_matrix"],
            horizon=data["horizon"],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def decision_rounds(gap: int, horizon: int) -> tuple[int, ...]:
    """Rounds ``gap, 2*gap, ..., N*gap`` with ``N = horizon // gap``."""
    if gap < 1:
        raise ValueError(f"gap must be a positive integer, got {gap}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    return tuple(range(gap, horizon + 1, gap))


def schedule(instance: Instance) -> tuple[tuple[int, ...], ...]:
    return tuple(decision_rounds(w, instance.horizon) for w in instance.inter_round_gaps)


def sample_reward(instance: Instance, arm: int, rng: np.random.Generator) -> int:
    if not 0 <= arm < instance.num_arms:
        raise IndexError(f"arm {arm} out of range 0..{instance.num_arms - 1}")
    return int(rng.random() < instance.means[arm])


class RewardStreams:
    """One independent Bernoulli stream per arm, indexed by system-wide pull ordinal.

    The k-th pull of arm ``i`` (counting pulls by every agent) always gets the
    same reward for a given seed, whichever agent makes it.
    """

    chunk = 4096

    def __init__(self, means: Sequence[float], seed):
        self.means = np.asarray(means, dtype=float)
        children = np.random.SeedSequence(seed).spawn(len(self.means))
        self._rngs = [np.random.default_rng(c) for c in children]
        self._seeds = children
        self._buf = [np.empty(0, dtype=np.uint8) for _ in self.means]
        self._pos = [0] * len(self.means)

    def draw(self, arm: int) -> int:
        if not 0 <= arm < len(self.means):
            raise IndexError(f"arm {arm} out of range")
        pos = self._pos[arm]
        if pos == len(self._buf[arm]):
            fresh = (self._rngs[arm].random(self.chunk) < self.means[arm]).astype(np.uint8)
            self._buf[arm] = fresh
            pos = 0
        self._pos[arm] = pos + 1
        return int(self._buf[arm][pos])

    def block(self, arm: int, n: int) -> np.ndarray:
        """First ``n`` rewards of ``arm``'s stream, independent of ``draw`` state."""
        rng = np.random.default_rng(self._seeds[arm])
        return (rng.random(n) < self.means[arm]).astype(np.uint8)


@dataclass(frozen=True)
class GenerationSpec:
    """Parameters for drawing a random instance."""

    num_arms: int
    num_agents: int
    set_size: int
    horizon: int = 30000
    gap_choices: tuple[int, ...] = (1, 2, 3, 4)
    delay: int = 0
    mean_low: float = 0.0
    mean_high: float = 1.0
    mean_file: str | None = None
    # rejection-sample until every local suboptimal arm trails by at least this
    min_local_gap: float = 0.0
    max_attempts: int = 10000
    # carve local sets out of one permutation so no two agents share an arm
    disjoint: bool = False

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["gap_choices"] = list(self.gap_choices)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationSpec":
        data = dict(data)
        if "gap_choices" in data:
            data["gap_choices"] = tuple(data["gap_choices"])
        return cls(**data)


def load_means(path) -> tuple[float, ...]:
    text = Path(path).read_text()
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: cannot parse {line!r} as a number") from None
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{path}:{lineno}: mean {v} outside [0, 1]")
        values.append(v)
    if not values:
        raise ValueError(f"{path}: no means found")
    return tuple(values)


def min_local_gap(instance: Instance) -> float:
    """Smallest gap between an agent's local optimum and any other local arm."""
    best = float("inf")
    for j, arms in enumerate(instance.local_sets):
        top = instance.means[instance.local_optimum(j)]
        for a in arms:
            if a != instance.local_optimum(j):
                best = min(best, top - instance.means[a])
    return best


def constant_delay_matrix(num_agents: int, delay: int) -> tuple[tuple[int, ...], ...]:
    return tuple(
        tuple(0 if a == b else int(delay) for b in range(num_agents)) for a in range(num_agents)
    )


def uniform_delay_matrix(num_agents: int, average: float, rng: np.random.Generator):
    """Per ordered pair, an integer delay uniform on [0.5*average, 1.5*average]."""
    lo, hi = int(round(0.5 * average)), int(round(1.5 * average))
    d = rng.integers(lo, hi + 1, size=(num_agents, num_agents))
    np.fill_diagonal(d, 0)
    return tuple(tuple(int(x) for x in row) for row in d)


def generate_instance(spec: GenerationSpec, seed) -> Instance:
    K, M = spec.num_arms, spec.num_agents
    if spec.set_size < 1 or spec.set_size > K:
        raise ValueError(f"set size {spec.set_size} must be within 1..{K}")
    if spec.disjoint and spec.set_size * M > K:
        raise ValueError(f"{M} disjoint sets of size {spec.set_size} need more than {K} arms")
    if not spec.gap_choices or min(spec.gap_choices) < 1:
        raise ValueError("gap_choices must be nonempty positive integers")
    pool = load_means(spec.mean_file) if spec.mean_file else None

    rng = np.random.default_rng(seed)
    for _ in range(spec.max_attempts):
        if pool is None:
            means = rng.uniform(spec.mean_low, spec.mean_high, size=K)
        else:
            means = rng.choice(pool, size=K, replace=len(pool) < K)
        if spec.disjoint:
            perm = rng.permutation(K)
            sets = [np.sort(perm[j * spec.set_size:(j + 1) * spec.set_size]) for j in range(M)]
        else:
            sets = [np.sort(rng.choice(K, size=spec.set_size, replace=False)) for _ in range(M)]
        gaps = rng.choice(spec.gap_choices, size=M)
        inst = Instance(
            num_arms=K,
            num_agents=M,
            means=means.tolist(),
            local_sets=[s.tolist() for s in sets],
            inter_round_gaps=gaps.tolist(),
            delay_matrix=constant_delay_matrix(M, spec.delay),
            horizon=spec.horizon,
        )
        if spec.min_local_gap <= 0 or min_local_gap(inst) >= spec.min_local_gap:
            return inst
    raise ValueError(
        f"no instance with local gap >= {spec.min_local_gap} after {spec.max_attempts} draws"
    )
