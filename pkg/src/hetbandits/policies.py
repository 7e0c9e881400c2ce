"""Per-agent estimators and the CO-UCB / CO-AAE arm selection rules.

The independent baselines (IND-UCB, IND-AAE) use the same rules; they simply
never receive observations from peers.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

DEFAULT_ALPHA = 2.5


class EmptyCandidateSet(RuntimeError):
    """Raised when an elimination would leave an agent with no candidate arm."""


def inverse_round(t: int) -> float:
    """Default confidence schedule, delta_t = 1/t."""
    return 1.0 / t


def confidence_width(count: int, alpha: float, delta: float) -> float:
    """Half-width ``sqrt(alpha * ln(1/delta) / (2 * count))`` of the confidence interval."""
    if count < 1:
        raise ValueError("confidence width undefined for an unexplored arm")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return math.sqrt(alpha * math.log(1.0 / delta) / (2 * count))


class EstimatorState:
    """Observation counts and empirical means of one agent's local arms.

    Means are kept as reward sums over counts, so ``mean(arm)`` is exactly the
    average of the incorporated 0/1 rewards.
    """

    def __init__(
        self,
        local_set: Iterable[int],
        alpha: float = DEFAULT_ALPHA,
        delta: Callable[[int], float] = inverse_round,
    ):
        if alpha <= 2:
            raise ValueError(f"alpha must exceed 2, got {alpha}")
        self.local_set = tuple(sorted(local_set))
        if not self.local_set:
            raise ValueError("empty local set")
        self.alpha = alpha
        self.delta = delta
        self.counts = {a: 0 for a in self.local_set}
        self.sums = {a: 0 for a in self.local_set}

    def mean(self, arm: int) -> float:
        """Empirical mean, NaN for an unexplored arm."""
        n = self.counts[arm]
        return self.sums[arm] / n if n else math.nan

    def width(self, arm: int, t: int) -> float:
        return confidence_width(self.counts[arm], self.alpha, self.delta(t))

    def update(self, arm: int, reward: int) -> None:
        if arm not in self.counts:
            raise KeyError(f"arm {arm} is not in the local set {self.local_set}")
        self.counts[arm] += 1
        self.sums[arm] += reward

    def interval(self, arm: int, t: int) -> tuple[float, float]:
        if self.counts[arm] == 0:
            return -math.inf, math.inf
        m, w = self.mean(arm), self.width(arm, t)
        return m - w, m + w

    def covers(self, means: Sequence[float], t: int) -> bool:
        """True when every local true mean lies inside its current interval."""
        for a in self.local_set:
            lo, hi = self.interval(a, t)
            if not lo <= means[a] <= hi:
                return False
        return True

    def snapshot(self) -> dict:
        return {
            "counts": [self.counts[a] for a in self.local_set],
            "sums": [self.sums[a] for a in self.local_set],
        }


def update_estimate(state: EstimatorState, arm: int, reward: int) -> EstimatorState:
    state.update(arm, reward)
    return state


def select_ucb(state: EstimatorState, t: int) -> int:
    """Unexplored local arms first (lowest index), then the highest upper bound."""
    best, best_score = None, -math.inf
    for a in state.local_set:
        if state.counts[a] == 0:
            return a
        score = state.mean(a) + state.width(a, t)
        if score > best_score:
            best, best_score = a, score
    return best


class CandidateSet:
    """An agent's surviving arms plus its (possibly stale) view of every peer's."""

    def __init__(self, agent: int, local_sets: Sequence[Sequence[int]]):
        self.agent = agent
        self.own = set(local_sets[agent])
        self.peer_view = {
            j: set(s) for j, s in enumerate(local_sets) if j != agent
        }

    def __len__(self) -> int:
        return len(self.own)

    def apply_notice(self, origin: int, arms: Iterable[int]) -> None:
        self.peer_view[origin].difference_update(arms)

    def peer_active(self, peer: int, arm: int) -> bool:
        """Whether ``peer`` is believed to still need observations of ``arm``."""
        view = self.peer_view[peer]
        return arm in view and len(view) > 1


def refresh_candidates(state: EstimatorState, cands: CandidateSet, t: int) -> list[int]:
    """Drop every candidate whose interval lies strictly below some local arm's.

    Comparators range over the whole local set; unexplored arms neither
    eliminate nor get eliminated. Returns the newly eliminated arms, ascending.
    """
    best_lower = -math.inf
    upper = {}
    for a in state.local_set:
        if state.counts[a] == 0:
            continue
        lo, hi = state.interval(a, t)
        best_lower = max(best_lower, lo)
        upper[a] = hi
    gone = sorted(a for a in cands.own if a in upper and upper[a] < best_lower)
    if gone and len(gone) == len(cands.own):
        raise EmptyCandidateSet(
            f"agent {cands.agent} would eliminate all candidates {sorted(cands.own)} at round {t}"
        )
    cands.own.difference_update(gone)
    return gone


def select_aae(cands: CandidateSet, state: EstimatorState) -> int:
    """Candidate with the fewest observations, lowest index on ties."""
    if not cands.own:
        raise EmptyCandidateSet(f"agent {cands.agent} has an empty candidate set")
    return min(cands.own, key=lambda a: (state.counts[a], a))
