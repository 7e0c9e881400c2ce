"""Gap structure of an instance, closed-form bound evaluators and empirical regret.

All bounds are returned as plain numbers with their constants as written; no
hidden big-O factors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .env import Instance
from .policies import inverse_round


def kl_bernoulli(u: float, v: float) -> float:
    """KL divergence between Bernoulli(u) and Bernoulli(v), both strictly inside (0, 1)."""
    if not (0.0 < u < 1.0 and 0.0 < v < 1.0):
        raise ValueError(f"KL needs u, v in (0, 1); got u={u}, v={v}")
    return u * math.log(u / v) + (1 - u) * math.log((1 - u) / (1 - v))


@dataclass(frozen=True)
class GapProfile:
    """Per-arm gap quantities and action-rate aggregates of an instance."""

    means: tuple[float, ...]
    local_sets: tuple[tuple[int, ...], ...]
    rates: tuple[float, ...]
    delays: tuple[int, ...]
    local_optima: tuple[int, ...]
    holders: tuple[tuple[int, ...], ...]
    optimal_holders: tuple[tuple[int, ...], ...]
    suboptimal_holders: tuple[tuple[int, ...], ...]
    global_gaps: tuple[float, ...]
    gap_tilde: tuple[float, ...]
    total_rate: float
    arm_rates: tuple[float, ...]

    @property
    def num_arms(self) -> int:
        return len(self.means)

    @property
    def num_agents(self) -> int:
        return len(self.local_sets)

    def gap(self, better: int, worse: int) -> float:
        return self.means[better] - self.means[worse]

    def local_gap(self, agent: int, arm: int) -> float:
        """Gap between ``agent``'s local optimum and ``arm``."""
        return self.gap(self.local_optima[agent], arm)

    def num_holders(self, arm: int) -> int:
        return len(self.holders[arm])


def inbound_delays(instance: Instance) -> tuple[int, ...]:
    """Worst-case staleness of what each agent hears: max over senders of d[sender][j]."""
    M = instance.num_agents
    d = instance.delay_matrix
    return tuple(max((d[s][j] for s in range(M) if s != j), default=0) for j in range(M))


def compute_gaps(instance: Instance) -> GapProfile:
    mu = instance.means
    K, M = instance.num_arms, instance.num_agents
    sets = instance.local_sets
    rates = instance.action_rates
    local_opt = tuple(instance.local_optimum(j) for j in range(M))
    best_local = [max(mu[a] for a in s) for s in sets]

    holders, opt_holders, sub_holders, tilde = [], [], [], []
    for i in range(K):
        h = tuple(j for j in range(M) if i in sets[j])
        star = tuple(j for j in h if mu[i] >= best_local[j])
        minus = tuple(j for j in h if j not in star)
        holders.append(h)
        opt_holders.append(star)
        sub_holders.append(minus)
        tilde.append(min(best_local[j] - mu[i] for j in minus) if minus else 0.0)

    top = max(mu)
    return GapProfile(
        means=tuple(mu),
        local_sets=sets,
        rates=rates,
        delays=inbound_delays(instance),
        local_optima=local_opt,
        holders=tuple(holders),
        optimal_holders=tuple(opt_holders),
        suboptimal_holders=tuple(sub_holders),
        global_gaps=tuple(top - m for m in mu),
        gap_tilde=tuple(tilde),
        total_rate=sum(rates),
        arm_rates=tuple(sum(rates[j] for j in h) for h in holders),
    )


def lower_bound(profile: GapProfile, horizon: int) -> float:
    """Asymptotic regret floor ``ln T * sum_i gap_i / KL(mu_i, mu_i + gap_i)``."""
    total = 0.0
    for i, g in enumerate(profile.gap_tilde):
        if g > 0:
            total += g / kl_bernoulli(profile.means[i], profile.means[i] + g)
    return math.log(horizon) * total


def _check_alpha(alpha: float) -> None:
    if alpha <= 2:
        raise ValueError(f"alpha must exceed 2, got {alpha}")


def violation_bound(profile: GapProfile, alpha: float) -> float:
    """Closed-form cap on expected confidence violations under delta_t = 1/t."""
    _check_alpha(alpha)
    theta = profile.total_rate
    return 2.0 / (alpha - 2) * sum(theta * r ** (alpha - 1) for r in profile.rates)


def expected_violations(
    profile: GapProfile,
    horizon: int,
    alpha: float,
    delta: Callable[[int], float] = inverse_round,
) -> float:
    """Raw violation sum for an arbitrary confidence schedule ``delta(t)``."""
    _check_alpha(alpha)
    total = 0.0
    for j, s in enumerate(profile.local_sets):
        gap = round(1 / profile.rates[j])
        n = horizon // gap
        if n == 0:
            continue
        rounds = gap * np.arange(1, n + 1)
        deltas = np.array([delta(int(t)) for t in rounds])
        arm_rate = sum(profile.arm_rates[i] for i in s)
        total += float(np.sum(rounds * deltas**alpha)) * arm_rate
    return 2.0 * total


def delay_allowance(
    profile: GapProfile,
    arm: int,
    alpha: float,
    delta: float,
    scale: float,
    delays: Sequence[int] | None = None,
) -> float:
    """``sum_{j holding arm} min(d_j * theta_j, scale * alpha * ln(1/delta) / gap_j^2)``.

    A holder whose local optimum is ``arm`` itself has zero gap and contributes
    ``d_j * theta_j``.
    """
    delays = profile.delays if delays is None else delays
    log_term = scale * alpha * math.log(1.0 / delta)
    total = 0.0
    for j in profile.holders[arm]:
        stale = delays[j] * profile.rates[j]
        g = profile.local_gap(j, arm)
        total += stale if g <= 0 else min(stale, log_term / g**2)
    return total


def coucb_regret_bound(
    profile: GapProfile, horizon: int, alpha: float, delays: Sequence[int] | None = None
) -> float:
    _check_alpha(alpha)
    log_t = math.log(horizon)
    total = 0.0
    for i, g in enumerate(profile.gap_tilde):
        if g > 0:
            total += 6 * alpha * log_t / g
            total += delay_allowance(profile, i, alpha, 1.0 / horizon, 2, delays) + 1
    return total + violation_bound(profile, alpha)


def coaae_regret_bound(
    profile: GapProfile, horizon: int, alpha: float, delays: Sequence[int] | None = None
) -> float:
    _check_alpha(alpha)
    log_t = math.log(horizon)
    total = 0.0
    for i, g in enumerate(profile.gap_tilde):
        if g > 0:
            total += 24 * alpha * log_t / g
            total += delay_allowance(profile, i, alpha, 1.0 / horizon, 8, delays) + 1
    return total + violation_bound(profile, alpha)


def comm_bounds(
    profile: GapProfile, horizon: int, alpha: float, delays: Sequence[int] | None = None
) -> tuple[float, float]:
    """Message-count envelopes: ``M * Theta * T`` for CO-UCB and the per-arm sum for CO-AAE."""
    _check_alpha(alpha)
    delays = profile.delays if delays is None else delays
    M = profile.num_agents
    q = violation_bound(profile, alpha)
    log_t = math.log(horizon)
    coaae = 0.0
    for i, g in enumerate(profile.gap_tilde):
        term = q + 1
        if g > 0:
            term += 8 * alpha * log_t / g**2
        term += sum(delays[j] * profile.rates[j] for j in profile.suboptimal_holders[i])
        coaae += term * (M + profile.num_holders(i))
    return M * profile.total_rate * horizon, coaae


def noncooperative_gap_sum(profile: GapProfile) -> tuple[float, float]:
    """(sum over agents of 1/local gaps, sum over arms of 1/gap_tilde)."""
    independent = 0.0
    for i in range(profile.num_arms):
        for j in profile.suboptimal_holders[i]:
            independent += 1.0 / profile.local_gap(j, i)
    cooperative = sum(1.0 / g for g in profile.gap_tilde if g > 0)
    return independent, cooperative


def bound_report(
    profile: GapProfile, horizon: int, alpha: float, delays: Sequence[int] | None = None
) -> dict:
    """Every bound plus its per-arm breakdown, JSON-serializable."""
    delays = profile.delays if delays is None else delays
    log_t = math.log(horizon)
    arms = []
    for i, g in enumerate(profile.gap_tilde):
        row = {
            "arm": i,
            "mean": profile.means[i],
            "gap_tilde": g,
            "holders": len(profile.holders[i]),
            "suboptimal_holders": len(profile.suboptimal_holders[i]),
            "arm_rate": profile.arm_rates[i],
            "ucb_delay_allowance": delay_allowance(profile, i, alpha, 1 / horizon, 2, delays),
            "aae_delay_allowance": delay_allowance(profile, i, alpha, 1 / horizon, 8, delays),
        }
        if g > 0:
            row["ucb_log_term"] = 6 * alpha * log_t / g
            row["aae_log_term"] = 24 * alpha * log_t / g
            row["lower_bound_term"] = log_t * g / kl_bernoulli(profile.means[i], profile.means[i] + g)
        arms.append(row)
    comm_ucb, comm_aae = comm_bounds(profile, horizon, alpha, delays)
    return {
        "horizon": horizon,
        "alpha": alpha,
        "inbound_delays": list(delays),
        "total_rate": profile.total_rate,
        "violation_bound": violation_bound(profile, alpha),
        "lower_bound": lower_bound(profile, horizon),
        "coucb_regret_bound": coucb_regret_bound(profile, horizon, alpha, delays),
        "coaae_regret_bound": coaae_regret_bound(profile, horizon, alpha, delays),
        "coucb_comm_bound": comm_ucb,
        "coaae_comm_bound": comm_aae,
        "arms": arms,
    }


@dataclass
class TrialTrace:
    """Everything one algorithm did in one trial.

    Pulls are stored in execution order (round-major, agent index within a
    round). ``pull_count`` is the agent's observation count of the pulled arm
    just before the pull; ``pull_covered`` says whether every local interval
    contained its true mean at that decision.
    """

    algorithm: str
    horizon: int
    num_agents: int
    num_arms: int
    pull_round: np.ndarray
    pull_agent: np.ndarray
    pull_arm: np.ndarray
    pull_reward: np.ndarray
    pull_count: np.ndarray
    pull_covered: np.ndarray
    comm_series: np.ndarray
    obs_sent: int = 0
    elim_sent: int = 0
    in_flight: int = 0
    violations: int = 0
    final_counts: np.ndarray | None = None
    final_sums: np.ndarray | None = None
    final_candidates: np.ndarray | None = None
    message_log: list[str] | None = field(default=None, repr=False)

    @property
    def messages(self) -> int:
        return int(self.comm_series[-1])

    def local_pull_counts(self) -> np.ndarray:
        """``[agent, arm]`` number of the agent's own pulls."""
        out = np.zeros((self.num_agents, self.num_arms), dtype=np.int64)
        np.add.at(out, (self.pull_agent, self.pull_arm), 1)
        return out

    def system_pull_counts(self) -> np.ndarray:
        return np.bincount(self.pull_arm, minlength=self.num_arms)


@dataclass
class RegretSeries:
    rounds: np.ndarray
    realized: np.ndarray
    pseudo: np.ndarray
    per_agent_realized: np.ndarray
    per_agent_pseudo: np.ndarray

    @property
    def aggregate(self) -> float:
        return float(self.per_agent_realized.sum())


def empirical_regret(trace: TrialTrace, instance: Instance, rounds=None) -> RegretSeries:
    """Realized and gap-weighted regret, aggregated over agents, at ``rounds``."""
    if trace.num_agents != instance.num_agents or trace.num_arms != instance.num_arms:
        raise ValueError("trace and instance disagree on agent or arm count")
    if trace.horizon != instance.horizon:
        raise ValueError("trace and instance disagree on the horizon")
    mu = np.asarray(instance.means)
    sets = [set(s) for s in instance.local_sets]
    if any(a not in sets[j] for j, a in zip(trace.pull_agent.tolist(), trace.pull_arm.tolist())):
        raise ValueError("trace contains a pull outside the agent's local set")
    if rounds is None:
        rounds = np.arange(1, instance.horizon + 1)
    rounds = np.asarray(rounds)

    best = np.array([mu[instance.local_optimum(j)] for j in range(instance.num_agents)])
    agent_best = best[trace.pull_agent]
    realized_step = agent_best - trace.pull_reward
    pseudo_step = agent_best - mu[trace.pull_arm]
    upto = np.searchsorted(trace.pull_round, rounds, side="right")
    realized = np.concatenate([[0.0], np.cumsum(realized_step)])[upto]
    pseudo = np.concatenate([[0.0], np.cumsum(pseudo_step)])[upto]

    M = instance.num_agents
    per_real = np.bincount(trace.pull_agent, weights=realized_step, minlength=M)
    per_pseudo = np.bincount(trace.pull_agent, weights=pseudo_step, minlength=M)
    return RegretSeries(rounds, realized, pseudo, per_real, per_pseudo)
