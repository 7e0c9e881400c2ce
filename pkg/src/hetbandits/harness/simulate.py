"""Reference round loop written directly on top of the policy and network objects.

Slow but transparent; the compiled kernel in ``kernel.py`` must reproduce its
traces exactly.
"""
from __future__ import annotations

import numpy as np

from ..analysis import TrialTrace
from ..env import Instance, RewardStreams
from ..network import (
    OBSERVATION,
    DelayedBus,
    broadcast_elimination,
    broadcast_observation_aae,
    broadcast_observation_ucb,
    deliver,
)
from ..policies import (
    CandidateSet,
    EstimatorState,
    inverse_round,
    refresh_candidates,
    select_aae,
    select_ucb,
)

ALGORITHMS = ("CO-UCB", "CO-AAE", "IND-UCB", "IND-AAE")


def algorithm_flags(algorithm: str) -> tuple[bool, bool]:
    """(cooperative, elimination-based) for an algorithm name."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    return algorithm.startswith("CO-"), algorithm.endswith("AAE")


def simulate_reference(
    instance: Instance,
    algorithm: str,
    reward_seed,
    alpha: float = 2.5,
    delta=inverse_round,
    keep_log: bool = False,
) -> TrialTrace:
    coop, aae = algorithm_flags(algorithm)
    M, T = instance.num_agents, instance.horizon
    mu = instance.means
    gaps = instance.inter_round_gaps
    streams = RewardStreams(mu, reward_seed)
    bus = DelayedBus(instance.delay_matrix, keep_log=keep_log)
    states = [EstimatorState(s, alpha, delta) for s in instance.local_sets]
    cands = [CandidateSet(j, instance.local_sets) for j in range(M)] if aae else None

    pulls = []
    comm = np.zeros(T + 1, dtype=np.int64)
    violations = 0

    def eliminate(j, t):
        nonlocal violations
        gone = refresh_candidates(states[j], cands[j], t)
        if gone:
            if not states[j].covers(mu, t):
                violations += 1
            if coop:
                broadcast_elimination(bus, j, gone, t)

    for t in range(1, T + 1):
        for j in range(M):
            for msg in deliver(bus, j, t):
                if msg.kind == OBSERVATION:
                    states[j].update(msg.arm, msg.reward)
                    if aae:
                        eliminate(j, t)
                else:
                    cands[j].apply_notice(msg.origin, msg.arms)

            if t % gaps[j]:
                continue
            state = states[j]
            covered = state.covers(mu, t)
            violations += not covered
            arm = select_aae(cands[j], state) if aae else select_ucb(state, t)
            before = state.counts[arm]
            reward = streams.draw(arm)
            state.update(arm, reward)
            pulls.append((t, j, arm, reward, before, covered))
            if aae:
                eliminate(j, t)
                if coop:
                    broadcast_observation_aae(bus, instance, j, arm, reward, t, cands[j])
            elif coop:
                broadcast_observation_ucb(bus, instance, j, arm, reward, t)
        comm[t] = bus.sent_count

    cols = np.array(pulls, dtype=np.int64).reshape(-1, 6)
    K = instance.num_arms
    counts = np.zeros((M, K), dtype=np.int64)
    sums = np.zeros((M, K), dtype=np.int64)
    for j, s in enumerate(states):
        for a in s.local_set:
            counts[j, a] = s.counts[a]
            sums[j, a] = s.sums[a]
    final_cands = None
    if aae:
        final_cands = np.zeros((M, K), dtype=bool)
        for j, c in enumerate(cands):
            final_cands[j, sorted(c.own)] = True

    return TrialTrace(
        algorithm=algorithm,
        horizon=T,
        num_agents=M,
        num_arms=K,
        pull_round=cols[:, 0],
        pull_agent=cols[:, 1],
        pull_arm=cols[:, 2],
        pull_reward=cols[:, 3],
        pull_count=cols[:, 4],
        pull_covered=cols[:, 5].astype(bool),
        comm_series=comm,
        obs_sent=bus.sent_by_kind["obs"],
        elim_sent=bus.sent_by_kind["elim"],
        in_flight=bus.in_flight(),
        violations=violations,
        final_counts=counts,
        final_sums=sums,
        final_candidates=final_cands,
        message_log=bus.log_lines() if keep_log else None,
    )
