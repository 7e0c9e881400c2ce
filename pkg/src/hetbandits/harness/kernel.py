"""Compiled round loop with the same semantics as ``simulate.simulate_reference``.

Messages live in a recycled pool and are bucketed by arrival round in a ring
of ``max_delay + 1`` slots; each (slot, recipient) bucket is a FIFO linked
list, which gives delivery in (arrival, emission) order for free. Outgoing
messages of one agent's turn are staged and flushed at the end of the turn;
nothing sent in round t is deliverable in round t, so this is order-preserving.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..analysis import TrialTrace
from ..env import Instance, RewardStreams
from ..network import format_log_line
from ..policies import EmptyCandidateSet, inverse_round
from .simulate import algorithm_flags

OBS, ELIM = 0, 1


@njit(cache=True)
def _covered(j, counts, sums, local_ptr, local_idx, means, logterm):
    for q in range(local_ptr[j], local_ptr[j + 1]):
        a = local_idx[q]
        n = counts[j, a]
        if n > 0:
            m = sums[j, a] / n
            w = math.sqrt(logterm / (2 * n))
            if not (m - w <= means[a] <= m + w):
                return False
    return True


@njit(cache=True)
def _refresh(j, counts, sums, cand, local_ptr, local_idx, logterm, gone):
    """Fill ``gone`` with eliminated arms; returns how many (-1 if it would empty the set)."""
    best_lower = -np.inf
    for q in range(local_ptr[j], local_ptr[j + 1]):
        a = local_idx[q]
        n = counts[j, a]
        if n > 0:
            lo = sums[j, a] / n - math.sqrt(logterm / (2 * n))
            if lo > best_lower:
                best_lower = lo
    n_gone = 0
    n_cand = 0
    for q in range(local_ptr[j], local_ptr[j + 1]):
        a = local_idx[q]
        if not cand[j, a]:
            continue
        n_cand += 1
        n = counts[j, a]
        if n > 0:
            hi = sums[j, a] / n + math.sqrt(logterm / (2 * n))
            if hi < best_lower:
                gone[n_gone] = a
                n_gone += 1
    if n_gone > 0 and n_gone == n_cand:
        return -1
    for q in range(n_gone):
        cand[j, gone[q]] = False
    return n_gone


@njit(cache=True)
def _simulate(
    coop, aae, K, M, T, local_mask, local_ptr, local_idx, holder_ptr, holder_idx,
    gaps, delay_eff, means, alpha, delta, reward_ptr, rewards, keep_log,
):
    S = delay_eff.max() + 1
    head = np.full((S, M), -1, np.int64)
    tail = np.full((S, M), -1, np.int64)

    cap = 1024
    m_kind = np.zeros(cap, np.int8)
    m_origin = np.zeros(cap, np.int32)
    m_payload = np.zeros(cap, np.int32)
    m_reward = np.zeros(cap, np.int8)
    m_next = np.full(cap, -1, np.int64)
    free = np.arange(cap - 1, -1, -1).astype(np.int64)
    free_top = cap

    log_cap = 1024 if keep_log else 1
    lg = np.zeros((log_cap, 7), np.int64)  # kind, origin, recipient, payload, reward, emit, arrival
    n_log = 0

    counts = np.zeros((M, K), np.int64)
    sums = np.zeros((M, K), np.int64)
    cand = local_mask.copy()
    cand_size = np.zeros(M, np.int64)
    for j in range(M):
        cand_size[j] = local_ptr[j + 1] - local_ptr[j]
    if aae and coop:
        peer = np.zeros((M, M, K), np.bool_)
        peer_size = np.zeros((M, M), np.int64)
        for j in range(M):
            for o in range(M):
                if o != j:
                    peer[j, o, :] = local_mask[o]
                    peer_size[j, o] = cand_size[o]
    else:
        peer = np.zeros((1, 1, 1), np.bool_)
        peer_size = np.zeros((1, 1), np.int64)

    n_local = local_ptr[M]
    ev_ptr = np.zeros(n_local + 1, np.int64)
    ev_arms = np.zeros(max(n_local, 1), np.int32)
    n_ev = 0

    total = 0
    for j in range(M):
        total += T // gaps[j]
    p_round = np.zeros(total, np.int64)
    p_agent = np.zeros(total, np.int64)
    p_arm = np.zeros(total, np.int64)
    p_reward = np.zeros(total, np.int64)
    p_count = np.zeros(total, np.int64)
    p_covered = np.zeros(total, np.bool_)
    n_pull = 0

    comm = np.zeros(T + 1, np.int64)
    ordinal = np.zeros(K, np.int64)
    out_cap = (K + 2) * M + 1
    out_kind = np.zeros(out_cap, np.int8)
    out_rcpt = np.zeros(out_cap, np.int64)
    out_payload = np.zeros(out_cap, np.int32)
    out_reward = np.zeros(out_cap, np.int8)
    gone = np.zeros(K, np.int64)

    sent = 0
    obs_sent = 0
    elim_sent = 0
    delivered = 0
    violations = 0
    status = 0
    bad_agent = -1
    bad_round = -1

    for t in range(1, T + 1):
        logterm = alpha * math.log(1.0 / delta[t])
        slot = t % S
        for j in range(M):
            n_out = 0
            idx = head[slot, j]
            head[slot, j] = -1
            tail[slot, j] = -1
            while idx != -1:
                nxt = m_next[idx]
                if m_kind[idx] == OBS:
                    arm = m_payload[idx]
                    counts[j, arm] += 1
                    sums[j, arm] += m_reward[idx]
                    if aae:
                        ng = _refresh(j, counts, sums, cand, local_ptr, local_idx, logterm, gone)
                        if ng < 0:
                            status = 1
                        elif ng > 0:
                            cand_size[j] -= ng
                            if not _covered(j, counts, sums, local_ptr, local_idx, means, logterm):
                                violations += 1
                            if coop:
                                for q in range(ng):
                                    ev_arms[ev_ptr[n_ev] + q] = gone[q]
                                ev_ptr[n_ev + 1] = ev_ptr[n_ev] + ng
                                for r in range(M):
                                    if r != j:
                                        out_kind[n_out] = ELIM
                                        out_rcpt[n_out] = r
                                        out_payload[n_out] = n_ev
                                        n_out += 1
                                n_ev += 1
                else:
                    ev = m_payload[idx]
                    o = m_origin[idx]
                    for q in range(ev_ptr[ev], ev_ptr[ev + 1]):
                        a = ev_arms[q]
                        if peer[j, o, a]:
                            peer[j, o, a] = False
                            peer_size[j, o] -= 1
                free[free_top] = idx
                free_top += 1
                delivered += 1
                idx = nxt
                if status != 0:
                    break
            if status != 0:
                bad_agent = j
                bad_round = t
                break

            if t % gaps[j] == 0:
                covered = _covered(j, counts, sums, local_ptr, local_idx, means, logterm)
                if not covered:
                    violations += 1
                arm = -1
                if aae:
                    best_n = -1
                    for q in range(local_ptr[j], local_ptr[j + 1]):
                        a = local_idx[q]
                        if cand[j, a] and (arm < 0 or counts[j, a] < best_n):
                            arm = a
                            best_n = counts[j, a]
                else:
                    best = -np.inf
                    for q in range(local_ptr[j], local_ptr[j + 1]):
                        a = local_idx[q]
                        n = counts[j, a]
                        if n == 0:
                            arm = a
                            break
                        score = sums[j, a] / n + math.sqrt(logterm / (2 * n))
                        if score > best:
                            best = score
                            arm = a
                before = counts[j, arm]
                reward = rewards[reward_ptr[arm] + ordinal[arm]]
                ordinal[arm] += 1
                counts[j, arm] += 1
                sums[j, arm] += reward
                p_round[n_pull] = t
                p_agent[n_pull] = j
                p_arm[n_pull] = arm
                p_reward[n_pull] = reward
                p_count[n_pull] = before
                p_covered[n_pull] = covered
                n_pull += 1

                if aae:
                    ng = _refresh(j, counts, sums, cand, local_ptr, local_idx, logterm, gone)
                    if ng < 0:
                        status = 1
                        bad_agent = j
                        bad_round = t
                        break
                    if ng > 0:
                        cand_size[j] -= ng
                        if not _covered(j, counts, sums, local_ptr, local_idx, means, logterm):
                            violations += 1
                        if coop:
                            for q in range(ng):
                                ev_arms[ev_ptr[n_ev] + q] = gone[q]
                            ev_ptr[n_ev + 1] = ev_ptr[n_ev] + ng
                            for r in range(M):
                                if r != j:
                                    out_kind[n_out] = ELIM
                                    out_rcpt[n_out] = r
                                    out_payload[n_out] = n_ev
                                    n_out += 1
                            n_ev += 1
                if coop and (not aae or cand_size[j] > 1):
                    for q in range(holder_ptr[arm], holder_ptr[arm + 1]):
                        r = holder_idx[q]
                        if r == j:
                            continue
                        if aae and not (peer[j, r, arm] and peer_size[j, r] > 1):
                            continue
                        out_kind[n_out] = OBS
                        out_rcpt[n_out] = r
                        out_payload[n_out] = arm
                        out_reward[n_out] = reward
                        n_out += 1

            # flush this agent's outbox into the arrival buckets
            for q in range(n_out):
                r = out_rcpt[q]
                arrival = t + delay_eff[j, r]
                if free_top == 0:
                    old = m_kind.shape[0]
                    m_kind = np.concatenate((m_kind, np.zeros(old, np.int8)))
                    m_origin = np.concatenate((m_origin, np.zeros(old, np.int32)))
                    m_payload = np.concatenate((m_payload, np.zeros(old, np.int32)))
                    m_reward = np.concatenate((m_reward, np.zeros(old, np.int8)))
                    m_next = np.concatenate((m_next, np.full(old, -1, np.int64)))
                    free = np.concatenate((free, np.zeros(old, np.int64)))
                    for k in range(old):
                        free[k] = 2 * old - 1 - k
                    free_top = old
                free_top -= 1
                idx = free[free_top]
                m_kind[idx] = out_kind[q]
                m_origin[idx] = j
                m_payload[idx] = out_payload[q]
                m_reward[idx] = out_reward[q]
                m_next[idx] = -1
                s = arrival % S
                if tail[s, r] == -1:
                    head[s, r] = idx
                else:
                    m_next[tail[s, r]] = idx
                tail[s, r] = idx
                if keep_log:
                    if n_log == lg.shape[0]:
                        lg = np.concatenate((lg, np.zeros_like(lg)))
                    lg[n_log, 0] = out_kind[q]
                    lg[n_log, 1] = j
                    lg[n_log, 2] = r
                    lg[n_log, 3] = out_payload[q]
                    lg[n_log, 4] = out_reward[q]
                    lg[n_log, 5] = t
                    lg[n_log, 6] = arrival
                    n_log += 1
                sent += 1
                if out_kind[q] == OBS:
                    obs_sent += 1
                else:
                    elim_sent += 1
        if status != 0:
            break
        comm[t] = sent

    return (
        status, bad_agent, bad_round,
        p_round[:n_pull], p_agent[:n_pull], p_arm[:n_pull], p_reward[:n_pull],
        p_count[:n_pull], p_covered[:n_pull],
        comm, obs_sent, elim_sent, sent - delivered, violations,
        counts, sums, cand, lg[:n_log], ev_ptr[: n_ev + 1], ev_arms,
    )


def _csr(groups):
    ptr = np.zeros(len(groups) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(g) for g in groups])
    idx = np.array([x for g in groups for x in g], dtype=np.int64)
    return ptr, idx


def simulate_fast(
    instance: Instance,
    algorithm: str,
    reward_seed,
    alpha: float = 2.5,
    delta=inverse_round,
    keep_log: bool = False,
) -> TrialTrace:
    coop, aae = algorithm_flags(algorithm)
    if alpha <= 2:
        raise ValueError(f"alpha must exceed 2, got {alpha}")
    K, M, T = instance.num_arms, instance.num_agents, instance.horizon
    mask = np.zeros((M, K), dtype=np.bool_)
    for j, s in enumerate(instance.local_sets):
        mask[j, list(s)] = True
    local_ptr, local_idx = _csr(instance.local_sets)
    holders = [instance.holders(i) for i in range(K)]
    holder_ptr, holder_idx = _csr(holders)
    gaps = np.array(instance.inter_round_gaps, dtype=np.int64)
    delay_eff = np.maximum(np.array(instance.delay_matrix, dtype=np.int64), 1)
    deltas = np.ones(T + 1)
    deltas[1:] = [delta(t) for t in range(1, T + 1)]

    # each arm's stream only needs as many rewards as its holders can pull
    streams = RewardStreams(instance.means, reward_seed)
    need = [sum(T // gaps[j] for j in h) for h in holders]
    reward_ptr = np.zeros(K + 1, dtype=np.int64)
    reward_ptr[1:] = np.cumsum(need)
    rewards = np.concatenate(
        [streams.block(i, n) for i, n in enumerate(need)] + [np.zeros(0, np.uint8)]
    )

    out = _simulate(
        coop, aae, K, M, T, mask, local_ptr, local_idx, holder_ptr, holder_idx,
        gaps, delay_eff, np.array(instance.means, dtype=float), float(alpha), deltas,
        reward_ptr, rewards, keep_log,
    )
    (status, bad_agent, bad_round, p_round, p_agent, p_arm, p_reward, p_count, p_covered,
     comm, obs_sent, elim_sent, in_flight, violations, counts, sums, cand, lg, ev_ptr,
     ev_arms) = out
    if status:
        raise EmptyCandidateSet(
            f"{algorithm}: agent {bad_agent} would eliminate every candidate at round {bad_round}"
        )

    log = None
    if keep_log:
        log = []
        for seq, (kind, origin, rcpt, payload, reward, emit, arrival) in enumerate(lg.tolist()):
            rec = {
                "seq": seq,
                "kind": "obs" if kind == OBS else "elim",
                "origin": origin,
                "recipient": rcpt,
                "emit": emit,
                "arrival": arrival,
            }
            if kind == OBS:
                rec["arm"] = payload
                rec["reward"] = reward
            else:
                rec["arms"] = ev_arms[ev_ptr[payload]: ev_ptr[payload + 1]].tolist()
            log.append(format_log_line(rec))

    return TrialTrace(
        algorithm=algorithm,
        horizon=T,
        num_agents=M,
        num_arms=K,
        pull_round=p_round,
        pull_agent=p_agent,
        pull_arm=p_arm,
        pull_reward=p_reward,
        pull_count=p_count,
        pull_covered=p_covered,
        comm_series=comm,
        obs_sent=int(obs_sent),
        elim_sent=int(elim_sent),
        in_flight=int(in_flight),
        violations=int(violations),
        final_counts=counts,
        final_sums=sums,
        final_candidates=cand if aae else None,
        message_log=log,
    )
