"""Delayed broadcast fabric and message accounting.

A message emitted at round ``t`` from ``a`` to ``b`` becomes deliverable at
round ``t + max(d[a][b], 1)``: nothing sent during a round is seen in that
same round. Delivery order per recipient is (arrival round, emission order).
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from typing import Iterable

from .env import Instance
from .policies import CandidateSet

OBSERVATION = "obs"
ELIMINATION = "elim"


@dataclass(frozen=True)
class Message:
    kind: str
    origin: int
    recipient: int
    emit_round: int
    arrival_round: int
    seq: int
    arm: int = -1
    reward: int = 0
    arms: tuple[int, ...] = ()

    def record(self) -> dict:
        rec = {
            "seq": self.seq,
            "kind": self.kind,
            "origin": self.origin,
            "recipient": self.recipient,
            "emit": self.emit_round,
            "arrival": self.arrival_round,
        }
        if self.kind == OBSERVATION:
            rec["arm"] = self.arm
            rec["reward"] = self.reward
        else:
            rec["arms"] = list(self.arms)
        return rec


def format_log_line(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


class DelayedBus:
    """Per-recipient priority queues plus the running message count C_T."""

    def __init__(self, delay_matrix, keep_log: bool = False):
        self.delay_matrix = delay_matrix
        self.num_agents = len(delay_matrix)
        self._pending = [[] for _ in range(self.num_agents)]
        self._seq = 0
        self.sent_count = 0
        self.sent_by_kind = {OBSERVATION: 0, ELIMINATION: 0}
        self.delivered_count = 0
        self.log = [] if keep_log else None

    def arrival(self, origin: int, recipient: int, t: int) -> int:
        return t + max(self.delay_matrix[origin][recipient], 1)

    def enqueue(self, kind: str, origin: int, recipient: int, t: int, **payload) -> Message:
        if recipient == origin:
            raise ValueError("an agent does not message itself")
        msg = Message(
            kind=kind,
            origin=origin,
            recipient=recipient,
            emit_round=t,
            arrival_round=self.arrival(origin, recipient, t),
            seq=self._seq,
            **payload,
        )
        self._seq += 1
        heapq.heappush(self._pending[recipient], (msg.arrival_round, msg.seq, msg))
        self.sent_count += 1
        self.sent_by_kind[kind] += 1
        if self.log is not None:
            self.log.append(msg)
        return msg

    def in_flight(self) -> int:
        return sum(len(q) for q in self._pending)

    def log_lines(self) -> list[str]:
        return [format_log_line(m.record()) for m in self.log or ()]


def deliver(bus: DelayedBus, recipient: int, t: int) -> list[Message]:
    """Pop every message for ``recipient`` with arrival round <= ``t``, in order."""
    queue = bus._pending[recipient]
    out = []
    while queue and queue[0][0] <= t:
        out.append(heapq.heappop(queue)[2])
    bus.delivered_count += len(out)
    return out


def broadcast_observation_ucb(
    bus: DelayedBus, instance: Instance, origin: int, arm: int, reward: int, t: int
) -> int:
    """Send the observation to every other agent holding ``arm``."""
    sent = 0
    for j in instance.holders(arm):
        if j != origin:
            bus.enqueue(OBSERVATION, origin, j, t, arm=arm, reward=reward)
            sent += 1
    return sent


def broadcast_observation_aae(
    bus: DelayedBus,
    instance: Instance,
    origin: int,
    arm: int,
    reward: int,
    t: int,
    cands: CandidateSet,
) -> int:
    """Send only while undecided, and only to peers believed to still need ``arm``."""
    if len(cands.own) <= 1:
        return 0
    sent = 0
    for j in instance.holders(arm):
        if j != origin and cands.peer_active(j, arm):
            bus.enqueue(OBSERVATION, origin, j, t, arm=arm, reward=reward)
            sent += 1
    return sent


def broadcast_elimination(bus: DelayedBus, origin: int, arms: Iterable[int], t: int) -> int:
    """One notice per peer carrying the whole batch of eliminated arms."""
    arms = tuple(arms)
    if not arms:
        return 0
    sent = 0
    for j in range(bus.num_agents):
        if j != origin:
            bus.enqueue(ELIMINATION, origin, j, t, arms=arms)
            sent += 1
    return sent
