"""Ball-identity-aware RBB with FIFO queues and per-ball coverage tracking.

Each bin is a FIFO queue; only the ball at the front of a non-empty queue is
re-allocated in a round.  Forgetting identities, the queue-length dynamics
are exactly the RBB load dynamics (same destination stream, same update).

Conventions:

* Ball ids are 0..m-1, bins 0..n-1.
* Initial placement counts as visiting the initial bin, so single-bin
  degenerate cases are covered at round 0.
* Destinations for the front balls are drawn in ascending source-bin order,
  reusing the engine convention, which makes a load-level replay against
  `rbb_step` exact.
* Same-round arrivals into one bin are ordered by the tie-break policy:
  ascending ball id, or a uniform permutation drawn from a dedicated RNG
  stream so the load dynamics are unaffected by the policy.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional

import numpy as np

from .engine import InitialConfig
from .rng import RandomSource, UniformBuffer


@dataclass(frozen=True)
class TieBreakPolicy:
    kind: str = "by_ball_id"

    def __post_init__(self):
        if self.kind not in ("by_ball_id", "random"):
            raise ValueError(f"unknown tie-break kind {self.kind!r}")


@dataclass
class QueueSystem:
    """FIFO queues of ball identities, one per bin."""

    queues: List[Deque[int]]

    @property
    def n(self) -> int:
        return len(self.queues)

    @property
    def m(self) -> int:
        return sum(len(q) for q in self.queues)

    @classmethod
    def from_init(cls, n: int, m: int, init: InitialConfig) -> "QueueSystem":
        loads = init.build(n, m).loads
        queues: List[Deque[int]] = [deque() for _ in range(n)]
        ball = 0
        for i in range(n):
            for _ in range(int(loads[i])):
                queues[i].append(ball)
                ball += 1
        return cls(queues)

    def loads(self) -> np.ndarray:
        return np.array([len(q) for q in self.queues], dtype=np.int64)


@dataclass
class CoverageTracker:
    """Per-ball visited bins, switch counts, cover rounds and delays."""

    visited: np.ndarray          # (m, n) bool
    switch_count: np.ndarray     # (m,) int64
    delay_count: np.ndarray      # (m,) int64
    cover_round: np.ndarray      # (m,) int64, -1 while uncovered
    visited_n: np.ndarray        # (m,) running count of visited bins
    round: int = 0

    @classmethod
    def fresh(cls, q: QueueSystem) -> "CoverageTracker":
        m, n = q.m, q.n
        t = cls(
            visited=np.zeros((m, n), dtype=bool),
            switch_count=np.zeros(m, dtype=np.int64),
            delay_count=np.zeros(m, dtype=np.int64),
            cover_round=np.full(m, -1, dtype=np.int64),
            visited_n=np.zeros(m, dtype=np.int64),
        )
        for bin_idx, queue in enumerate(q.queues):
            for ball in queue:
                t._mark(ball, bin_idx, 0)
        return t

    def _mark(self, ball: int, bin_idx: int, round: int) -> None:
        if not self.visited[ball, bin_idx]:
            self.visited[ball, bin_idx] = True
            self.visited_n[ball] += 1
            if self.visited_n[ball] == self.visited.shape[1] and self.cover_round[ball] < 0:
                self.cover_round[ball] = round

    def all_covered(self) -> bool:
        return bool((self.cover_round >= 0).all())


def traversal_step(
    q: QueueSystem,
    cov: CoverageTracker,
    policy: TieBreakPolicy,
    rng: RandomSource,
    tie_rng: Optional[RandomSource] = None,
    _buf: Optional[UniformBuffer] = None,
) -> None:
    """One FIFO round, in place.

    The front ball of every non-empty queue moves to a uniform destination;
    every other ball sitting in a non-empty queue accrues one delay.
    """
    n = q.n
    if policy.kind == "random" and tie_rng is None:
        raise ValueError("random tie-break needs a dedicated tie_rng stream")

    movers: List[int] = []
    for i in range(n):
        if q.queues[i]:
            movers.append(q.queues[i].popleft())
    kappa = len(movers)
    cov.round += 1

    # delays: every ball still sitting in a (previously non-empty) queue
    # after the front left was behind at least one other ball this round
    for i in range(n):
        for ball in q.queues[i]:
            cov.delay_count[ball] += 1
    # a bin that held >= 2 balls still has the rest queued after the pop,
    # which is exactly the "non-front in a non-empty queue" set

    if kappa == 0:
        return
    draws = _buf.take(kappa) if _buf is not None else rng.integers(n, size=kappa)

    arrivals: dict[int, List[int]] = {}
    for ball, dest in zip(movers, draws):
        arrivals.setdefault(int(dest), []).append(ball)
    for dest in sorted(arrivals):
        group = arrivals[dest]
        if len(group) > 1:
            if policy.kind == "by_ball_id":
                group.sort()
            else:
                perm = tie_rng.generator.permutation(len(group))
                group = [group[j] for j in perm]
        for ball in group:
            cov.switch_count[ball] += 1
            cov._mark(ball, dest, cov.round)
            q.queues[dest].append(ball)


def cover_times(
    n: int,
    m: int,
    init: InitialConfig,
    policy: TieBreakPolicy,
    cap: int,
    rng: RandomSource,
    tie_rng: Optional[RandomSource] = None,
) -> List[Optional[int]]:
    """Per-ball cover rounds, None for balls still uncovered at the cap."""
    if cap < 0:
        raise ValueError("cap must be non-negative")
    q = QueueSystem.from_init(n, m, init)
    cov = CoverageTracker.fresh(q)
    if policy.kind == "random" and tie_rng is None:
        tie_rng = rng.stream(rng.stream_id + 1_000_003)
    buf = UniformBuffer(rng, n)
    for _ in range(cap):
        if cov.all_covered():
            break
        traversal_step(q, cov, policy, rng, tie_rng=tie_rng, _buf=buf)
    return [int(r) if r >= 0 else None for r in cov.cover_round]


def switch_stats(cov: CoverageTracker) -> dict:
    """Read-only summary of switches, delays and coverage."""
    n = cov.visited.shape[1]
    return {
        "switch_count": cov.switch_count.copy(),
        "delay_count": cov.delay_count.copy(),
        "coverage_fraction": cov.visited_n / n,
        "cover_round": cov.cover_round.copy(),
    }
