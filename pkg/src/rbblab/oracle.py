"""Brute-force ground truth for tiny instances.

Full enumeration of the composition state space, exact one-step successor
distributions (by iterating every destination tuple and accumulating integer
counts, so there is no float summation-order nondeterminism), transition
kernels, and numerically computed stationary distributions.  Everything here
is only feasible for tiny (n, m) and exists to check the simulator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .engine import LoadVector

State = Tuple[int, ...]

STATE_CAP = 10**6
TUPLE_CAP = 10**7


@dataclass(frozen=True)
class StateSpace:
    """All compositions of m balls into n bins, in colexicographic order."""

    n: int
    m: int
    states: Tuple[State, ...]
    index: Mapping[State, int]

    def __len__(self) -> int:
        return len(self.states)


def _compositions(m: int, n: int):
    if n == 1:
        yield (m,)
        return
    for first in range(m + 1):
        for rest in _compositions(m - first, n - 1):
            yield (first,) + rest


def enumerate_states(n: int, m: int, cap: int = STATE_CAP) -> StateSpace:
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    count = math.comb(m + n - 1, n - 1)
    if count > cap:
        raise ValueError(f"state space has {count} states, exceeds cap {cap}")
    states = tuple(sorted(_compositions(m, n), key=lambda s: s[::-1]))
    index = {s: i for i, s in enumerate(states)}
    return StateSpace(n=n, m=m, states=states, index=index)


def one_step_distribution(x: LoadVector, cap: int = TUPLE_CAP) -> Dict[State, Fraction]:
    """Exact law of the RBB successor of x, by full destination enumeration."""
    loads = x.loads
    n = x.n
    kappa = int(np.count_nonzero(loads))
    total = n**kappa
    if total > cap:
        raise ValueError(f"{total} destination tuples exceed cap {cap}")
    base = tuple(int(v) - (1 if v > 0 else 0) for v in loads)
    counts: Dict[State, int] = {}
    for tup in itertools.product(range(n), repeat=kappa):
        succ = list(base)
        for dest in tup:
            succ[dest] += 1
        key = tuple(succ)
        counts[key] = counts.get(key, 0) + 1
    return {s: Fraction(c, total) for s, c in counts.items()}


@dataclass(frozen=True)
class TransitionKernel:
    space: StateSpace
    rows: Tuple[Dict[int, float], ...]


def transition_kernel(space: StateSpace, cap: int = TUPLE_CAP) -> TransitionKernel:
    rows: List[Dict[int, float]] = []
    for s in space.states:
        dist = one_step_distribution(LoadVector.from_list(s), cap=cap)
        rows.append({space.index[succ]: float(p) for succ, p in dist.items()})
    return TransitionKernel(space=space, rows=tuple(rows))


def reachable_class(kernel: TransitionKernel, start: int) -> List[int]:
    """States reachable from `start`, sorted by state-space index."""
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for i in frontier:
            for j in kernel.rows[i]:
                if j not in seen:
                    seen.add(j)
                    nxt.append(j)
        frontier = nxt
    return sorted(seen)


def stationary_distribution(
    kernel: TransitionKernel,
    tol: float = 1e-12,
    start: int = 0,
    method: str = "power",
    max_iters: int = 2_000_000,
) -> np.ndarray:
    """Stationary vector on the class reachable from `start`.

    Returns a full-length vector over the state space, zero off the
    reachable class.  The default is power iteration on the lazy chain
    (I + P)/2, which has the same stationary distribution but no periodic
    cycling; a dense linear solve is available for up to 2000 states.
    """
    reach = reachable_class(kernel, start)
    # sanity: the class must be closed and mutually reachable from start;
    # irreducibility on the closed class is checked via backward reachability
    back = {j: set() for j in reach}
    for i in reach:
        for j in kernel.rows[i]:
            back[j].add(i)
    seen = {reach[0]}
    frontier = [reach[0]]
    while frontier:
        nxt = []
        for i in frontier:
            for j in back[i]:
                if j not in seen:
                    seen.add(j)
                    nxt.append(j)
        frontier = nxt
    if seen != set(reach):
        raise ValueError("chain is not irreducible on the reachable class")

    k = len(reach)
    pos = {s: i for i, s in enumerate(reach)}
    P = np.zeros((k, k))
    for i in reach:
        for j, p in kernel.rows[i].items():
            P[pos[i], pos[j]] = p

    if method == "dense":
        if k > 2000:
            raise ValueError("dense solve limited to 2000 states")
        A = np.vstack([P.T - np.eye(k), np.ones((1, k))])
        b = np.zeros(k + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
    elif method == "power":
        lazy = 0.5 * (np.eye(k) + P)
        pi = np.full(k, 1.0 / k)
        for _ in range(max_iters):
            nxt = pi @ lazy
            if np.abs(nxt - pi).sum() <= 0.25 * tol:
                pi = nxt
                break
            pi = nxt
        else:
            raise RuntimeError("power iteration did not converge")
        pi /= pi.sum()
    else:
        raise ValueError(f"unknown method {method!r}")

    if np.abs(pi @ P - pi).sum() > max(tol, 1e-10):
        raise RuntimeError("stationary residual exceeds tolerance")
    out = np.zeros(len(kernel.space))
    out[reach] = pi
    return out


# named observables usable with expected_observable -----------------------------

def obs_empty_count(state: State) -> float:
    return float(sum(1 for v in state if v == 0))


def obs_quadratic(state: State) -> float:
    return float(sum(v * v for v in state))


def obs_max_load(state: State) -> float:
    return float(max(state))


def make_obs_exponential(alpha: float) -> Callable[[State], float]:
    def phi(state: State) -> float:
        return float(sum(math.exp(alpha * v) for v in state))

    return phi


def expected_observable(dist, g: Callable[[State], float], space: Optional[StateSpace] = None) -> float:
    """E[g] under either a {state: prob} map or a stationary vector."""
    if isinstance(dist, dict):
        return float(sum(float(p) * g(s) for s, p in dist.items()))
    if space is None:
        raise ValueError("a stationary vector needs its state space")
    return float(sum(float(p) * g(s) for p, s in zip(dist, space.states)))
