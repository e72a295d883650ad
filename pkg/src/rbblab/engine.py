"""Step semantics for the repeated balls-into-bins process and its relatives.

Conventions (fixed for reproducibility):

* Bins are indexed ``0..n-1``.
* Within a round, removals and arrivals are simultaneous: each non-empty bin
  loses exactly one ball and the re-allocated balls land independently and
  uniformly, as a single net update.
* Destinations are drawn in ascending order of the source bin index, so the
  j-th draw of a round belongs to the j-th non-empty bin.  This makes the
  "first kappa of n shared samples" prefix rule of the dominance coupling
  well defined.
* Loads are int64; the total ball count is capped at 2**40 so that the
  quadratic potential never overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .rng import RandomSource, UniformBuffer

MAX_BALLS = 2**40


@dataclass(frozen=True)
class LoadVector:
    """Bin occupancy counts; the state of every process in this package."""

    loads: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.loads, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("loads must be a non-empty 1-d array")
        if np.any(arr < 0):
            raise ValueError("loads must be non-negative")
        if int(arr.sum()) > MAX_BALLS:
            raise ValueError(f"total ball count exceeds cap {MAX_BALLS}")
        object.__setattr__(self, "loads", arr)

    @property
    def n(self) -> int:
        return int(self.loads.size)

    @property
    def m(self) -> int:
        return int(self.loads.sum())

    @classmethod
    def from_list(cls, loads: Sequence[int]) -> "LoadVector":
        return cls(np.asarray(loads, dtype=np.int64))


class SampleBatch(NamedTuple):
    """The uniform destination draws of one round, in source-bin order."""

    destinations: np.ndarray
    round: int


@dataclass(frozen=True)
class InitialConfig:
    """How the m balls are placed at round 0.

    ``uniform`` gives each bin floor(m/n) balls and hands the remainder to
    the lowest-indexed bins, one each.  ``single_bin`` stacks all m balls in
    bin 0 (the worst-case start).  ``explicit`` uses the given loads.
    """

    kind: str = "uniform"
    explicit_loads: Optional[Sequence[int]] = None

    def build(self, n: int, m: int) -> LoadVector:
        if n < 1 or m < 0:
            raise ValueError("need n >= 1 and m >= 0")
        if self.kind == "uniform":
            loads = np.full(n, m // n, dtype=np.int64)
            loads[: m % n] += 1
        elif self.kind == "single_bin":
            loads = np.zeros(n, dtype=np.int64)
            loads[0] = m
        elif self.kind == "explicit":
            if self.explicit_loads is None:
                raise ValueError("explicit init requires explicit_loads")
            loads = np.asarray(self.explicit_loads, dtype=np.int64)
            if loads.size != n:
                raise ValueError(f"explicit loads have length {loads.size}, expected {n}")
            if int(loads.sum()) != m:
                raise ValueError(f"explicit loads sum to {int(loads.sum())}, expected {m}")
        else:
            raise ValueError(f"unknown init kind {self.kind!r}")
        return LoadVector(loads)


def _apply_rbb(loads: np.ndarray, draws: np.ndarray) -> None:
    """In-place net update: every non-empty bin loses one, draws arrive."""
    loads -= loads > 0
    loads += np.bincount(draws, minlength=loads.size)


def rbb_step(state: LoadVector, rng: RandomSource, round: int = 0) -> tuple[LoadVector, SampleBatch]:
    """One round of RBB: re-allocate one ball from each non-empty bin."""
    loads = state.loads.copy()
    kappa = int(np.count_nonzero(loads))
    draws = rng.integers(state.n, size=kappa)
    _apply_rbb(loads, draws)
    return LoadVector(loads), SampleBatch(draws, round)


def idealized_step(state: LoadVector, rng: RandomSource, round: int = 0) -> tuple[LoadVector, SampleBatch]:
    """One round of the idealized process: always throw exactly n balls.

    Empty bins mint nothing to remove but still receive, so the total may
    grow by the number of empty bins.
    """
    loads = state.loads.copy()
    draws = rng.integers(state.n, size=state.n)
    _apply_rbb(loads, draws)
    return LoadVector(loads), SampleBatch(draws, round)


def coupled_step(x: LoadVector, y: LoadVector, rng: RandomSource) -> tuple[LoadVector, LoadVector]:
    """One shared-sample step of the (RBB, idealized) dominance coupling.

    A single batch of n destinations is drawn; the idealized copy applies
    all of them, the RBB copy only the first kappa(x).  Coordinate-wise
    dominance x <= y is required on input and preserved on output.
    """
    if x.n != y.n:
        raise ValueError("coupled vectors must have equal n")
    if np.any(x.loads > y.loads):
        raise ValueError("coupling precondition violated: x <= y must hold")
    draws = rng.integers(x.n, size=x.n)
    xl = x.loads.copy()
    yl = y.loads.copy()
    kappa_x = int(np.count_nonzero(xl))
    _apply_rbb(xl, draws[:kappa_x])
    _apply_rbb(yl, draws)
    return LoadVector(xl), LoadVector(yl)


def one_choice_run(n: int, balls: int, rng: RandomSource) -> LoadVector:
    """Throw `balls` balls independently and uniformly into n empty bins."""
    if n < 1:
        raise ValueError("need n >= 1")
    draws = rng.integers(n, size=balls)
    return LoadVector(np.bincount(draws, minlength=n).astype(np.int64))


# ---------------------------------------------------------------------------
# Traces

OBSERVERS = ("empty", "quadratic", "exponential", "max_load")


class EmptyStats(NamedTuple):
    """Empty-bin statistics of one configuration."""

    F: int
    kappa: int
    n: int

    @property
    def f(self):
        from fractions import Fraction

        return Fraction(self.F, self.n)


class ObservationRow(NamedTuple):
    """Per-round snapshot.  `exponential` is the log-domain potential."""

    round: int
    empty: EmptyStats
    quadratic: Optional[int]
    exponential: Optional[float]
    max_load: Optional[int]


@dataclass
class Trace:
    """Columnar sequence of ObservationRow; indexable like a list."""

    n: int
    m: int
    rounds: np.ndarray
    F: np.ndarray
    quadratic: Optional[np.ndarray]
    log_phi: Optional[np.ndarray]
    max_load: Optional[np.ndarray]
    alpha: Optional[float] = None

    def __len__(self) -> int:
        return len(self.rounds)

    def __getitem__(self, i: int) -> ObservationRow:
        if isinstance(i, slice):
            raise TypeError("Trace supports integer indexing only")
        F = int(self.F[i])
        return ObservationRow(
            round=int(self.rounds[i]),
            empty=EmptyStats(F, self.n - F, self.n),
            quadratic=int(self.quadratic[i]) if self.quadratic is not None else None,
            exponential=float(self.log_phi[i]) if self.log_phi is not None else None,
            max_load=int(self.max_load[i]) if self.max_load is not None else None,
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _quadratic(loads: np.ndarray) -> int:
    mx = int(loads.max(initial=0))
    if mx * mx * loads.size < 2**62:
        return int(np.dot(loads, loads))
    return sum(int(v) ** 2 for v in loads)  # exact fallback for huge loads


def run_trace(
    process: str,
    n: int,
    m: int,
    init: InitialConfig,
    rounds: int,
    rng: RandomSource,
    observers: Optional[Iterable[str]] = None,
    alpha: Optional[float] = None,
) -> Trace:
    """Run `rounds` steps and record one observation row per round.

    Row 0 describes the initial configuration.  Fully deterministic given
    the random source; observer evaluation never mutates engine state.
    By default all observers are recorded, minus the exponential one when
    no alpha is given.
    """
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    if observers is None:
        observers = OBSERVERS if alpha is not None else tuple(
            o for o in OBSERVERS if o != "exponential")
    observers = tuple(observers)
    unknown = set(observers) - set(OBSERVERS)
    if unknown:
        raise ValueError(f"unknown observers: {sorted(unknown)}")
    want_quad = "quadratic" in observers
    want_exp = "exponential" in observers
    want_max = "max_load" in observers
    if want_exp and alpha is None:
        raise ValueError("exponential observer requires alpha")
    if process == "rbb":
        throws = None
    elif process == "idealized":
        throws = n
    else:
        raise ValueError(f"unknown process {process!r}")

    loads = init.build(n, m).loads.copy()
    buf = UniformBuffer(rng, n)

    T = rounds + 1
    F_col = np.empty(T, dtype=np.int64)
    max_col = np.empty(T, dtype=np.int64) if want_max else None
    quad_col = np.empty(T, dtype=np.int64) if want_quad else None
    phi_col = np.empty(T, dtype=np.float64) if want_exp else None

    from scipy.special import logsumexp

    for t in range(T):
        kappa = int(np.count_nonzero(loads))
        F_col[t] = n - kappa
        if want_max:
            max_col[t] = loads.max()
        if want_quad:
            quad_col[t] = _quadratic(loads)
        if want_exp:
            phi_col[t] = logsumexp(alpha * loads)
        if t < rounds:
            draws = buf.take(n if throws is not None else kappa)
            _apply_rbb(loads, draws)

    return Trace(n=n, m=m, rounds=np.arange(T, dtype=np.int64), F=F_col,
                 quadratic=quad_col, log_phi=phi_col, max_load=max_col, alpha=alpha)


def run_steps(loads: np.ndarray, rounds: int, buf: UniformBuffer) -> np.ndarray:
    """Advance an RBB load array in place for `rounds` rounds (fast path)."""
    for _ in range(rounds):
        kappa = int(np.count_nonzero(loads))
        _apply_rbb(loads, buf.take(kappa))
    return loads


def successor_batch(state: LoadVector, samples: int, rng: RandomSource) -> np.ndarray:
    """`samples` independent one-step RBB successors of a fixed state.

    Returns a (samples, n) int64 array.  Uses the same per-ball destination
    semantics as `rbb_step`, vectorized across samples.
    """
    loads = state.loads
    n = state.n
    kappa = int(np.count_nonzero(loads))
    base = loads - (loads > 0)
    if kappa == 0:
        return np.tile(base, (samples, 1))
    draws = rng.integers(n, size=(samples, kappa))
    flat = (np.arange(samples)[:, None] * n + draws).ravel()
    counts = np.bincount(flat, minlength=samples * n).reshape(samples, n)
    return base[None, :] + counts
