"""Potential functions, empty-bin statistics and one-round drift bounds.

All functions here are pure and operate on load vectors or recorded traces.
The exponential potential defaults to log-domain evaluation: with worst-case
single-bin starts the linear value e^(alpha*m) overflows for the alpha values
used in harness sweeps, while the log-domain value is always representable.
Natural log is used everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .engine import EmptyStats, LoadVector, Trace, _quadratic

# Constants from the drift analysis of the process.  The smoothing parameter
# is alpha = n / (2*384*744*m); the stabilization threshold for the
# exponential potential is 48/alpha^2 * n.
ALPHA_DENOM = 2 * 384 * 744
C_R = 16 * 384**2 * 744**2


@dataclass(frozen=True)
class PotentialParams:
    """Smoothing parameter and derived constants for the exponential potential."""

    alpha: float
    threshold: float
    c_r: float
    c_s: float
    gamma: float
    practical_alpha: float

    @property
    def log_threshold(self) -> float:
        return math.log(self.threshold)


def default_params(n: int, m: int, k: int = 1) -> PotentialParams:
    """Analysis constants for an (n, m) instance.

    `alpha` and `c_r`/`c_s` are the constants of the convergence analysis;
    they are deliberately conservative and make the stabilization event
    nearly vacuous at desk scale.  `practical_alpha = n/(8m)` is the preset
    used by the statistical checks.
    """
    if n < 1 or m < 1 or k < 1:
        raise ValueError("need n, m, k >= 1")
    alpha = n / (ALPHA_DENOM * m)
    return PotentialParams(
        alpha=alpha,
        threshold=48.0 / alpha**2 * n,
        c_r=float(C_R),
        c_s=float(8 * k * C_R),
        gamma=n / (4 * m),
        practical_alpha=n / (8 * m),
    )


def empty_stats(x: LoadVector) -> EmptyStats:
    F = int(np.count_nonzero(x.loads == 0))
    return EmptyStats(F=F, kappa=x.n - F, n=x.n)


def quadratic_potential(x: LoadVector) -> int:
    """Sum of squared loads, exact."""
    return _quadratic(x.loads)


def exponential_potential(x: LoadVector, alpha: float, mode: str = "linear") -> float:
    """Sum of e^(alpha * load) over bins.

    `linear` returns the sum itself and raises OverflowError when
    alpha * max_load exceeds the float exponent range; `log_domain` returns
    the log of the sum via a max-shifted summation that cannot overflow.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    z = alpha * x.loads.astype(np.float64)
    if mode == "log_domain":
        return float(logsumexp(z))
    if mode == "linear":
        if float(z.max(initial=0.0)) > math.log(np.finfo(np.float64).max):
            raise OverflowError("alpha * max_load exceeds float range; use log_domain")
        return float(np.exp(z).sum())
    raise ValueError(f"unknown mode {mode!r}")


def quadratic_drift_bound(upsilon: int, m: int, n: int, F: int) -> Fraction:
    """Upper bound on E[quadratic potential after one RBB round].

    Exact rational arithmetic so that tiny-instance oracle comparisons are
    exact inequalities, not float ones.
    """
    if min(upsilon, m, n, F) < 0 or F > n:
        raise ValueError("inputs must be non-negative with F <= n")
    return Fraction(upsilon) - Fraction(2 * m, n) * F + 2 * n


def exponential_drift_bound(phi: float, alpha: float, n: int, kappa: int) -> float:
    """Upper bound on E[exponential potential after one RBB round]."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not 0 <= kappa <= n:
        raise ValueError("need 0 <= kappa <= n")
    growth = math.exp((math.exp(alpha) - 1.0) * kappa / n)
    return phi * math.exp(-alpha) * growth + (n - kappa) * growth


def aggregate_empty(trace: Trace, t0: int, t1: int) -> int:
    """Inclusive sum of empty-bin counts over rounds [t0, t1]."""
    if not 0 <= t0 <= t1 < len(trace):
        raise ValueError("need 0 <= t0 <= t1 within the trace")
    return int(trace.F[t0 : t1 + 1].sum())


@dataclass
class AdjustedSeries:
    """The stopped, reweighted exponential potential along a trace.

    Entry s holds Phi^s * exp(sum_{t<s} (alpha*f^t - 1.5*alpha^2)) while the
    potential has stayed above the stabilization threshold since t0, and
    exactly 0 from the first round the threshold is hit.  Values are kept in
    log domain; `values` exponentiates on demand.
    """

    t0: int
    log_values: np.ndarray  # -inf encodes a stopped (zero) entry
    stopped: np.ndarray
    empty_aggregate: np.ndarray

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_values)


def adjusted_potential_series(trace: Trace, t0: int, params: PotentialParams) -> AdjustedSeries:
    if trace.log_phi is None:
        raise ValueError("trace was recorded without the exponential observer")
    if not 0 <= t0 < len(trace):
        raise ValueError("t0 outside trace range")
    if trace.alpha is None or not math.isclose(trace.alpha, params.alpha, rel_tol=1e-12):
        raise ValueError("trace alpha does not match params.alpha")

    alpha = params.alpha
    log_thresh = params.log_threshold
    T = len(trace) - t0
    log_vals = np.full(T, -np.inf)
    stopped = np.zeros(T, dtype=bool)
    agg = np.zeros(T, dtype=np.int64)

    log_weight = 0.0
    halted = False
    running_F = 0
    for s in range(T):
        t = t0 + s
        if s > 0:
            running_F += int(trace.F[t - 1])
        agg[s] = running_F
        if halted:
            stopped[s] = True
            continue
        log_vals[s] = float(trace.log_phi[t]) + log_weight
        # the indicator covers [t0, s), so the value at the halting round
        # itself is still recorded; only later entries are zero
        if float(trace.log_phi[t]) <= log_thresh:
            halted = True
            stopped[s] = True
        f_t = trace.F[t] / trace.n
        log_weight += alpha * f_t - 1.5 * alpha**2
    return AdjustedSeries(t0=t0, log_values=log_vals, stopped=stopped, empty_aggregate=agg)


def max_load_from_potential(log_phi: float, alpha: float) -> float:
    """The max-load certificate: every load is at most log(Phi)/alpha."""
    return log_phi / alpha
