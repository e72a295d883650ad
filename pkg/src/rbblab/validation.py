"""Runnable statistical and exact checks of the process's drift properties.

Each check returns a CheckReport carrying the decision statistic, the
threshold it was compared against, and the seed that reproduces the verdict.
Exact checks (tiny-instance drift inequalities, the binomial tail bound) are
violation-free assertions; statistical checks use 3-standard-error margins
for mean bounds and significance 0.001 for goodness of fit, with whp
statements tested as >= 95% success frequencies at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .engine import (
    InitialConfig,
    LoadVector,
    one_choice_run,
    rbb_step,
    successor_batch,
)
from .observables import (
    PotentialParams,
    default_params,
    exponential_drift_bound,
    exponential_potential,
    quadratic_drift_bound,
    quadratic_potential,
)
from .oracle import (
    make_obs_exponential,
    obs_quadratic,
    one_step_distribution,
    expected_observable,
)
from .rng import RandomSource

# destination-tuple budget below which drift checks use the exact oracle
EXACT_TUPLE_LIMIT = 10**4


@dataclass(frozen=True)
class ConfidenceInterval:
    mean: float
    half_width: float
    level: float
    samples: int

    def clamped(self) -> tuple[float, float]:
        lo = max(0.0, self.mean - self.half_width)
        hi = min(1.0, self.mean + self.half_width)
        return lo, hi


@dataclass(frozen=True)
class CheckReport:
    name: str
    verdict: str  # pass | fail | inconclusive
    statistic: float
    threshold: float
    detail: str
    seed: int

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


@dataclass(frozen=True)
class DriftWalkConfig:
    """A bounded integer walk with absorbing barriers at 0 and k."""

    M: int
    s: int
    k: int
    sigma2: float
    increment_law: str  # "symmetric_pm1" or "idealized_single_bin:<n>"

    def __post_init__(self):
        if not 0 < self.s < self.k <= self.M:
            raise ValueError("need 0 < s < k <= M")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")


# ---------------------------------------------------------------------------
# drift bounds

def check_quadratic_drift(
    config: LoadVector,
    samples: int,
    rng: RandomSource,
    bound_scale: float = 1.0,
) -> CheckReport:
    """E[quadratic potential after one round] against its drift bound.

    Tiny instances are compared exactly against the enumeration oracle;
    larger ones by Monte Carlo with a 3-SE margin.  `bound_scale` shrinks
    the bound for negative-control tests.
    """
    n, m = config.n, config.m
    F = int(np.count_nonzero(config.loads == 0))
    bound = quadratic_drift_bound(quadratic_potential(config), m, n, F)
    if n ** (n - F) <= EXACT_TUPLE_LIMIT:
        exact = sum(p * Fraction(sum(v * v for v in s)) for s, p in one_step_distribution(config).items())
        ok = exact <= bound * Fraction(bound_scale).limit_denominator(10**9)
        return CheckReport("quadratic_drift", _verdict(ok), float(exact),
                           float(bound) * bound_scale, f"exact oracle, n={n} m={m}", rng.master_seed)
    succ = successor_batch(config, samples, rng)
    ups = np.einsum("ij,ij->i", succ, succ).astype(np.float64)
    mean, se = float(ups.mean()), float(ups.std(ddof=1) / math.sqrt(samples))
    thresh = float(bound) * bound_scale + 3 * se
    return CheckReport("quadratic_drift", _verdict(mean <= thresh), mean, thresh,
                       f"MC n={n} m={m} samples={samples} se={se:.4g}", rng.master_seed)


def check_exponential_drift(
    config: LoadVector,
    alpha: float,
    samples: int,
    rng: RandomSource,
    bound_scale: float = 1.0,
) -> CheckReport:
    n, m = config.n, config.m
    kappa = int(np.count_nonzero(config.loads))
    phi = exponential_potential(config, alpha, mode="linear")
    bound = exponential_drift_bound(phi, alpha, n, kappa) * bound_scale
    if n ** kappa <= EXACT_TUPLE_LIMIT:
        exact = expected_observable(one_step_distribution(config), make_obs_exponential(alpha))
        # exact up to float rounding of e^alpha; allow 1 ulp-scale slack
        ok = exact <= bound * (1 + 1e-12)
        return CheckReport("exponential_drift", _verdict(ok), exact, bound,
                           f"exact oracle, n={n} m={m} alpha={alpha}", rng.master_seed)
    succ = successor_batch(config, samples, rng)
    phis = np.exp(alpha * succ.astype(np.float64)).sum(axis=1)
    mean, se = float(phis.mean()), float(phis.std(ddof=1) / math.sqrt(samples))
    thresh = bound + 3 * se
    return CheckReport("exponential_drift", _verdict(mean <= thresh), mean, thresh,
                       f"MC n={n} m={m} alpha={alpha} samples={samples}", rng.master_seed)


def check_supermartingale(
    n: int,
    m: int,
    t0: int = 0,
    params: Optional[PotentialParams] = None,
    samples: int = 2000,
    sampled_rounds: int = 20,
    trace_rounds: int = 200,
    rng: Optional[RandomSource] = None,
    inflate: float = 1.0,
) -> CheckReport:
    """Branching Monte Carlo check that the adjusted potential never rises.

    From a single-bin start, runs one trace, then at up to `sampled_rounds`
    rounds where the adjusted series is still positive, estimates the
    conditional mean of the next adjusted value by branching many one-step
    successors from the frozen state, requiring mean <= current + 3 SE.
    Rounds where the stabilization event has occurred contribute the exact
    comparison 0 <= current.  `inflate` scales the estimated mean for
    negative controls.
    """
    rng = rng or RandomSource()
    if params is None:
        p = default_params(n, m)
        alpha = p.practical_alpha
        params = PotentialParams(alpha=alpha, threshold=48.0 / alpha**2 * n,
                                 c_r=p.c_r, c_s=p.c_s, gamma=p.gamma, practical_alpha=alpha)
    alpha = params.alpha
    log_thresh = params.log_threshold

    # replay the trace at state level so frozen states are available
    init = InitialConfig("single_bin")
    state = init.build(n, m)
    states = [state]
    for t in range(trace_rounds):
        state, _ = rbb_step(state, rng, round=t + 1)
        states.append(state)

    worst_gap = -math.inf  # max over rounds of (estimated mean - current - 3 SE)
    checked = 0
    log_weight = 0.0
    stopped = False
    for s_idx in range(t0, trace_rounds + 1):
        st = states[s_idx]
        log_phi = math.log(exponential_potential(st, alpha, mode="linear"))
        if s_idx > t0:
            prev = states[s_idx - 1]
            f_prev = float(np.count_nonzero(prev.loads == 0)) / n
            log_weight += alpha * f_prev - 1.5 * alpha**2
        current = 0.0 if stopped else math.exp(log_phi + log_weight)
        if checked < sampled_rounds:
            checked += 1
            if stopped or log_phi <= log_thresh:
                # event holds: the next adjusted value is exactly 0
                worst_gap = max(worst_gap, 0.0 - current)
            else:
                succ = successor_batch(st, samples, rng)
                next_log_w = log_weight + alpha * (np.count_nonzero(st.loads == 0) / n) - 1.5 * alpha**2
                vals = np.exp(alpha * succ.astype(np.float64)).sum(axis=1) * math.exp(next_log_w)
                # successors below threshold stay positive at step s+1: the
                # indicator covers [t0, s+1) and E^{s+1} only zeroes later entries
                mean = float(vals.mean()) * inflate
                se = float(vals.std(ddof=1) / math.sqrt(samples)) * inflate
                worst_gap = max(worst_gap, mean - current - 3 * se)
        if log_phi <= log_thresh:
            stopped = True
    ok = worst_gap <= 0.0
    return CheckReport("supermartingale", _verdict(ok), worst_gap, 0.0,
                       f"n={n} m={m} alpha={alpha:.4g} rounds_checked={checked}", rng.master_seed)


# ---------------------------------------------------------------------------
# coupling, tails, change bounds

def check_coupling_dominance(
    n: int,
    m: int,
    rounds: int,
    reps: int,
    rng: RandomSource,
    decouple: bool = False,
) -> CheckReport:
    """Zero dominance violations over coupled traces started from x = y.

    With `decouple=True` the two copies use independent samples (negative
    control; dominance then breaks almost surely).
    """
    from .engine import _apply_rbb
    from .rng import UniformBuffer

    violations = 0
    for rep in range(reps):
        rep_rng = rng.stream(rep)
        other = UniformBuffer(rng.stream(reps + rep), n) if decouple else None
        start = one_choice_run(n, m, rep_rng)
        xl = start.loads.copy()
        yl = xl.copy()
        buf = UniformBuffer(rep_rng, n)
        for _ in range(rounds):
            draws = buf.take(n)
            kappa = int(np.count_nonzero(xl))
            _apply_rbb(xl, draws[:kappa])
            _apply_rbb(yl, other.take(n) if decouple else draws)
            if np.any(xl > yl):
                violations += 1
                break
    return CheckReport("coupling_dominance", _verdict(violations == 0), float(violations), 0.0,
                       f"n={n} m={m} rounds={rounds} reps={reps}", rng.master_seed)


def check_binomial_bound(n_lo: int = 8, n_hi: int = 128) -> CheckReport:
    """Exact: P[Bin(n, 1/n) = gamma] <= 2^-gamma for all gamma in [1, n]."""
    if n_lo < 8 or n_hi > 10**4 or n_lo > n_hi:
        raise ValueError("range must lie within [8, 10^4]")
    violations = 0
    worst = 0.0
    for n in range(n_lo, n_hi + 1):
        p = Fraction(1, n)
        q = 1 - p
        # pmf(gamma) built incrementally in exact rationals
        pmf = math.comb(n, 1) * p * q ** (n - 1)
        for gamma in range(1, n + 1):
            if gamma > 1:
                pmf = pmf * (n - gamma + 1) * p / (gamma * q)
            ratio = pmf * 2**gamma
            worst = max(worst, float(ratio))
            if ratio > 1:
                violations += 1
    return CheckReport("binomial_bound", _verdict(violations == 0), worst, 1.0,
                       f"n in [{n_lo}, {n_hi}], exact pmf", 0)


def check_quadratic_change(config: LoadVector, samples: int, rng: RandomSource) -> CheckReport:
    """One-round |change of quadratic potential| against 2 m log n + 3n.

    The bound is a whp statement under max load <= (m/n) log n; the check
    requires a violation fraction of at most 1e-3.
    """
    n, m = config.n, config.m
    if n > 1 and float(config.loads.max()) > (m / n) * math.log(n):
        raise ValueError("config violates the max-load hypothesis")
    ups0 = float(quadratic_potential(config))
    succ = successor_batch(config, samples, rng)
    ups1 = np.einsum("ij,ij->i", succ, succ).astype(np.float64)
    bound = 2.0 * m * math.log(max(n, 2)) + 3.0 * n
    frac = float((np.abs(ups1 - ups0) > bound).mean())
    return CheckReport("quadratic_change", _verdict(frac <= 1e-3), frac, 1e-3,
                       f"n={n} m={m} samples={samples} bound={bound:.1f}", rng.master_seed)


# ---------------------------------------------------------------------------
# walks and OneChoice

def _run_walk(cfg: DriftWalkConfig, rng: RandomSource, max_steps: int = 10**6) -> tuple[int, int]:
    """One walk until absorption; returns (final value flag 0-hit, steps)."""
    x = cfg.s
    gen = rng.generator
    if cfg.increment_law == "symmetric_pm1":
        for step in range(1, max_steps + 1):
            x += 1 if gen.integers(0, 2) else -1
            if x <= 0:
                return 1, step
            if x >= cfg.k:
                return 0, step
    elif cfg.increment_law.startswith("idealized_single_bin:"):
        n = int(cfg.increment_law.split(":")[1])
        for step in range(1, max_steps + 1):
            x = x - (1 if x > 0 else 0) + int(gen.binomial(n, 1.0 / n))
            x = min(x, cfg.M)
            if x <= 0:
                return 1, step
            if x >= cfg.k:
                return 0, step
    else:
        raise ValueError(f"unknown increment law {cfg.increment_law!r}")
    raise RuntimeError("walk did not absorb within max_steps")


def check_drift_lemmas(cfg: DriftWalkConfig, reps: int, rng: RandomSource) -> CheckReport:
    """Hitting statistics of a bounded drift walk against the closed bounds.

    Requires P[absorb at 0] >= 1 - s/k - 3 SE and mean absorption time
    <= 5 s^2 / sigma^2.
    """
    zeros = 0
    steps = np.empty(reps, dtype=np.float64)
    for rep in range(reps):
        hit0, t = _run_walk(cfg, rng.stream(rep))
        zeros += hit0
        steps[rep] = t
    p_hat = zeros / reps
    se_p = math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / reps)
    p_bound = 1 - cfg.s / cfg.k
    tau_hat = float(steps.mean())
    tau_bound = 5 * cfg.s**2 / cfg.sigma2
    ok = (p_hat >= p_bound - 3 * se_p) and (tau_hat <= tau_bound)
    detail = (f"{cfg.increment_law} s={cfg.s} k={cfg.k}: "
              f"P0={p_hat:.4f} (>= {p_bound:.4f} - 3*{se_p:.4f}), "
              f"Etau={tau_hat:.2f} (<= {tau_bound:.2f})")
    return CheckReport("drift_lemmas", _verdict(ok), p_hat, p_bound, detail, rng.master_seed)


def check_one_choice(n: int, c: float, reps: int, rng: RandomSource) -> CheckReport:
    """Heavily loaded OneChoice max-load lower tail and quadratic upper tail.

    With ceil(c n ln n) balls, the max load must reach (c + sqrt(c)/10) ln n
    in at least 95% of runs; with n balls, the quadratic potential must stay
    <= 3n in at least 99% of runs.
    """
    if c < 1.0 / math.log(n):
        raise ValueError("need c >= 1/ln n")
    balls = math.ceil(c * n * math.log(n))
    target = (c + math.sqrt(c) / 10.0) * math.log(n)
    if target > balls:
        raise ValueError("target max load exceeds the number of balls")
    max_hits = 0
    ups_hits = 0
    for rep in range(reps):
        r = rng.stream(rep)
        heavy = one_choice_run(n, balls, r)
        if float(heavy.loads.max()) >= target:
            max_hits += 1
        light = one_choice_run(n, n, r)
        if quadratic_potential(light) <= 3 * n:
            ups_hits += 1
    ok = (max_hits >= math.ceil(0.95 * reps)) and (ups_hits >= math.ceil(0.99 * reps))
    detail = f"n={n} c={c}: max-load hits {max_hits}/{reps}, upsilon<=3n hits {ups_hits}/{reps}"
    return CheckReport("one_choice", _verdict(ok), float(max_hits) / reps, 0.95, detail, rng.master_seed)


def chi_square_step(
    config: LoadVector,
    samples: int,
    rng: RandomSource,
    bias: float = 0.0,
) -> CheckReport:
    """Goodness of fit of simulated one-step successors to the exact law.

    `bias` mixes a point mass on bin 0 into the destination draws (negative
    control for the harness itself).
    """
    dist = one_step_distribution(config)
    n = config.n
    if len(dist) == 1:
        return CheckReport("chi_square_step", "pass", 0.0, 0.0,
                           f"single outcome, n={n} m={config.m}", rng.master_seed)
    succ = successor_batch(config, samples, rng)
    if bias > 0.0:
        flip = rng.generator.random(samples) < bias
        kappa = int(np.count_nonzero(config.loads))
        base = config.loads - (config.loads > 0)
        forced = base.copy()
        forced[0] += kappa
        succ[flip] = forced
    radix = config.m + n + 1
    codes = succ @ (radix ** np.arange(n, dtype=np.int64))
    states = sorted(dist)
    exp_codes = np.array([sum(v * radix**i for i, v in enumerate(s)) for s in states])
    observed = np.array([(codes == ec).sum() for ec in exp_codes], dtype=np.float64)
    expected = np.array([float(dist[s]) * samples for s in states])
    stat = float(((observed - expected) ** 2 / expected).sum())
    dof = len(states) - 1
    crit = float(stats.chi2.ppf(0.999, dof))
    tail_mass = samples - observed.sum()  # impossible successors observed
    ok = stat <= crit and tail_mass == 0
    return CheckReport("chi_square_step", _verdict(ok), stat, crit,
                       f"n={n} m={config.m} samples={samples} dof={dof}", rng.master_seed)


# ---------------------------------------------------------------------------
# registry for the CLI `check` subcommand

def _default_quadratic(seed: int) -> CheckReport:
    rng = RandomSource(seed, 1)
    cfg = one_choice_run(50, 200, rng.stream(999))
    return check_quadratic_drift(cfg, samples=10**5, rng=rng)


def _default_exponential(seed: int) -> CheckReport:
    rng = RandomSource(seed, 2)
    cfg = one_choice_run(50, 200, rng.stream(999))
    return check_exponential_drift(cfg, alpha=50 / (8 * 200), samples=10**5, rng=rng)


def _default_supermartingale(seed: int) -> CheckReport:
    return check_supermartingale(n=20, m=100, rng=RandomSource(seed, 3))


def _default_coupling(seed: int) -> CheckReport:
    return check_coupling_dominance(n=8, m=32, rounds=200, reps=50, rng=RandomSource(seed, 4))


def _default_binomial(seed: int) -> CheckReport:
    return check_binomial_bound(8, 128)


def _default_quadratic_change(seed: int) -> CheckReport:
    rng = RandomSource(seed, 5)
    cfg = InitialConfig("uniform").build(100, 1000)
    return check_quadratic_change(cfg, samples=10**5, rng=rng)


def _default_drift_lemmas(seed: int) -> CheckReport:
    cfg = DriftWalkConfig(M=100, s=3, k=6, sigma2=1.0, increment_law="symmetric_pm1")
    return check_drift_lemmas(cfg, reps=4000, rng=RandomSource(seed, 6))


def _default_one_choice(seed: int) -> CheckReport:
    return check_one_choice(n=1000, c=1.0, reps=100, rng=RandomSource(seed, 7))


def _default_chi_square(seed: int) -> CheckReport:
    rng = RandomSource(seed, 8)
    return chi_square_step(LoadVector.from_list([2, 1, 0]), samples=10**5, rng=rng)


def _negative_control(seed: int) -> CheckReport:
    # deliberately biased sampler; must fail, guarding against vacuous passes
    rng = RandomSource(seed, 9)
    return chi_square_step(LoadVector.from_list([2, 1, 0]), samples=10**5, rng=rng, bias=0.05)


CHECKS: Dict[str, Callable[[int], CheckReport]] = {
    "quadratic_drift": _default_quadratic,
    "exponential_drift": _default_exponential,
    "supermartingale": _default_supermartingale,
    "coupling_dominance": _default_coupling,
    "binomial_bound": _default_binomial,
    "quadratic_change": _default_quadratic_change,
    "drift_lemmas": _default_drift_lemmas,
    "one_choice": _default_one_choice,
    "chi_square_step": _default_chi_square,
    "negative_control": _negative_control,
}

DEFAULT_SUITE = [k for k in CHECKS if k != "negative_control"]


def run_checks(selection: Sequence[str], seed: int) -> List[CheckReport]:
    names = list(selection) if selection else list(DEFAULT_SUITE)
    unknown = [s for s in names if s not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}")
    return [CHECKS[name](seed) for name in names]
