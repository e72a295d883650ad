"""Experiment configurations, grid expansion, and CSV/JSON result writers.

Each experiment expands an (n, m) grid times `reps` repetitions, assigns every
repetition a stream id equal to its flat index in the sorted grid, optionally
fans repetitions out across threads, and then sorts rows by (n, m, rep) before
writing.  Identical config and seed therefore yield byte-identical files for
any thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .engine import InitialConfig, _apply_rbb, run_trace
from .rng import DEFAULT_SEED, RandomSource, UniformBuffer
from .traversal import TieBreakPolicy, cover_times

HEADERS: Dict[str, Sequence[str]] = {
    "max_load": ("n", "m", "rounds", "rep", "seed", "max_load", "normalized"),
    "empty_fraction": ("n", "m", "rounds", "burn_in", "rep", "seed", "mean_f", "ci_low", "ci_high"),
    "convergence": ("n", "m", "threshold", "rep", "seed", "rounds_to_converge", "capped"),
    "traversal": ("n", "m", "rep", "seed", "max_cover", "min_cover", "covered_fraction"),
    "checks": ("name", "verdict", "statistic", "threshold", "seed"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid, budget and output settings for one experiment run."""

    experiment: str
    n_list: Tuple[int, ...] = (100,)
    m_list: Tuple[int, ...] = ()
    m_mult: Tuple[float, ...] = ()
    rounds: int = 10**5
    reps: int = 25
    seed: int = DEFAULT_SEED
    init: InitialConfig = field(default_factory=InitialConfig)
    alpha_preset: str = "practical"
    threshold_factor: float = 1.5
    burn_in: Optional[int] = None
    cap: Optional[int] = None
    tie_break: str = "by_ball_id"
    threads: int = 1

    def __post_init__(self):
        if self.reps < 1 or self.rounds < 0 or self.threshold_factor <= 0:
            raise ValueError("need reps >= 1, rounds >= 0, threshold_factor > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def pairs(self) -> List[Tuple[int, int]]:
        """The sorted (n, m) grid expanded from n_list x (m_list + m_mult)."""
        out = set()
        for n in self.n_list:
            if n < 1:
                raise ValueError("every n must be >= 1")
            for m in self.m_list:
                out.add((n, int(m)))
            for k in self.m_mult:
                out.add((n, int(round(k * n))))
        if not out:
            raise ValueError("empty grid: give m values or multipliers")
        if any(m < 0 for _, m in out):
            raise ValueError("every m must be >= 0")
        return sorted(out)

    def jobs(self) -> List[Tuple[int, int, int, int]]:
        """(n, m, rep, stream_id) for every repetition, in output order."""
        grid = self.pairs()
        return [(n, m, rep, idx * self.reps + rep)
                for idx, (n, m) in enumerate(grid) for rep in range(self.reps)]


def _fan_out(cfg: ExperimentConfig, job: Callable[[Tuple[int, int, int, int]], dict]) -> List[dict]:
    jobs = cfg.jobs()
    if cfg.threads == 1:
        rows = [job(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(job, jobs))
    rows.sort(key=lambda r: (r["n"], r["m"], str(r["rep"])))
    return rows


# ---------------------------------------------------------------------------
# experiments

def experiment_max_load(cfg: ExperimentConfig) -> List[dict]:
    """Final max load after `rounds` RBB steps, plus a per-(n, m) mean row.

    `normalized` is max_load / ((m/n) * ln n); the summary row has
    rep = "mean" and averages both columns across repetitions.
    """

    def one(args: Tuple[int, int, int, int]) -> dict:
        n, m, rep, sid = args
        rng = RandomSource(cfg.seed, sid)
        loads = cfg.init.build(n, m).loads.copy()
        buf = UniformBuffer(rng, n)
        for _ in range(cfg.rounds):
            kappa = int(np.count_nonzero(loads))
            _apply_rbb(loads, buf.take(kappa))
        mx = int(loads.max())
        scale = (m / n) * math.log(n) if (m > 0 and n > 1) else float("nan")
        return {"n": n, "m": m, "rounds": cfg.rounds, "rep": rep, "seed": cfg.seed,
                "max_load": mx, "normalized": mx / scale if scale == scale else ""}

    rows = _fan_out(cfg, one)
    summary = []
    for (n, m) in cfg.pairs():
        group = [r for r in rows if r["n"] == n and r["m"] == m]
        norm = [r["normalized"] for r in group if r["normalized"] != ""]
        summary.append({"n": n, "m": m, "rounds": cfg.rounds, "rep": "mean", "seed": cfg.seed,
                        "max_load": sum(r["max_load"] for r in group) / len(group),
                        "normalized": sum(norm) / len(norm) if norm else ""})
    rows.extend(summary)
    rows.sort(key=lambda r: (r["n"], r["m"], str(r["rep"])))
    return rows


def experiment_empty_fraction(cfg: ExperimentConfig) -> List[dict]:
    """Time-averaged empty-bin fraction over [burn_in, rounds] per repetition.

    The confidence interval is a 95% normal interval on the per-round mean,
    clamped to [0, 1]; burn_in defaults to rounds // 10.
    """
    burn_in = cfg.rounds // 10 if cfg.burn_in is None else cfg.burn_in
    if not 0 <= burn_in < cfg.rounds + 1:
        raise ValueError("need 0 <= burn_in <= rounds")

    def one(args: Tuple[int, int, int, int]) -> dict:
        n, m, rep, sid = args
        rng = RandomSource(cfg.seed, sid)
        trace = run_trace("rbb", n, m, cfg.init, cfg.rounds, rng, observers=("empty",))
        f = trace.F[burn_in:].astype(np.float64) / n
        mean = float(f.mean())
        se = float(f.std(ddof=1) / math.sqrt(f.size)) if f.size > 1 else 0.0
        return {"n": n, "m": m, "rounds": cfg.rounds, "burn_in": burn_in, "rep": rep,
                "seed": cfg.seed, "mean_f": mean,
                "ci_low": max(0.0, mean - 1.96 * se), "ci_high": min(1.0, mean + 1.96 * se)}

    return _fan_out(cfg, one)


def experiment_convergence(cfg: ExperimentConfig) -> List[dict]:
    """First round at which max load drops to threshold_factor*(m/n)*ln n.

    Starts from the single-bin worst case; `rounds` is the cap.  Repetitions
    that never reach the threshold report an empty rounds_to_converge and
    capped=True rather than the cap value.
    """
    init = cfg.init if cfg.init.kind != "uniform" else InitialConfig("single_bin")

    def one(args: Tuple[int, int, int, int]) -> dict:
        n, m, rep, sid = args
        threshold = cfg.threshold_factor * (m / n) * math.log(n) if n > 1 else float(m)
        rng = RandomSource(cfg.seed, sid)
        loads = init.build(n, m).loads.copy()
        buf = UniformBuffer(rng, n)
        hit: Optional[int] = None
        if int(loads.max()) <= threshold:
            hit = 0
        else:
            for t in range(1, cfg.rounds + 1):
                kappa = int(np.count_nonzero(loads))
                _apply_rbb(loads, buf.take(kappa))
                if int(loads.max()) <= threshold:
                    hit = t
                    break
        return {"n": n, "m": m, "threshold": threshold, "rep": rep, "seed": cfg.seed,
                "rounds_to_converge": hit if hit is not None else "",
                "capped": hit is None}

    return _fan_out(cfg, one)


def experiment_traversal(cfg: ExperimentConfig) -> List[dict]:
    """Per-repetition max/min per-ball cover rounds and covered fraction.

    The round cap defaults to 60 * m * ln m.  With uncovered balls the max
    (and possibly min) cover round is reported empty, never as the cap.
    """
    policy = TieBreakPolicy(cfg.tie_break)

    def one(args: Tuple[int, int, int, int]) -> dict:
        n, m, rep, sid = args
        cap = cfg.cap if cfg.cap is not None else int(60 * m * math.log(max(m, 2)))
        rng = RandomSource(cfg.seed, sid)
        times = cover_times(n, m, cfg.init, policy, cap, rng)
        covered = [t for t in times if t is not None]
        frac = len(covered) / m if m else 1.0
        return {"n": n, "m": m, "rep": rep, "seed": cfg.seed,
                "max_cover": max(covered) if len(covered) == m and m else "",
                "min_cover": min(covered) if covered else "",
                "covered_fraction": frac}

    return _fan_out(cfg, one)


# ---------------------------------------------------------------------------
# writers

def _format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Iterable[dict], experiment: str) -> str:
    header = HEADERS[experiment]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(row[c]) for c in header])
    return buf.getvalue()


def rows_to_json(rows: Iterable[dict], experiment: str) -> str:
    header = HEADERS[experiment]
    out = [{c: row[c] for c in header} for row in rows]
    return json.dumps(out, indent=2, sort_keys=False) + "\n"


def write_rows(rows: List[dict], experiment: str, path: str, format: str = "csv") -> None:
    if format == "csv":
        text = rows_to_csv(rows, experiment)
    elif format == "json":
        text = rows_to_json(rows, experiment)
    else:
        raise ValueError(f"unknown format {format!r}")
    with open(path, "w", newline="") as fh:
        fh.write(text)
