"""Command-line entry point: simulate, experiment, traversal, oracle, check, plot.

Seed precedence: --seed flag, then the RBB_SEED environment variable, then
the default 42.  Exit codes: 0 success, 1 check failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .engine import InitialConfig, run_trace
from .experiments import (
    ExperimentConfig,
    HEADERS,
    experiment_convergence,
    experiment_empty_fraction,
    experiment_max_load,
    experiment_traversal,
    rows_to_csv,
    rows_to_json,
)
from .observables import default_params
from .oracle import enumerate_states, stationary_distribution, transition_kernel
from .plotting import emit_plot
from .rng import DEFAULT_SEED, RandomSource
from .validation import CHECKS, run_checks

EXPERIMENTS = {
    "max_load": experiment_max_load,
    "empty_fraction": experiment_empty_fraction,
    "convergence": experiment_convergence,
    "traversal": experiment_traversal,
}

PAPER_SCALE = {"n_list": (100, 1000, 10000), "rounds": 10**6, "reps": 25}
DESK_SCALE = {"n_list": (100, 1000), "rounds": 10**5, "reps": 25}


class ConfigError(Exception):
    """User-facing configuration problem; maps to exit code 2."""


def _parse_init(spec: str) -> InitialConfig:
    if spec == "uniform":
        return InitialConfig("uniform")
    if spec == "single":
        return InitialConfig("single_bin")
    if spec.startswith("file:"):
        path = Path(spec[len("file:"):])
        if not path.is_file():
            raise ConfigError(f"init file not found: {path}")
        tokens = path.read_text().replace(",", " ").split()
        try:
            loads = [int(t) for t in tokens]
        except ValueError as exc:
            raise ConfigError(f"init file must contain integers: {exc}") from None
        return InitialConfig("explicit", explicit_loads=loads)
    raise ConfigError(f"unknown init spec {spec!r} (use uniform|single|file:<path>)")


def _resolve_seed(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("RBB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"RBB_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _resolve_alpha(spec: str, n: int, m: int) -> float:
    if spec == "paper":
        return default_params(n, max(m, 1)).alpha
    if spec == "practical":
        return default_params(n, max(m, 1)).practical_alpha
    try:
        value = float(spec)
    except ValueError:
        raise ConfigError(f"--alpha must be paper, practical or a float, got {spec!r}") from None
    if value <= 0:
        raise ConfigError("--alpha must be positive")
    return value


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, nargs="+", default=None, help="bin counts")
    p.add_argument("--m", type=int, nargs="+", default=None, help="absolute ball counts")
    p.add_argument("--m-mult", type=float, nargs="+", default=None,
                   help="ball counts as multiples of n")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init", default="uniform", help="uniform|single|file:<path>")
    p.add_argument("--alpha", default="practical", help="paper|practical|<float>")
    p.add_argument("--threshold-factor", type=float, default=1.5)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--paper-scale", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbb",
                                     description="Repeated balls-into-bins simulation laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="one trace with per-round observables")
    _add_common(p_sim)
    p_sim.add_argument("--process", choices=("rbb", "idealized"), default="rbb")

    p_exp = sub.add_parser("experiment", help="grid experiments with CSV/JSON output")
    p_exp.add_argument("kind", choices=("max_load", "empty_fraction", "convergence", "traversal"))
    _add_common(p_exp)

    p_trav = sub.add_parser("traversal", help="per-ball cover-time experiment")
    _add_common(p_trav)
    p_trav.add_argument("--tie-break", choices=("by_ball_id", "random"), default="by_ball_id")
    p_trav.add_argument("--cap", type=int, default=None)

    p_or = sub.add_parser("oracle", help="exact tiny-instance distributions")
    _add_common(p_or)
    p_or.add_argument("--kernel", action="store_true",
                      help="emit the full transition kernel instead of the stationary law")

    p_chk = sub.add_parser("check", help="run drift/coupling/tail checks")
    p_chk.add_argument("names", nargs="*", help=f"subset of: {', '.join(CHECKS)}")
    p_chk.add_argument("--seed", type=int, default=None)
    p_chk.add_argument("--out", default=None)
    p_chk.add_argument("--format", choices=("csv", "json"), default="csv")

    p_plot = sub.add_parser("plot", help="render an experiment CSV to SVG")
    p_plot.add_argument("input", help="CSV file produced by `rbb experiment`")
    p_plot.add_argument("--experiment", required=True,
                        choices=("max_load", "empty_fraction", "convergence", "traversal"))
    p_plot.add_argument("--kind", choices=("line", "scatter"), default="line")
    p_plot.add_argument("--out", required=True)
    return parser


def _experiment_config(args, kind: str) -> ExperimentConfig:
    scale = PAPER_SCALE if args.paper_scale else DESK_SCALE
    n_list = tuple(args.n) if args.n else scale["n_list"]
    m_list = tuple(args.m) if args.m else ()
    m_mult = tuple(args.m_mult) if args.m_mult else ()
    if not m_list and not m_mult:
        m_mult = (1.0,)
    return ExperimentConfig(
        experiment=kind,
        n_list=n_list,
        m_list=m_list,
        m_mult=m_mult,
        rounds=args.rounds if args.rounds is not None else scale["rounds"],
        reps=args.reps if args.reps is not None else scale["reps"],
        seed=_resolve_seed(args.seed),
        init=_parse_init(args.init),
        threshold_factor=args.threshold_factor,
        cap=getattr(args, "cap", None),
        tie_break=getattr(args, "tie_break", "by_ball_id"),
        threads=args.threads,
    )


def _write_experiment(rows: List[dict], kind: str, args) -> None:
    text = rows_to_csv(rows, kind) if args.format == "csv" else rows_to_json(rows, kind)
    _emit(text, args.out)
    if args.plot:
        if args.out is None:
            raise ConfigError("--plot requires --out to name the SVG alongside the data file")
        svg = emit_plot(rows, kind)
        Path(args.out).with_suffix(".svg").write_bytes(svg)


def cmd_simulate(args) -> int:
    if not args.n or len(args.n) != 1:
        raise ConfigError("simulate needs exactly one --n")
    n = args.n[0]
    if args.m and len(args.m) == 1:
        m = args.m[0]
    elif args.m_mult and len(args.m_mult) == 1:
        m = int(round(args.m_mult[0] * n))
    else:
        raise ConfigError("simulate needs exactly one --m or --m-mult")
    rounds = args.rounds if args.rounds is not None else 1000
    seed = _resolve_seed(args.seed)
    alpha = _resolve_alpha(args.alpha, n, m)
    trace = run_trace(args.process, n, m, _parse_init(args.init), rounds,
                      RandomSource(seed, 0), alpha=alpha)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("round", "empty", "kappa", "quadratic", "log_exponential", "max_load"))
    for row in trace:
        writer.writerow((row.round, row.empty.F, row.empty.kappa, row.quadratic,
                         repr(row.exponential), row.max_load))
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_experiment(args, kind: Optional[str] = None) -> int:
    kind = kind or args.kind
    cfg = _experiment_config(args, kind)
    rows = EXPERIMENTS[kind](cfg)
    _write_experiment(rows, kind, args)
    return 0


def cmd_oracle(args) -> int:
    if not args.n or len(args.n) != 1 or not args.m or len(args.m) != 1:
        raise ConfigError("oracle needs exactly one --n and one --m")
    n, m = args.n[0], args.m[0]
    space = enumerate_states(n, m)
    kernel = transition_kernel(space)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if args.kernel:
        writer.writerow(("state", "next_state", "probability"))
        for i, s in enumerate(space.states):
            for j in sorted(kernel.rows[i]):
                writer.writerow(("|".join(map(str, s)),
                                 "|".join(map(str, space.states[j])),
                                 repr(kernel.rows[i][j])))
    else:
        start = space.index[tuple(int(v) for v in InitialConfig("uniform").build(n, m).loads)]
        pi = stationary_distribution(kernel, start=start)
        writer.writerow(("state", "probability"))
        for s, p in zip(space.states, pi):
            writer.writerow(("|".join(map(str, s)), repr(float(p))))
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_check(args) -> int:
    seed = _resolve_seed(args.seed)
    try:
        reports = run_checks(args.names, seed)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    rows = [{"name": r.name, "verdict": r.verdict, "statistic": r.statistic,
             "threshold": r.threshold, "seed": r.seed} for r in reports]
    text = rows_to_csv(rows, "checks") if args.format == "csv" else rows_to_json(rows, "checks")
    _emit(text, args.out)
    return 0 if all(r.passed for r in reports) else 1


def cmd_plot(args) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        raw = list(csv.DictReader(fh))
    if not raw:
        raise ConfigError("input CSV has no rows")
    header = HEADERS[args.experiment]
    if set(raw[0]) != set(header):
        raise ConfigError(f"input columns {sorted(raw[0])} do not match "
                          f"the {args.experiment} schema")
    rows = []
    for r in raw:
        row = dict(r)
        for col in ("n", "m", "rounds", "burn_in"):
            if col in row:
                row[col] = int(row[col])
        rows.append(row)
    Path(args.out).write_bytes(emit_plot(rows, args.experiment, kind=args.kind))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "experiment":
            return cmd_experiment(args)
        if args.command == "traversal":
            return cmd_experiment(args, kind="traversal")
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "check":
            return cmd_check(args)
        if args.command == "plot":
            return cmd_plot(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
