"""Experiment grids, CSV/JSON schemas, determinism, and CLI exit codes."""

import csv
import io
import json
import math
import os
import subprocess
import sys

import pytest

from rbblab.cli import main
from rbblab.engine import InitialConfig
from rbblab.experiments import (
    ExperimentConfig,
    HEADERS,
    experiment_convergence,
    experiment_empty_fraction,
    experiment_max_load,
    experiment_traversal,
    rows_to_csv,
    rows_to_json,
)
from rbblab.plotting import emit_plot

SEED = 555


def cfg(**kw):
    defaults = dict(experiment="max_load", n_list=(10,), m_list=(20,),
                    rounds=200, reps=3, seed=SEED)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def parse_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestGrid:
    def test_pairs_from_multipliers(self):
        c = cfg(n_list=(10, 20), m_list=(), m_mult=(1.0, 2.5))
        assert c.pairs() == [(10, 10), (10, 25), (20, 20), (20, 50)]

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError, match="empty grid"):
            cfg(m_list=(), m_mult=()).pairs()

    def test_jobs_unique_stream_ids(self):
        c = cfg(n_list=(5, 10), m_list=(5,), reps=4)
        jobs = c.jobs()
        sids = [j[3] for j in jobs]
        assert len(set(sids)) == len(sids) == 8

    def test_grid_completeness(self):
        rows = experiment_empty_fraction(cfg(experiment="empty_fraction",
                                             n_list=(4, 8), m_list=(4,), reps=2))
        combos = {(r["n"], r["m"], r["rep"]) for r in rows}
        assert combos == {(n, 4, rep) for n in (4, 8) for rep in (0, 1)}


class TestMaxLoad:
    def test_zero_rounds_uniform_exact(self):
        rows = experiment_max_load(cfg(n_list=(10,), m_list=(30,), rounds=0, reps=2))
        for r in rows:
            assert r["max_load"] == 3 or r["rep"] == "mean"

    def test_summary_row_mean(self):
        rows = experiment_max_load(cfg())
        per_rep = [r for r in rows if r["rep"] != "mean"]
        (summary,) = [r for r in rows if r["rep"] == "mean"]
        assert summary["max_load"] == pytest.approx(
            sum(r["max_load"] for r in per_rep) / len(per_rep))

    def test_normalization(self):
        rows = experiment_max_load(cfg())
        r = next(r for r in rows if r["rep"] == 0)
        assert r["normalized"] == pytest.approx(r["max_load"] / ((20 / 10) * math.log(10)))

    def test_rows_sorted(self):
        rows = experiment_max_load(cfg(n_list=(4, 2), m_list=(8, 2)))
        keys = [(r["n"], r["m"], str(r["rep"])) for r in rows]
        assert keys == sorted(keys)


class TestEmptyFraction:
    def test_one_ball_two_bins_exact_half(self):
        rows = experiment_empty_fraction(cfg(experiment="empty_fraction",
                                             n_list=(2,), m_list=(1,), rounds=100, reps=1))
        assert rows[0]["mean_f"] == pytest.approx(0.5)
        assert rows[0]["ci_low"] == pytest.approx(0.5)

    def test_burn_in_default_and_override(self):
        c = cfg(experiment="empty_fraction", rounds=100)
        assert experiment_empty_fraction(c)[0]["burn_in"] == 10
        c2 = cfg(experiment="empty_fraction", rounds=100, burn_in=50)
        assert experiment_empty_fraction(c2)[0]["burn_in"] == 50

    def test_bad_burn_in(self):
        with pytest.raises(ValueError, match="burn_in"):
            experiment_empty_fraction(cfg(experiment="empty_fraction", rounds=10, burn_in=99))

    def test_ci_clamped(self):
        rows = experiment_empty_fraction(cfg(experiment="empty_fraction",
                                             n_list=(2,), m_list=(0,), rounds=50, reps=1))
        assert rows[0]["mean_f"] == 1.0 and rows[0]["ci_high"] == 1.0


class TestConvergence:
    def test_absurd_threshold_converges_at_zero(self):
        rows = experiment_convergence(cfg(experiment="convergence", n_list=(10,),
                                          m_list=(10,), threshold_factor=100.0, reps=2))
        assert all(r["rounds_to_converge"] == 0 and r["capped"] is False for r in rows)

    def test_cap_honesty(self):
        """An unreachable threshold reports empty + capped, not the cap."""
        rows = experiment_convergence(cfg(experiment="convergence", n_list=(10,),
                                          m_list=(1000,), rounds=3, reps=1,
                                          threshold_factor=0.001))
        assert rows[0]["rounds_to_converge"] == "" and rows[0]["capped"] is True

    def test_single_bin_default_positive_time(self):
        rows = experiment_convergence(cfg(experiment="convergence", n_list=(20,),
                                          m_list=(100,), rounds=10**4, reps=2))
        for r in rows:
            assert r["capped"] is False and r["rounds_to_converge"] > 0


class TestTraversalExperiment:
    def test_n1_cover_zero(self):
        rows = experiment_traversal(cfg(experiment="traversal", n_list=(1,),
                                        m_list=(5,), reps=2))
        assert all(r["max_cover"] == 0 and r["covered_fraction"] == 1.0 for r in rows)

    def test_cap_reports_partial_coverage(self):
        rows = experiment_traversal(cfg(experiment="traversal", n_list=(30,),
                                        m_list=(3,), reps=1, cap=2))
        assert rows[0]["max_cover"] == "" and rows[0]["covered_fraction"] < 1.0


class TestWriters:
    def test_csv_headers_exact(self):
        rows = experiment_max_load(cfg())
        text = rows_to_csv(rows, "max_load")
        assert text.splitlines()[0] == "n,m,rounds,rep,seed,max_load,normalized"
        assert HEADERS["empty_fraction"] == (
            "n", "m", "rounds", "burn_in", "rep", "seed", "mean_f", "ci_low", "ci_high")
        assert HEADERS["convergence"] == (
            "n", "m", "threshold", "rep", "seed", "rounds_to_converge", "capped")
        assert HEADERS["traversal"] == (
            "n", "m", "rep", "seed", "max_cover", "min_cover", "covered_fraction")
        assert HEADERS["checks"] == ("name", "verdict", "statistic", "threshold", "seed")

    def test_json_round_trip(self):
        rows = experiment_max_load(cfg())
        data = json.loads(rows_to_json(rows, "max_load"))
        assert len(data) == len(rows)
        assert set(data[0]) == set(HEADERS["max_load"])

    def test_thread_count_never_changes_bytes(self):
        base = rows_to_csv(experiment_max_load(cfg(n_list=(6, 12), m_list=(12,), reps=4)), "max_load")
        threaded = rows_to_csv(
            experiment_max_load(cfg(n_list=(6, 12), m_list=(12,), reps=4, threads=4)), "max_load")
        assert base == threaded

    def test_rerun_identical(self):
        a = rows_to_csv(experiment_empty_fraction(cfg(experiment="empty_fraction")), "empty_fraction")
        b = rows_to_csv(experiment_empty_fraction(cfg(experiment="empty_fraction")), "empty_fraction")
        assert a == b


class TestPlotting:
    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="no rows"):
            emit_plot([], "max_load")

    def test_deterministic_bytes(self):
        rows = experiment_max_load(cfg(n_list=(5, 10), m_list=(10, 20)))
        assert emit_plot(rows, "max_load") == emit_plot(rows, "max_load")

    def test_svg_structure(self):
        rows = experiment_max_load(cfg())
        svg = emit_plot(rows, "max_load")
        assert svg.startswith(b"<?xml") and b"</svg>" in svg

    def test_scatter_kind(self):
        rows = experiment_max_load(cfg())
        assert emit_plot(rows, "max_load", kind="scatter") != emit_plot(rows, "max_load")


class TestCli:
    def run(self, *argv):
        return main(list(argv))

    def test_experiment_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "ml.csv"
        code = self.run("experiment", "max_load", "--n", "5", "--m", "10",
                        "--rounds", "50", "--reps", "2", "--out", str(out))
        assert code == 0
        rows = parse_csv(out.read_text())
        assert rows and set(rows[0]) == set(HEADERS["max_load"])

    def test_stdout_when_no_out(self, capsys):
        code = self.run("experiment", "max_load", "--n", "4", "--m", "4",
                        "--rounds", "10", "--reps", "1")
        assert code == 0
        assert capsys.readouterr().out.startswith("n,m,rounds,rep,seed")

    def test_json_format(self, capsys):
        code = self.run("experiment", "max_load", "--n", "4", "--m", "4",
                        "--rounds", "10", "--reps", "1", "--format", "json")
        assert code == 0
        json.loads(capsys.readouterr().out)

    def test_plot_flag_writes_svg(self, tmp_path):
        out = tmp_path / "ml.csv"
        code = self.run("experiment", "max_load", "--n", "5", "--m", "10", "--m", "20",
                        "--rounds", "20", "--reps", "2", "--out", str(out), "--plot")
        assert code == 0
        svg = out.with_suffix(".svg")
        assert svg.exists() and svg.read_bytes().startswith(b"<?xml")

    def test_config_error_exit_2(self, capsys):
        assert self.run("experiment", "max_load", "--n", "0", "--m", "1") == 2
        assert self.run("simulate", "--n", "3") == 2  # missing --m

    def test_check_pass_exit_0(self, capsys):
        assert self.run("check", "binomial_bound") == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "name,verdict,statistic,threshold,seed"

    def test_check_fail_exit_1(self, capsys):
        assert self.run("check", "negative_control") == 1

    def test_check_unknown_exit_2(self, capsys):
        assert self.run("check", "bogus_check") == 2

    def test_seed_precedence_flag_over_env(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("RBB_SEED", "1000")
        self.run("experiment", "max_load", "--n", "4", "--m", "8",
                 "--rounds", "10", "--reps", "1", "--seed", "7")
        out_flag = capsys.readouterr().out
        assert parse_csv(out_flag)[0]["seed"] == "7"
        self.run("experiment", "max_load", "--n", "4", "--m", "8",
                 "--rounds", "10", "--reps", "1")
        out_env = capsys.readouterr().out
        assert parse_csv(out_env)[0]["seed"] == "1000"

    def test_seed_default_42(self, monkeypatch, capsys):
        monkeypatch.delenv("RBB_SEED", raising=False)
        self.run("experiment", "max_load", "--n", "4", "--m", "8",
                 "--rounds", "10", "--reps", "1")
        assert parse_csv(capsys.readouterr().out)[0]["seed"] == "42"

    def test_simulate_csv(self, capsys):
        code = self.run("simulate", "--n", "4", "--m", "8", "--rounds", "5",
                        "--init", "single")
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "round,empty,kappa,quadratic,log_exponential,max_load"
        assert len(lines) == 7

    def test_init_file(self, tmp_path, capsys):
        f = tmp_path / "init.txt"
        f.write_text("3, 1 0 4\n")
        code = self.run("simulate", "--n", "4", "--m", "8", "--rounds", "2",
                        "--init", f"file:{f}")
        assert code == 0

    def test_init_file_missing_exit_2(self, capsys):
        assert self.run("simulate", "--n", "4", "--m", "8",
                        "--init", "file:/does/not/exist") == 2

    def test_oracle_stationary(self, capsys):
        assert self.run("oracle", "--n", "2", "--m", "2") == 0
        rows = parse_csv(capsys.readouterr().out)
        probs = {r["state"]: float(r["probability"]) for r in rows}
        assert probs["1|1"] == pytest.approx(0.5, abs=1e-6)

    def test_oracle_kernel(self, capsys):
        assert self.run("oracle", "--n", "2", "--m", "1", "--kernel") == 0
        rows = parse_csv(capsys.readouterr().out)
        assert all(float(r["probability"]) == 0.5 for r in rows)

    def test_traversal_subcommand(self, capsys):
        code = self.run("traversal", "--n", "5", "--m", "5", "--reps", "2")
        assert code == 0
        rows = parse_csv(capsys.readouterr().out)
        assert set(rows[0]) == set(HEADERS["traversal"])

    def test_plot_subcommand(self, tmp_path):
        data = tmp_path / "ml.csv"
        self.run("experiment", "max_load", "--n", "5", "--m", "10",
                 "--rounds", "20", "--reps", "2", "--out", str(data))
        svg = tmp_path / "fig.svg"
        assert self.run("plot", str(data), "--experiment", "max_load",
                        "--out", str(svg)) == 0
        assert svg.read_bytes().startswith(b"<?xml")

    def test_plot_schema_mismatch_exit_2(self, tmp_path, capsys):
        data = tmp_path / "ml.csv"
        self.run("experiment", "max_load", "--n", "5", "--m", "10",
                 "--rounds", "10", "--reps", "1", "--out", str(data))
        assert self.run("plot", str(data), "--experiment", "traversal",
                        "--out", str(tmp_path / "x.svg")) == 2


class TestEntryPoint:
    def test_console_script_installed(self):
        proc = subprocess.run(["rbb", "check", "binomial_bound"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.startswith("name,verdict")
