import json
import os
import subprocess
import sys

import numpy as np
import pytest

from shmlearn.config import ConfigError, config_from_values, parse_config
from shmlearn.experiments import run_experiment


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_minimal_file_fills_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, "[experiment]\nid = dp\n"))
        assert cfg.experiment_id == "dp"
        assert cfg.seeds == [1]
        assert cfg.params["alpha"] == 10.0
        assert cfg.params["alarm_threshold"] == 50
        assert cfg.data["stream_length"] == 3932

    def test_unknown_key_is_named(self, tmp_path):
        with pytest.raises(ConfigError, match=r"foo"):
            parse_config(write(tmp_path, "[experiment]\nid = dp\nfoo = 1\n"))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match=r"unknown section"):
            parse_config(write(tmp_path, "[experiment]\nid = dp\n[nope]\nx = 1\n"))

    def test_line_numbers_in_errors(self, tmp_path):
        with pytest.raises(ConfigError, match=r":4:"):
            parse_config(
                write(tmp_path, "[experiment]\nid = dp\nseeds = 1\nbudget = x\n")
            )

    def test_type_mismatch(self, tmp_path):
        with pytest.raises(ConfigError, match=r"cannot parse"):
            parse_config(write(tmp_path, "[dp]\nalpha = ten\n[experiment]\nid = dp\n"))

    def test_seed_list(self, tmp_path):
        cfg = parse_config(write(tmp_path, "[experiment]\nid = gen\nseeds = 1,2,3\n"))
        assert cfg.seeds == [1, 2, 3]

    def test_missing_id(self, tmp_path):
        with pytest.raises(ConfigError, match=r"id"):
            parse_config(write(tmp_path, "[experiment]\nseeds = 1\n"))

    def test_comments_and_blanks(self, tmp_path):
        cfg = parse_config(
            write(tmp_path, "# header\n\n[experiment]\nid = gen  # trailing\n")
        )
        assert cfg.experiment_id == "gen"


def small_semisup_cfg(out_dir):
    return config_from_values(
        {
            "experiment": {"id": "semisup", "out_dir": str(out_dir), "seeds": [1, 2]},
            "data": {"n_per_class": 60, "test_per_class": 60},
            "semisup": {"labelled_fractions": [0.1, 0.3]},
        }
    )


class TestRunExperiment:
    def test_outputs_under_out_dir_and_aggregates_recompute(self, tmp_path):
        bundle = run_experiment(small_semisup_cfg(tmp_path / "out"))
        for path in bundle.output_files:
            assert os.path.commonpath([path, str(tmp_path / "out")]) == str(tmp_path / "out")
        vals = [rec["mean_gain"] for rec in bundle.per_seed]
        assert bundle.aggregates["mean_gain"]["mean"] == pytest.approx(
            np.mean(vals), abs=1e-12
        )
        assert bundle.aggregates["mean_gain"]["se"] == pytest.approx(
            np.std(vals, ddof=1) / np.sqrt(len(vals)), abs=1e-12
        )

    def test_gain_column_recomputable(self, tmp_path):
        bundle = run_experiment(small_semisup_cfg(tmp_path / "out"))
        csv = next(p for p in bundle.output_files if p.endswith("semisup_gain.csv"))
        lines = open(csv).read().strip().splitlines()
        assert lines[0] == "fraction,seed,f1_supervised,f1_semisup,gain"
        for line in lines[1:]:
            _, _, f_sup, f_semi, gain = line.split(",")
            assert float(gain) == pytest.approx(float(f_semi) - float(f_sup), abs=1e-15)

    def test_rerun_is_byte_identical(self, tmp_path):
        b1 = run_experiment(small_semisup_cfg(tmp_path / "a"))
        b2 = run_experiment(small_semisup_cfg(tmp_path / "b"))
        for p1, p2 in zip(b1.output_files, b2.output_files):
            assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_full_budget_active_equals_passive(self, tmp_path):
        cfg = config_from_values(
            {
                "experiment": {"id": "active", "out_dir": str(tmp_path / "out"), "seeds": [1]},
                "data": {
                    "stream_length": 400, "env_start": 120, "env_end": 200,
                    "damage_onset": 300,
                },
                "active": {"budget_fraction": 1.0, "init_size": 50},
            }
        )
        bundle = run_experiment(cfg)
        rec = bundle.per_seed[0]
        assert rec["final_f1_active"] == rec["final_f1_passive"]
        split_csv = next(p for p in bundle.output_files if "split" in p)
        random_csv = next(p for p in bundle.output_files if "random" in p)
        cols = lambda p: [ln.split(",")[:4] for ln in open(p).read().splitlines()[1:]]
        assert cols(split_csv) == cols(random_csv)


class TestCliProcess:
    @staticmethod
    def run_cli(args, cwd=None):
        return subprocess.run(
            [sys.executable, "-m", "shmlearn.cli", *args],
            capture_output=True, text=True, cwd=cwd,
        )

    def test_config_error_exit_code(self, tmp_path):
        bad = write(tmp_path, "[experiment]\nid = dp\nfoo = 1\n")
        proc = self.run_cli(["dp", "--config", str(bad)])
        assert proc.returncode == 2
        assert "foo" in proc.stderr

    def test_run_failure_exit_code(self, tmp_path):
        cfg = write(
            tmp_path,
            "[experiment]\nid = active\nseeds = 1\n[data]\ncsv_path = missing.csv\n",
        )
        proc = self.run_cli(["active", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert proc.returncode == 1

    def test_gen_and_eval_round_trip(self, tmp_path):
        out = tmp_path / "gen"
        proc = self.run_cli(["gen", "--dataset", "ae", "--seed", "5", "--out", str(out)])
        assert proc.returncode == 0
        csv = out / "ae_seed5.csv"
        proc = self.run_cli(["eval", "--true", str(csv), "--pred", str(csv)])
        assert proc.returncode == 0
        report = json.loads(proc.stdout)
        assert report["macro_f1"] == 1.0

    def test_subcommand_config_mismatch(self, tmp_path):
        cfg = write(tmp_path, "[experiment]\nid = dp\n")
        proc = self.run_cli(["kbtl", "--config", str(cfg)])
        assert proc.returncode == 2
