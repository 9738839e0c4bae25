import csv
import json
import os

import pytest

from survblend.cli import calibration_flags, main, parse_scenarios, verify_manifest
from survblend.pipeline import SyntheticConfig, synthetic_trajectories, write_trajectories


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.cfg"
    p.write_text("# quick settings for the large-protocol scenarios\nscenario.*.n_test = 400\n")
    return p


@pytest.fixture(scope="module")
def traj_file(tmp_path_factory):
    trs = synthetic_trajectories(5, SyntheticConfig(n_locations=2, n_years=10, n1=15, n2=8))
    p = tmp_path_factory.mktemp("data") / "traj.csv"
    write_trajectories(p, trs)
    return p


class TestParsing:
    def test_scenarios(self):
        assert parse_scenarios("1..16") == list(range(1, 17))
        assert parse_scenarios("3,1,3") == [1, 3]
        assert parse_scenarios("2..4,9") == [2, 3, 4, 9]

    def test_flags(self):
        assert calibration_flags(0.5, 0.2887) == []
        assert calibration_flags(0.5, 0.25) == ["overdispersive"]
        assert calibration_flags(0.5, 0.33) == ["underdispersive"]
        assert calibration_flags(0.55, 0.29) == ["underestimates"]
        assert calibration_flags(0.45, 0.29) == ["overestimates"]


class TestSimulate:
    def test_deterministic(self, tmp_path, small_config):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run("simulate", "--scenarios", "1", "--seed", 7, "--config", small_config,
                       "--out", out) == 0
            outs.append(out)
        for f in ("scenario_01_report.csv", "scenario_01_pit_hist.csv"):
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
        rows = read_csv(outs[0] / "scenario_01_report.csv")
        assert len(rows) == 17 and rows[0]["method"] == "source1"

    def test_seed_changes_output(self, tmp_path, small_config):
        for seed in (1, 2):
            run("simulate", "--scenarios", "2", "--seed", seed, "--config", small_config,
                "--methods", "lp,source1", "--out", tmp_path / str(seed))
        a = (tmp_path / "1" / "scenario_02_report.csv").read_bytes()
        assert a != (tmp_path / "2" / "scenario_02_report.csv").read_bytes()

    def test_bad_scenario(self, tmp_path, capsys):
        out = tmp_path / "s17"
        assert run("simulate", "--scenarios", "17", "--out", out) == 2
        assert not out.exists()
        assert "1..16" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [["--methods", "lp,nope"], ["--seed", "-3"],
                                      ["--scenarios", "x"]])
    def test_usage_errors(self, tmp_path, argv):
        assert run("simulate", *argv, "--out", tmp_path / "o") == 2

    def test_bad_config_key(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("colour = blue\n")
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_threads_match_serial(self, tmp_path, small_config, monkeypatch):
        args = ["simulate", "--scenarios", "1,5", "--config", small_config, "--methods", "lp,gp3"]
        run(*args, "--out", tmp_path / "serial")
        monkeypatch.setenv("SURVBLEND_THREADS", "2")
        run(*args, "--out", tmp_path / "par")
        for f in ("scenario_01_report.csv", "scenario_05_report.csv"):
            assert (tmp_path / "serial" / f).read_bytes() == (tmp_path / "par" / f).read_bytes()


class TestCombine:
    def test_lp0_constant_weight(self, tmp_path, traj_file):
        out = tmp_path / "c"
        assert run("combine", traj_file, "--method", "lp0", "--out", out) == 0
        rows = read_csv(out / "combine_parameters.csv")
        assert len(rows) == 20
        assert all(float(r["omega"]) == 0.5 for r in rows)
        summary = {r["method"]: float(r["mean_ibs"]) for r in read_csv(out / "combine_summary.csv")}
        assert set(summary) >= {"lp0", "source1", "source2", "climatology"}
        assert verify_manifest(out) == []

    def test_gp3_quantiles(self, tmp_path, traj_file):
        out = tmp_path / "g"
        assert run("combine", traj_file, "--method", "gp3", "--quantiles", "0.25,0.75",
                   "--out", out) == 0
        q = read_csv(out / "combine_quantiles.csv")
        assert {r["level"] for r in q} == {"0.25", "0.75"}

    def test_missing_header(self, tmp_path, capsys):
        bad = tmp_path / "noheader.csv"
        bad.write_text("s1,a,2000,0,1,3.5\n")
        assert run("combine", bad, "--out", tmp_path / "o") == 2
        assert "noheader.csv:1" in capsys.readouterr().err

    def test_no_inputs(self, tmp_path):
        assert run("combine", "--out", tmp_path / "o") == 2

    def test_bad_method_estimator(self, tmp_path, traj_file):
        assert run("combine", traj_file, "--method", "hb", "--estimator", "ml",
                   "--out", tmp_path / "o") == 2


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--scenarios", "1", "--out", out) == 0
    return out


class TestReport:
    def test_flags_and_idempotent(self, tmp_path, sim_dir):
        rep = sim_dir / "scenario_01_report.csv"
        assert run("report", rep, "--out", tmp_path / "r1") == 0
        assert run("report", rep, "--out", tmp_path / "r1") == 0
        assert run("report", rep, "--out", tmp_path / "r2") == 0
        for f in ("report_long.csv", "calibration_summary.txt"):
            assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()
        lines = (tmp_path / "r1" / "calibration_summary.txt").read_text().splitlines()
        lp = [ln for ln in lines if " lp " in ln]
        assert len(lp) == 1 and "overdispersive" in lp[0]
        long = read_csv(tmp_path / "r1" / "report_long.csv")
        assert {r["metric"] for r in long} >= {"mean_ibs", "pit_mean", "pit_sd"}

    def test_empty_input(self, tmp_path):
        assert run("report", "--out", tmp_path / "r") == 2
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        assert run("report", empty, "--out", tmp_path / "r") == 2


class TestVerify:
    def test_tamper(self, tmp_path, small_config, capsys):
        out = tmp_path / "v"
        run("simulate", "--scenarios", "3", "--config", small_config, "--methods", "lp",
            "--out", out)
        assert run("verify", out) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["status"] == "ok" and man["seed"] == 1
        assert set(man["outputs"]) == {"scenario_03_report.csv", "scenario_03_pit_hist.csv"}
        with open(out / "scenario_03_report.csv", "a", encoding="utf-8") as fh:
            fh.write("junk\n")
        capsys.readouterr()
        assert run("verify", out) == 1
        assert "scenario_03_report.csv" in capsys.readouterr().out
        os.remove(out / "scenario_03_pit_hist.csv")
        assert len(verify_manifest(out)) == 2

    def test_no_manifest(self, tmp_path):
        assert run("verify", tmp_path) == 2
