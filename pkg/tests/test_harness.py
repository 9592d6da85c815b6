import csv
import json
from pathlib import Path

import numpy as np
import pytest

from ma1lab.harness import ConfigError, parse_config, run_experiment
from ma1lab.harness import cli
from ma1lab.harness import runner as R
from ma1lab.spectral import Arma, QuadratureError

SMALL = """
[model]
kind = arma
ma = 0.5

[innovation]
law = uniform

[run]
T = 400
replications = 2
betas = 0 1
seed = 123
trajectory_stride = 50
diagnostics_stride = 50

[check]
max_mean_distance = 10
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def tree(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    res = run_experiment(parse_config(SMALL), out)
    return res, out


class TestConfig:
    def test_parse(self):
        cfg = parse_config(SMALL)
        assert cfg.model == Arma(ma=(0.5,))
        assert cfg.betas == (0.0, 1.0) and cfg.T == 400 and cfg.replications == 2
        assert cfg.innovation.variance == pytest.approx(1.0)
        assert cfg.monitor_for(0.0).enabled is False and cfg.monitor_for(1.0).enabled is True

    @pytest.mark.parametrize("edit", [
        ("T = 400", "T = 50"),
        ("replications = 2", "replications = 0"),
        ("betas = 0 1", "betas ="),
        ("betas = 0 1", "betas = 0 1.5"),
        ("betas = 0 1", "betas = 1 1"),
        ("kind = arma", "kind = garch"),
        ("ma = 0.5", "ma = 1.5"),
        ("law = uniform", "law = uniform\nhalf_width = 3"),
        ("[check]", "[nonsense]"),
        ("T = 400", "T = many"),
    ])
    def test_errors(self, edit):
        with pytest.raises(ConfigError):
            parse_config(SMALL.replace(*edit))

    def test_missing_section(self):
        with pytest.raises(ConfigError):
            parse_config("[model]\nkind = white_noise\n")

    def test_hash(self):
        a = parse_config(SMALL)
        assert a.config_hash == parse_config(SMALL + "\n; trailing comment\n").config_hash
        assert a.config_hash != parse_config(SMALL.replace("seed = 123", "seed = 124")).config_hash
        assert a.with_overrides(threads=4).config_hash == a.config_hash

    def test_shipped_configs_parse(self):
        for p in sorted(Path(__file__).resolve().parents[1].joinpath("configs").glob("*.ini")):
            cfg = parse_config(p.read_text())
            assert cfg.T >= 100


class TestSeeds:
    def test_streams_distinct_and_stable(self):
        s = {(b, r): R.stream_seed(7, b, r) for b in range(3) for r in range(50)}
        assert len(set(s.values())) == len(s)
        assert R.stream_seed(7, 1, 4) == s[(1, 4)]

    def test_format(self):
        assert R.fmt(0.1) == "0.10000000000000001"
        assert R.fmt(3) == "3"
        assert R.beta_tag(0.5) == "0.5" and R.beta_tag(1.0) == "1"


class TestRunExperiment:
    def test_outputs(self, small_run):
        res, out = small_run
        names = set(tree(out))
        for b in ("0", "1"):
            assert f"zeroset_{b}.csv" in names
            for r in (0, 1):
                assert {f"traj_{b}_{r}.csv", f"diagnostics_{b}_{r}.csv"} <= names
        assert {"summary.csv", "manifest.json"} <= names
        with open(out / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4 and tuple(rows[0]) == R.SUMMARY_COLUMNS

    def test_rows_consistent(self, small_run):
        res, _ = small_run
        for r in res.rows:
            assert r["distance"] >= 0
            assert r["distance"] == pytest.approx(abs(r["theta_T"] - 0.5), abs=1e-8)
        for tag, a in res.aggregates["per_beta"].items():
            d = [r["distance"] for r in res.rows if R.beta_tag(r["beta"]) == tag]
            assert a["mean_distance"] == pytest.approx(np.mean(d), rel=1e-15)
            assert a["max_distance"] == max(d)

    def test_manifest(self, small_run):
        res, out = small_run
        man = json.loads((out / "manifest.json").read_text())
        assert man["config_hash"] == parse_config(SMALL).config_hash
        assert set(man["versions"]) == {"ma1lab", "python", "numpy", "scipy"}
        assert man["seeds"]["1_1"] == R.stream_seed(123, 1, 1)

    def test_byte_identical_rerun(self, small_run, tmp_path):
        _, out = small_run
        run_experiment(parse_config(SMALL), tmp_path)
        assert tree(tmp_path) == tree(out)

    def test_parallel_matches_serial(self, small_run, tmp_path):
        _, out = small_run
        run_experiment(parse_config(SMALL).with_overrides(threads=2), tmp_path)
        assert tree(tmp_path) == tree(out)

    def test_replication_order_irrelevant(self, small_run):
        res, _ = small_run
        cfg = parse_config(SMALL)
        zs = {b: res.zero_sets[b].thetas for b in cfg.betas}
        tasks = [R._Task(cfg, bi, rep, zs[b], None) for bi, b in enumerate(cfg.betas) for rep in range(2)]
        again = [R._replicate(t) for t in reversed(tasks)][::-1]
        assert again == res.rows

    def test_adding_beta_keeps_streams(self, small_run):
        res, _ = small_run
        more = run_experiment(parse_config(SMALL.replace("betas = 0 1", "betas = 0 1 0.5")))
        assert more.rows_for(1.0) == res.rows_for(1.0)

    def test_numeric_failure_carries_context(self, monkeypatch):
        def boom(*a, **k):
            raise QuadratureError("no convergence")

        monkeypatch.setattr(R, "rm_decomposition", boom)
        with pytest.raises(R.NumericFailure, match="beta=0"):
            run_experiment(parse_config(SMALL))


class TestDiagnose:
    def test_report(self, small_run):
        _, out = small_run
        rep = R.diagnose(out)
        assert len(rep.checks) == 8
        assert all(c.passed for c in rep.checks if "bracket" in c.name)
        assert set(rep.series) == {(b, r) for b in ("0", "1") for r in (0, 1)}
        d = rep.series[("0", 0)]
        np.testing.assert_allclose(d["abs_diff"], np.abs(d["theta"] - d["theta_hat"]), rtol=1e-15)

    def test_missing(self, small_run, tmp_path):
        with pytest.raises(R.MissingArtifactError):
            R.diagnose(tmp_path)
        _, out = small_run
        with pytest.raises(R.MissingArtifactError):
            R.diagnose(out, reps=[5])


class TestCli:
    def test_simulate(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        dest = tmp_path / "p.csv"
        assert cli.main(["simulate", str(cfg), "--out", str(dest), "--seed", "5"]) == 0
        lines = dest.read_text().splitlines()
        assert lines[0] == "t,y,innovation" and len(lines) == 401

    def test_estimate_from_input(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        dest = tmp_path / "p.csv"
        cli.main(["simulate", str(cfg), "--out", str(dest)])
        out = tmp_path / "est"
        assert cli.main(["estimate", str(cfg), "--input", str(dest), "--beta", "1", "--out", str(out)]) == 0
        assert {p.name for p in out.iterdir()} == {"traj_1.csv", "approx_1.csv"}

    def test_zeroset(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        assert cli.main(["zeroset", str(cfg), "--out", str(tmp_path / "z")]) == 0
        assert "beta=1 zeros: 0.5" in capsys.readouterr().out

    def test_rm_check(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        assert cli.main(["rm-check", str(cfg), "--steps", "500", "--starts", "5", "--check"]) == 0
        assert capsys.readouterr().out.count("PASS") == 2

    def test_experiment_and_diagnose(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        out = tmp_path / "run"
        assert cli.main(["experiment", str(cfg), "--out", str(out), "--check"]) == 0
        assert "PASS mean distance beta=0" in capsys.readouterr().out
        assert cli.main(["diagnose", str(out), "--beta", "0"]) == 0
        assert (out / "diagnose.csv").exists()

    def test_check_failure_exit(self, tmp_path):
        cfg = write(tmp_path, SMALL.replace("max_mean_distance = 10", "max_mean_distance = 1e-12"))
        assert cli.main(["experiment", str(cfg), "--out", str(tmp_path / "run"), "--check"]) == 4
        assert cli.main(["experiment", str(cfg), "--out", str(tmp_path / "run")]) == 0

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL.replace("T = 400", "T = 5"))
        assert cli.main(["simulate", str(cfg)]) == 2
        assert "T must be" in capsys.readouterr().err
        assert cli.main(["simulate", str(tmp_path / "absent.ini")]) == 2

    def test_missing_artifact_exit(self, tmp_path):
        assert cli.main(["diagnose", str(tmp_path)]) == 2

    def test_numeric_exit(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise QuadratureError("budget exhausted")

        monkeypatch.setattr(cli, "find_zero_set", boom)
        assert cli.main(["zeroset", str(write(tmp_path, SMALL)), "--out", str(tmp_path / "z")]) == 3
