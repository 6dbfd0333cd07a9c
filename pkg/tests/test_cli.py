import json
import subprocess
import sys

import pytest

from storax.cli import main


@pytest.fixture(scope="module")
def case_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "case"
    assert main(["gen", "--seed", "1", "--horizon", "96", "--out", str(out)]) == 0
    return out


def test_gen_writes_files(case_dir):
    assert {p.name for p in case_dir.iterdir()} >= {"timeseries.csv", "instance.json", "case.json"}


def test_aggregate(case_dir, capsys, tmp_path):
    out = tmp_path / "agg.json"
    assert main(["aggregate", "--case", str(case_dir), "--mode", "crh", "--steps", "24", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["mode"] == "CRH" and summary["I"] == 24 and summary["J"] == 24
    assert out.exists()


def test_solve(case_dir, capsys, tmp_path):
    lp = tmp_path / "model.lp"
    code = main(["solve", "--case", str(case_dir), "--method", "Proposed", "--level", "24",
                 "--out", str(tmp_path / "rec"), "--lp", str(lp)])
    summary = json.loads(capsys.readouterr().out)
    assert code == 0
    assert summary["status"] == "optimal" and summary["audit_passed"]
    assert lp.read_text().startswith("\\ written by storax")
    assert (tmp_path / "rec" / "levels.csv").exists()


def test_solve_full_resolution_at_horizon(case_dir, capsys):
    assert main(["solve", "--case", str(case_dir), "--method", "FullResolution", "--level", "96"]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "optimal"


def test_config_file_and_override(case_dir, tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'[solve]\ncase = "{case_dir}"\nmethod = "Chrono"\nlevel = 48\n\n[solver]\nalgorithm = "simplex"\n'
    )
    assert main(["--config", str(cfg), "solve"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "Chrono"
    assert main(["--config", str(cfg), "solve", "--method", "Proposed"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "Proposed"


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[solve]\nbogus = 1\n")
    assert main(["--config", str(cfg), "solve"]) == 2
    assert "ConfigError" in capsys.readouterr().err
    cfg.write_text("not toml [")
    assert main(["--config", str(cfg), "gen"]) == 2


def test_missing_case_exits_2(tmp_path):
    assert main(["aggregate", "--case", str(tmp_path / "nothing")]) == 2


def test_sweep(case_dir, tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--case", str(case_dir), "--levels", "24", "96", "--methods", "Proposed", "MinMax",
                 "--reps", "1", "--out", str(out), "--sequential-timing"])
    assert code == 0
    assert (out / "records.csv").exists() and (out / "counts.svg").exists()
    assert "MinMax" in capsys.readouterr().out


def test_sweep_with_failed_cell_exits_1(case_dir, tmp_path):
    code = main(["sweep", "--case", str(case_dir), "--levels", "12", "--methods", "MinMax", "--reps", "1",
                 "--out", str(tmp_path / "s")])
    assert code == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "storax.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sweep" in proc.stdout
