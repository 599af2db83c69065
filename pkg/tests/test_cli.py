import json
import subprocess
import sys
from pathlib import Path

import pytest

from orphansim.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_SCHEMA, main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
SMOKE = SCENARIOS / "smoke.toml"


@pytest.fixture(scope="module")
def smoke_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    assert main(["sweep", "--scenario", str(SMOKE), "--out", str(out), "--jobs", "2"]) == EXIT_OK
    return out


def test_validate(capsys):
    assert main(["validate", "--scenario", str(SMOKE)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["name"] == "smoke"
    assert info["seeds"] == [7, 8]


def test_validate_seed_from_env(capsys, monkeypatch):
    monkeypatch.setenv("ORPHANSIM_SEED", "100")
    assert main(["validate", "--scenario", str(SMOKE)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["seeds"] == [100, 101]


def test_run_writes_reports(tmp_path, capsys):
    assert main(["run", "--scenario", str(SMOKE), "--out", str(tmp_path), "--seed", "3",
                 "--no-audit"]) == EXIT_OK
    printed = capsys.readouterr().out.split()
    names = sorted(Path(p).name for p in printed)
    assert names == ["smoke.reports.csv", "smoke.seed3.report.json", "smoke.seed4.report.json",
                     "smoke.timing.json"]
    assert not list(tmp_path.glob("*.audit.jsonl"))


def test_sweep_outputs(smoke_sweep):
    names = {p.name for p in smoke_sweep.iterdir()}
    for kind in ("removal_causes", "duplicate_additions", "network_overhead",
                 "memory_overhead", "characterization", "reports"):
        assert f"smoke.{kind}.csv" in names
    assert {"smoke.seed7.audit.jsonl", "smoke.seed8.report.json", "smoke.timing.json"} <= names


def test_compare(smoke_sweep, tmp_path):
    reports = sorted(str(p) for p in smoke_sweep.glob("*.report.json"))
    out = tmp_path / "cmp.csv"
    assert main(["compare", *reports, "--out", str(out)]) == EXIT_OK
    assert out.read_text().startswith("source,seed,max_orphan_pool,node,")


def test_compare_schema_mismatch(smoke_sweep, tmp_path):
    good = next(smoke_sweep.glob("*.report.json"))
    d = json.loads(good.read_text())
    d["schema_version"] = 99
    bad = tmp_path / "old.json"
    bad.write_text(json.dumps(d))
    assert main(["compare", str(good), str(bad)]) == EXIT_SCHEMA


def test_compare_single_report(smoke_sweep):
    assert main(["compare", str(next(smoke_sweep.glob("*.report.json")))]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["validate", "--scenario", "does/not/exist.toml"],
    ["run", "--scenario", str(SMOKE), "--seed", "-1"],
    ["run", "--scenario", str(SMOKE), "--jobs", "0"],
    ["launch"],
    [],
])
def test_config_errors(argv):
    assert main(argv) == EXIT_CONFIG


def test_bad_env_seed(monkeypatch):
    monkeypatch.setenv("ORPHANSIM_SEED", "abc")
    assert main(["validate", "--scenario", str(SMOKE)]) == EXIT_CONFIG


def test_unknown_key_exit(tmp_path, capsys):
    p = tmp_path / "s.toml"
    p.write_text('name = "x"\nmax_orphan = 3\n')
    assert main(["validate", "--scenario", str(p)]) == EXIT_CONFIG
    assert "max_orphan" in capsys.readouterr().err


def test_no_output_dir(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('name = "x"\n')
    assert main(["run", "--scenario", str(p)]) == EXIT_CONFIG


def test_runtime_error(tmp_path, monkeypatch):
    import orphansim.cli as cli

    def boom(*a, **k):
        raise OSError("disk on fire")

    monkeypatch.setattr(cli, "run_scenario", boom)
    assert main(["run", "--scenario", str(SMOKE), "--out", str(tmp_path)]) == EXIT_RUNTIME


def test_help_exits_ok(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "run" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "orphansim", "validate", "--scenario", str(SMOKE)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["name"] == "smoke"
