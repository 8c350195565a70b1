"""Command-line front end: subcommands, outputs, determinism and error records."""
import hashlib
import json
import shutil
import subprocess
from pathlib import Path

import pytest

import sivsim
from sivsim.cli import main
from sivsim.config import dump_canonical, load_config, parse_config

CONFIG_DIR = Path(sivsim.__file__).parent / "configs"
GOLDEN = Path(__file__).parent / "golden"
RABI = CONFIG_DIR / "fig3c_rabi.cfg"


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_validate(capsys):
    code, out, _ = run(["validate", str(CONFIG_DIR / "fig4_cpmg.cfg")], capsys)
    assert code == 0
    assert json.loads(out) == {"status": "ok", "experiment": "cpmg", "noise_blocks": 1}


def test_dump_canonical_matches_golden(capsys):
    code, out, _ = run(["dump-canonical", str(CONFIG_DIR / "fig4_cpmg.cfg")], capsys)
    assert code == 0
    assert out == (GOLDEN / "fig4_cpmg.canonical").read_text()


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "ple"
    code, stdout, _ = run(["run", str(CONFIG_DIR / "fig1d_boltzmann.cfg"), "--out", str(out), "--no-plot"], capsys)
    assert code == 0
    assert json.loads(stdout)["status"] == "ok"
    assert (out / "data.csv").is_file() and (out / "summary.json").is_file()
    assert not (out / "plot.svg").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["delta_fit_ghz"] / 48.0 - 1) < 0.05
    for key in ("seed", "workers", "wall_time_s", "config", "version"):
        assert key in summary
    echo = parse_config(summary["config"], base_dir=CONFIG_DIR)
    assert dump_canonical(echo) == summary["config"]
    assert summary["config"] == dump_canonical(load_config(CONFIG_DIR / "fig1d_boltzmann.cfg"))


def test_summary_json_is_sorted_and_strict(tmp_path, capsys):
    run(["run", str(RABI), "--out", str(tmp_path), "--no-plot"], capsys)
    text = (tmp_path / "summary.json").read_text()
    data = json.loads(text, parse_constant=lambda c: pytest.fail(f"non-standard JSON constant {c}"))
    assert json.dumps(data, sort_keys=True, indent=2) == text.rstrip("\n")


def test_seed_determinism(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["run", str(RABI), "--seed", "7", "--out", str(tmp_path / name), "--no-plot"], capsys)[0] == 0
    assert digest(tmp_path / "a" / "data.csv") == digest(tmp_path / "b" / "data.csv")
    run(["run", str(RABI), "--seed", "8", "--out", str(tmp_path / "c"), "--no-plot"], capsys)
    assert digest(tmp_path / "a" / "data.csv") != digest(tmp_path / "c" / "data.csv")
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["seed"] == 7


def test_worker_count_does_not_change_data(tmp_path, capsys):
    run(["run", str(RABI), "--out", str(tmp_path / "w1"), "--no-plot", "--workers", "1"], capsys)
    run(["run", str(RABI), "--out", str(tmp_path / "w3"), "--no-plot", "--workers", "3"], capsys)
    assert digest(tmp_path / "w1" / "data.csv") == digest(tmp_path / "w3" / "data.csv")


def test_plot_is_reproducible(tmp_path, capsys):
    run(["run", str(RABI), "--out", str(tmp_path / "p1")], capsys)
    run(["run", str(RABI), "--out", str(tmp_path / "p2")], capsys)
    svg = (tmp_path / "p1" / "plot.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert digest(tmp_path / "p1" / "plot.svg") == digest(tmp_path / "p2" / "plot.svg")


def test_output_root_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SIVSIM_OUT", str(tmp_path / "root"))
    code, stdout, _ = run(["run", str(RABI), "--no-plot"], capsys)
    assert code == 0
    assert Path(json.loads(stdout)["out"]) == tmp_path / "root" / "fig3c_rabi"
    assert (tmp_path / "root" / "fig3c_rabi" / "data.csv").is_file()


@pytest.mark.parametrize("body,code_name,line", [
    ("[system]\npreset = mw\nbogus = 1\n[experiment]\ntype = t1\nwaits = 1 ms\n", "unknown_key", 3),
    ("[system]\nb_mag = 3 parsecs\n[experiment]\ntype = t1\nwaits = 1 ms\n", "bad_unit", 2),
    ("[experiment]\ntype = t1\nwaits = 1 ms\n", "missing_section", None),
    ("[system]\npreset = mw\n[noise]\ntype = tabulated\nfile = nope.txt\n[experiment]\ntype = t1\nwaits = 1 ms\n",
     "missing_file", 5),
])
def test_config_errors_are_json_with_exit_2(tmp_path, capsys, body, code_name, line):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(body)
    for cmd in ("run", "validate", "dump-canonical"):
        code, out, err = run([cmd, str(cfg)], capsys)
        assert code == 2 and out == ""
        record = json.loads(err)
        assert record["error"] == code_name and record["line"] == line


def test_runtime_failure_is_json_with_exit_1(tmp_path, capsys):
    code, _, err = run(["validate", str(tmp_path / "absent.cfg")], capsys)
    assert code == 1
    assert "error" in json.loads(err)
    code, _, err = run(["run", str(RABI), "--workers", "0", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "workers" in json.loads(err)["message"]


def test_installed_console_script(tmp_path):
    exe = shutil.which("sivsim")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "validate", str(RABI)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["experiment"] == "rabi"
