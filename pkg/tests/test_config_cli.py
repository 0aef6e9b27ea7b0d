import math
import subprocess
import sys

import numpy as np
import pytest

from recoilfree.artifacts import file_hash, read_csv, read_json
from recoilfree.cli import CONVERGENCE_COLUMNS, TRAJECTORY_COLUMNS, main
from recoilfree.config import ConfigError, load_config, parse_config, preset
from recoilfree.model import TWO_PI, SystemParams
from recoilfree.oracles import BlochInit, mossbauer_trajectory
from recoilfree.rb import RBSeries

SMALL = ["--rabi-khz", "20", "--trap-khz", "100", "--eta", "0.1", "--p0", "0.95"]

GOOD = """\
[system]
rabi_khz = 20
trap_khz = 100
eta = 0.1
p0 = 0.95

[pulse]
duration_us = 15
target = rx90
n_c = 6
"""


def test_units_convert_to_si():
    cfg = parse_config(GOOD)
    assert cfg.system["rabi"] == pytest.approx(TWO_PI * 20e3)
    assert cfg.pulse["duration"] == pytest.approx(15e-6)
    assert cfg.pulse["n_c"] == 6
    assert cfg.where("pulse", "duration") == "<config>:8"
    p = cfg.system_params()
    assert p.omega_trap == pytest.approx(TWO_PI * 100e3) and p.eta == 0.1
    assert parse_config("[pulse]\nphase_deg = 90\n").pulse["phase"] == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("text,line,fragment", [
    ("[system]\nrabi = 20\n", 2, "unit suffix"),
    ("[system]\neta = 0.1\nrabi_us = 3\n", 3, "not a frequency unit"),
    ("[pulse]\n\nspeed_khz = 1\n", 3, "unknown key"),
    ("[system]\neta = lots\n", 2, "eta"),
    ("[pulse]\nmikado = maybe\n", 2, "boolean"),
    ("[bogus]\nx = 1\n", 1, "unknown section"),
])
def test_errors_name_file_and_line(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "run.ini")
    assert f"run.ini:{line}" in str(exc.value) and fragment in str(exc.value)


def test_missing_fields_and_files(tmp_path):
    with pytest.raises(ConfigError, match="missing required field"):
        parse_config("[system]\neta = 0.1\n").system_params()
    with pytest.raises(ConfigError, match="duration"):
        parse_config(GOOD.replace("duration_us = 15\n", "")).require("pulse", "duration")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    with pytest.raises(ConfigError, match="p0"):
        parse_config("[system]\nrabi_khz = 20\ntrap_khz = 100\neta = 0.1\np0 = 1.5\n").system_params()


def test_presets_and_merge():
    base = preset("sr88")
    assert base.system_params().eta == pytest.approx(0.22)
    merged = base.merged(parse_config("[system]\neta = 0.05\n"))
    assert merged.system["eta"] == 0.05 and merged.system["rabi"] == base.system["rabi"]
    assert preset("sr88-mikado").pulse["mikado"] is True
    assert preset("sr88-rx90").pulse == {"duration": 15e-6, "target": "rx90"}
    with pytest.raises(ConfigError):
        preset("nope")


def test_missing_duration_exits_1(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(GOOD.replace("duration_us = 15\n", ""))
    assert main(["optimize", "--config", str(ini), "--out", str(tmp_path)]) == 1
    assert "duration" in capsys.readouterr().err


def test_bad_config_line_reaches_stderr(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[system]\nrabi = 20\n")
    assert main(["analyze", "--config", str(ini), "--out", str(tmp_path)]) == 1
    assert f"{ini}:2" in capsys.readouterr().err


def test_optimize_writes_artifacts_and_flags_non_convergence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(GOOD + "\n[optimize]\nrestarts = 1\nmax_iterations = 2\nn_steps = 256\n")
    out = tmp_path / "a"
    assert main(["optimize", "--config", str(ini), "--seed", "5", "--out", str(out)]) == 2
    rows = read_csv(out / "convergence.csv")
    assert list(rows[0]) == list(CONVERGENCE_COLUMNS)
    doc = read_json(out / "pulse.json")
    assert doc["meta"]["seed"] == 5
    assert doc["meta"]["inputs"] == {str(ini): file_hash(ini)}
    assert len(doc["pulse"]["a"]) == 6
    result = read_json(out / "result.json")
    assert "non-converged" in result["flags"]

    again = tmp_path / "b"
    main(["optimize", "--config", str(ini), "--seed", "5", "--out", str(again)])
    for name in ("pulse.json", "convergence.csv", "result.json"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_analyze_zero_pulse_matches_closed_form(tmp_path):
    T = 3 * math.pi / (2 * TWO_PI * 20e3)
    out = tmp_path / "an"
    code = main(["analyze", *SMALL, "--duration", repr(T), "--init-theta", "1.0",
                 "--init-phi", "0.4", "--points", "101", "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "trajectory.csv")
    assert list(rows[0]) == list(TRAJECTORY_COLUMNS)
    t = np.array([float(r["t_us"]) for r in rows]) * 1e-6
    num = np.array([[float(r["x"]), float(r["p"])] for r in rows])
    p = SystemParams(TWO_PI * 20e3, TWO_PI * 100e3, 0.1, p0=0.95)
    x, pp = mossbauer_trajectory(p, BlochInit(1.0, 0.4), t)
    assert np.abs(num - np.c_[x, pp]).max() < 1e-6 * np.abs(num).max()
    for name in ("expansion.json", "tomography.json"):
        assert "meta" in read_json(out / name)


def test_benchmark_csv_columns_and_reruns(tmp_path):
    args = ["benchmark", *SMALL, "--mode", "idealized-L4", "--depth", "12", "--circuits", "3",
            "--record-every", "4", "--seed", "2"]
    assert main([*args, "--out", str(tmp_path / "x")]) == 0
    assert main([*args, "--out", str(tmp_path / "y")]) == 0
    rows = read_csv(tmp_path / "x" / "rb_idealized-L4.csv")
    assert list(rows[0]) == list(RBSeries.CSV_COLUMNS)
    assert [int(r["N"]) for r in rows] == [1, 4, 8, 12]
    for name in ("rb_idealized-L4.csv", "rb_idealized-L4.json"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_benchmark_mikado_needs_pulse(tmp_path):
    assert main(["benchmark", *SMALL, "--mode", "mikado", "--out", str(tmp_path)]) == 1


def test_tomography_rejects_unreadable_pulse(tmp_path):
    bad = tmp_path / "p.json"
    bad.write_text("{not json")
    assert main(["tomography", *SMALL, "--pulse", str(bad), "--out", str(tmp_path)]) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "recoilfree", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("recoilfree ")
