import csv
import subprocess
import sys
from pathlib import Path

import pytest

from mslab.cli import SUBCOMMANDS, main
from mslab.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """\
[domain]
dim = 1
bounds = -1 1

[interface]
variant = point
x0 = 0

[input]
preset = jump_constant
inner = 1
outer = -1

[solver]
n = 64
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, cmd, text=BASE, *extra):
    cfg = write(tmp_path, text)
    return main([cmd, "--config", cfg, "--out", str(tmp_path / "out"), *extra])


# -- config parsing --------------------------------------------------------------------


def test_parse_and_typed_views():
    cfg = parse_config(BASE + "\n[calibration]\nbeta = 1e3  # strong\n").validate()
    assert cfg.get_float("calibration", "beta") == 1e3
    assert cfg.cells() == (64,)
    assert cfg.datum().jump_inf() == 2.0


def test_cells_default_and_minimum():
    assert parse_config(BASE.replace("n = 64", "")).cells() == (512,)
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("n = 64", "n = 4")).validate()


@pytest.mark.parametrize("text,line,frag", [
    (BASE.replace("x0 = 0", "x0 = zero"), 7, "x0"),
    (BASE + "\n[calibration]\nbeta = -3\n", 18, "must be positive"),
    (BASE + "\n[calibration]\nlambda_rule = huge\n", 18, "lambda_rule"),
    (BASE + "\n[solver]\n", None, "already exists"),
    (BASE + "\n[bogus]\n", 17, "unknown section"),
    (BASE.replace("n = 64", "n = 64\nsteps = 3"), 16, "unknown key"),
])
def test_errors_point_at_the_line(text, line, frag):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "run.ini").validate()
    msg = str(exc.value)
    assert frag in msg
    if line is not None:
        assert f"run.ini:{line}:" in msg


def test_missing_section():
    text = BASE.replace("[interface]\nvariant = point\nx0 = 0\n", "")
    with pytest.raises(ConfigError, match=r"missing section \[interface\]"):
        parse_config(text, "run.ini").validate()


def test_round_trip_ini():
    cfg = parse_config(BASE)
    again = parse_config(cfg.to_ini())
    assert again.sections == cfg.sections


# -- the CLI ---------------------------------------------------------------------------


def test_help_lists_subcommands_and_flags():
    out = subprocess.run([sys.executable, "-m", "mslab.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in SUBCOMMANDS:
        assert name in out.stdout
    sub = subprocess.run([sys.executable, "-m", "mslab.cli", "verify", "--help"], capture_output=True, text=True)
    for flag in ("--config", "--beta", "--delta", "--out", "--workers"):
        assert flag in sub.stdout


def test_unknown_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--config", write(tmp_path, BASE), "--frobnicate"])
    assert exc.value.code == 2


def test_missing_config_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_bad_value_exit_two(tmp_path, capsys):
    assert run(tmp_path, "solve", BASE.replace("n = 64", "n = many")) == 2
    assert "run.ini:15:" in capsys.readouterr().err


def test_workers_must_be_positive(tmp_path):
    assert run(tmp_path, "solve", BASE, "--workers", "0") == 2


def test_solve_writes_report(tmp_path):
    assert run(tmp_path, "solve") == 0
    report = (tmp_path / "out" / "report.txt").read_text().splitlines()
    assert report[2] == "command = solve"
    assert "overall = pass" in report
    assert "[config]" in report
    assert (tmp_path / "out" / "timings.txt").exists()


def test_infeasible_calibration_exit_two(tmp_path, capsys):
    assert run(tmp_path, "calibrate", BASE, "--beta", "0.5") == 2
    assert "beta" in capsys.readouterr().err


def test_verify_negative_control_exit_one(tmp_path, capsys):
    text = BASE + "\n[calibration]\nn_x = 101\nn_z = 65\n"
    assert run(tmp_path, "verify", text, "--beta", "0.1") == 1
    assert "c_inequality" in capsys.readouterr().out
    rows = list(csv.reader(open(tmp_path / "out" / "margins.csv")))
    assert rows[0] == ["x", "z", "margin"]
    assert len(rows) > 100


def test_verify_strong_parameters_pass(tmp_path):
    text = BASE + "\n[calibration]\nlambda_rule = minimal\ngamma = 0.01\ngamma1 = 0.02\nn_x = 101\nn_z = 65\n"
    assert run(tmp_path, "verify", text, "--beta", "1e8") == 0


def test_verify_is_deterministic(tmp_path):
    text = BASE + "\n[calibration]\nn_x = 61\nn_z = 33\n"
    cfg = write(tmp_path, text)
    outs = []
    for k, workers in ((1, "1"), (2, "2")):
        out = tmp_path / f"o{k}"
        main(["verify", "--config", cfg, "--beta", "0.1", "--out", str(out), "--workers", workers])
        outs.append(out)
    assert (outs[0] / "margins.csv").read_bytes() == (outs[1] / "margins.csv").read_bytes()

    def body(p):
        lines = (p / "report.txt").read_text().splitlines()
        return [ln for ln in lines if not ln.startswith(("timestamp", "directory"))]

    assert body(outs[0]) == body(outs[1])


def test_scaling_command(tmp_path):
    text = (BASE.replace("bounds = -1 1", "bounds = 0 1").replace("x0 = 0", "x0 = 0.25")
            .replace("jump_constant", "jump_plus_smooth").replace("outer = -1", "outer = -1\namplitude = 0.3\nmode = 2")
            .replace("n = 64", "n = 1024"))
    assert run(tmp_path, "scaling", text) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "scaling.csv")))
    assert rows[0][0] == "beta" and len(rows) >= 5


def test_evolve_and_probe(tmp_path):
    text = (BASE.replace("jump_constant", "jump_plus_smooth").replace("inner = 1", "inner = -1")
            .replace("outer = -1", "outer = 1\namplitude = 0.5\nmode = 1")
            + "\n[evolution]\ndelta = 2e-3\nt = 0.02\nsnapshot_every = 5\n")
    assert run(tmp_path, "evolve", text) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "trace.csv")))
    assert len(rows) == 12
    assert run(tmp_path, "probe", text) == 0
    assert (tmp_path / "out" / "probe.csv").exists()


@pytest.mark.parametrize("name", ["jump_1d", "radial_2d", "scaling_1d", "evolve_1d", "jump_1d_strong"])
def test_shipped_configs_validate(name):
    load_config(CONFIGS / f"{name}.ini").validate()
