import json
import subprocess
import sys

import numpy as np
import pytest

from moltrack.cli import ConfigError, ExperimentConfig, main, run
from moltrack.modelfile import bundled_model, dump_model

from conftest import si_closed_form

SIS = ["--z0", "0.99,0.01", "--V", "200", "--T", "5", "--reps", "20", "--grid", "11"]


def invoke(capsys, *args):
    code = main(list(args))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else json.loads(err))


def test_fluid(tmp_path, capsys):
    code, s = invoke(capsys, "fluid", "si", "--z0", "1,0.01", "--T", "10", "--grid", "201", "--out-dir", str(tmp_path))
    assert code == 0
    data = np.loadtxt(tmp_path / "fluid.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(data[:, 1] - si_closed_form(data[:, 0]))) < 1e-6
    assert s["min_component"] > 0


def test_single_survival_reproduces_closed_form(tmp_path, capsys):
    code, s = invoke(
        capsys, "single", "si", "--z0", "1,0.01", "--T", "10", "--reps", "1000", "--tau0", "S~",
        "--grid", "101", "--out-dir", str(tmp_path),
    )
    assert code == 0
    data = np.loadtxt(tmp_path / "survival.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(data[:, 1] - si_closed_form(data[:, 0]))) < 0.05


@pytest.mark.parametrize(
    "mode, extra, files",
    [
        ("ssa", [], ["ssa_runs.csv", "ssa_mean.csv"]),
        ("tracked", ["--tau0", "S~"], ["tracked_status.csv", "survival.csv"]),
        ("single", ["--tau0", "S~:0.5,I~:0.5"], ["single_status.csv"]),
        ("aggregate", [], ["aggregate_runs.csv", "aggregate_mean.csv"]),
        ("functional", ["--tau0", "S~", "--transition", "S~,I~"], ["functional_tracked.csv", "functional_limit.csv"]),
        ("functional", ["--tau0", "I~", "--statuses", "I~"], ["functional_tracked.csv", "functional_limit.csv"]),
    ],
)
def test_modes_deterministic_across_threads(tmp_path, capsys, mode, extra, files):
    outs = []
    for threads in ("1", "8"):
        d = tmp_path / threads
        code, s = invoke(capsys, mode, "sis", *SIS, *extra, "--threads", threads, "--seed", "4", "--out-dir", str(d))
        assert code == 0, s
        assert s["mode"] == mode and "runtime_s" in s
        outs.append([(d / f).read_bytes() for f in files])
    assert outs[0] == outs[1]


def test_mean_csv_layout_matches_fluid(tmp_path, capsys):
    invoke(capsys, "ssa", "sis", *SIS, "--out-dir", str(tmp_path))
    invoke(capsys, "fluid", "sis", *SIS, "--out-dir", str(tmp_path))
    header = lambda f: (tmp_path / f).read_text().splitlines()[0]  # noqa: E731
    assert header("ssa_mean.csv") == header("fluid.csv") == "t,S,I"


def test_bounds_report(tmp_path, capsys):
    code, s = invoke(
        capsys, "bounds", "sis", "--z0", "0.99,0.01", "--V", "1e6", "--T", "1", "--epsilon", "0.005",
        "--nu1", "0.01", "--nu2", "0.01", "--nu3", "0.01", "--out-dir", str(tmp_path),
    )
    assert code == 0
    report = json.loads((tmp_path / "bounds.json").read_text())
    for key in ("R", "Lambda1", "L1", "delta1", "omega", "zeta", "c", "Lambda_hat3", "Lambda0_of_t"):
        assert key in report["quantities"]
    assert report["p_bound"]["clamped"] <= 1
    assert "aggregate_bound" in s["report"]


def test_bound_unavailable_exit_code(tmp_path, capsys):
    code, err = invoke(
        capsys, "bounds", "autophos", "--z0", "1,0.2", "--V", "2", "--T", "5", "--epsilon", "0.01",
        "--out-dir", str(tmp_path),
    )
    assert code == 3
    assert err["error"] == "bound unavailable"


@pytest.mark.parametrize(
    "args",
    [
        ["ssa", "sis", "--V", "0.5", "--z0", "1,0"],
        ["ssa", "sis", "--z0", "1,0,3"],
        ["ssa", "sis"],
        ["ssa", "nosuch", "--z0", "1,0"],
        ["single", "sis", "--z0", "1,0.1", "--tau0", "Q~"],
        ["bounds", "sis", "--z0", "1,0.1", "--epsilon", "-1"],
        ["functional", "sis", "--z0", "1,0.1", "--tau0", "S~", "--transition", "S~"],
    ],
)
def test_invalid_input_exit_code(tmp_path, capsys, args):
    code, err = invoke(capsys, *args, "--out-dir", str(tmp_path))
    assert code == 2
    assert err["error"] == "invalid input"


def test_model_file_errors_are_invalid_input(tmp_path, capsys):
    bad = tmp_path / "bad.model"
    bad.write_text("species: A\nreactions:\n  r: A -> Q @ 1\n")
    code, err = invoke(capsys, "fluid", str(bad), "--z0", "1", "--out-dir", str(tmp_path))
    assert code == 2 and "line 3" in err["message"]


def test_model_file_path(tmp_path, capsys):
    path = tmp_path / "sis.model"
    path.write_text(dump_model(bundled_model("sis")))
    code, _ = invoke(capsys, "fluid", str(path), "--z0", "0.9,0.1", "--out-dir", str(tmp_path))
    assert code == 0


def test_config_validation_messages(tmp_path):
    with pytest.raises(ConfigError, match="--tau0"):
        ExperimentConfig("sis", "tracked", z0=[0.9, 0.1]).validate()
    plain = tmp_path / "plain.model"
    plain.write_text("species: A, B\nreactions:\n  r: A -> B @ 1\n")
    with pytest.raises(ConfigError, match="statuses"):
        ExperimentConfig(str(plain), "tracked", z0=[0.9, 0.1], tau0="A~").validate()
    cfg = ExperimentConfig("sis", "fluid", z0=[0.9, 0.1], T=2.0)
    assert cfg.validate() is cfg


def test_run_returns_summary(tmp_path):
    s = run(ExperimentConfig("sis", "fluid", z0=[0.9, 0.1], T=2.0, out_dir=str(tmp_path)))
    assert s["files"] == [str(tmp_path / "fluid.csv")]


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "moltrack.cli", "fluid", "sis", "--z0", "0.9,0.1", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0
    assert json.loads(res.stdout)["mode"] == "fluid"
