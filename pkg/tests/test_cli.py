"""
test_cli.py - End-to-end runs of the semida subcommands
"""

import csv
import os

import pytest

import main
from dicts import BOUND_HEADER, TASK_FILES

SMALL = [
    "--set", "data.n=200", "--set", "data.m=10", "--set", "data.k=100", "--set", "data.test_size=50",
    "--set", "optim.total_iters=5", "--set", "optim.batch_size=8",
    "--set", "model.encoder_hidden=8", "--set", "model.z_dim=4", "--set", "model.head_hidden=8",
]


@pytest.fixture(autouse=True)
def home(tmp_path, monkeypatch):
    monkeypatch.setenv("SEMIDA_HOME", str(tmp_path / "home"))
    monkeypatch.setenv("LOG_FILE", str(tmp_path / "run.log"))
    return tmp_path


@pytest.fixture
def task_dir(tmp_path):
    out = str(tmp_path / "task")
    assert main.main(["gen-data", "--scenario", "covariate_shift", "--seed", "3", "--out", out] + SMALL) == 0
    return out


@pytest.fixture
def model_path(task_dir, tmp_path):
    out = str(tmp_path / "train")
    assert main.main(["train", "--method", "lirr", "--task", task_dir, "--out", out] + SMALL) == 0
    return os.path.join(out, "model.ckpt")


def test_gen_data_writes_task(task_dir):
    for name in TASK_FILES.values():
        assert os.path.isfile(os.path.join(task_dir, name))
    with open(os.path.join(task_dir, TASK_FILES["source"]), encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 201


def test_train_outputs(task_dir, tmp_path, capsys):
    out = str(tmp_path / "dann")
    assert main.main(["train", "--method", "dann", "--task", task_dir, "--out", out] + SMALL) == 0
    assert {"model.ckpt", "metrics.csv", "config.cfg"} <= set(os.listdir(out))
    assert "dann: src=" in capsys.readouterr().out
    with open(os.path.join(out, "metrics.csv"), encoding="utf-8") as f:
        assert f.readline().startswith("iter,")


def test_evaluate(task_dir, model_path, capsys):
    assert main.main(["evaluate", "--task", task_dir, "--model", model_path]) == 0
    assert "target accuracy" in capsys.readouterr().out


@pytest.mark.parametrize("mode", ["population", "finite_sample"])
def test_bound(task_dir, model_path, tmp_path, capsys, mode):
    out = str(tmp_path / f"bound-{mode}")
    assert main.main(["bound", "--task", task_dir, "--model", model_path, "--mode", mode, "--out", out]) == 0
    assert "bound total" in capsys.readouterr().out
    with open(os.path.join(out, "bound.csv"), encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == BOUND_HEADER
    assert rows[1][0] == mode


def test_sweep_and_plot(tmp_path):
    config = tmp_path / "exp.cfg"
    config.write_text(
        "[experiment]\nname = cli\nmethods = lirr, s_plus_t\nseeds = 2\njobs = 1\n\n"
        "[scenario]\nkind = covariate_shift\n\n"
        "[data]\nn = 200\nk = 100\nm = 5, 10, 20\ntest_size = 50\n\n"
        "[optim]\ntotal_iters = 5\nbatch_size = 8\n\n"
        "[model]\nencoder_hidden = 8\nz_dim = 4\nhead_hidden = 8\n",
        encoding="utf-8",
    )
    out = str(tmp_path / "sweep")
    assert main.main(["sweep", "--config", str(config), "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "results.csv"), encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 1 + 2 * 3 * 2
    assert os.path.isfile(os.path.join(out, "curve.svg"))

    svg = str(tmp_path / "replot.svg")
    assert main.main(["plot", "--results", out, "--out", svg]) == 0
    assert open(svg, encoding="utf-8").read().lstrip().startswith("<?xml")


def test_unknown_subcommand():
    assert main.main(["fly"]) == 2


def test_bad_override():
    assert main.main(["gen-data", "--set", "optim.nesterov=true"]) == 2


def test_missing_task_crashes_cleanly(tmp_path, capsys):
    code = main.main(["evaluate", "--task", str(tmp_path / "nowhere"), "--model", str(tmp_path / "m.ckpt")])
    assert code == 1
    assert "CRASH REPORT" in capsys.readouterr().err


def test_single_size_sweep_still_plots(tmp_path):
    out = str(tmp_path / "one")
    overrides = ["--set", "experiment.methods=lirr", "--set", "experiment.seeds=1", "--set", "experiment.jobs=1"]
    assert main.main(["sweep", "--out", out, "--quiet"] + SMALL + overrides) == 0
    assert os.path.isfile(os.path.join(out, "curve.svg"))


@pytest.mark.parametrize("command", ["evaluate", "bound"])
def test_task_is_required(command, tmp_path):
    assert main.main([command, "--model", str(tmp_path / "m.ckpt")]) == 2
