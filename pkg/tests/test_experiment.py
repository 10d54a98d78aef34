import json

import numpy as np
import pytest

from hesspcl import experiment
from hesspcl.cli import main
from hesspcl.experiment import (
    SUMMARY_COLUMNS,
    ConfigError,
    ExperimentConfig,
    build_problem,
    config_from_mapping,
    execute,
    load_config,
    sweep,
    sweep_configs,
)
from hesspcl.nn import load_params
from hesspcl.tape import forward


def toy(tmp_path, **kw):
    return ExperimentConfig(problem="toy-one-layer", out=str(tmp_path / "toy"), **kw)


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.hidden_sizes == (20, 20, 20) and cfg.grid == 10 and cfg.max_iters == 5000
    assert cfg.noise_level == 0.1
    assert ExperimentConfig(problem="heat").noise_level == 0.0
    assert ExperimentConfig(problem="toy-one-layer").hidden_sizes == (1,)
    assert ExperimentConfig(hidden=[5, 5]).hidden_sizes == (5, 5)


@pytest.mark.parametrize(
    "field, value",
    [("problem", "wave"), ("optimizer", "sgd"), ("seed", -1), ("grid", 1), ("depth", 0), ("dt", 0.0),
     ("noise", -0.5), ("noise_distribution", "gaussian"), ("hidden", []), ("angles", "yes"), ("max_iters", 2.5)],
)
def test_validation_names_the_field(field, value):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(**{field: value})
    assert info.value.field == field
    assert str(info.value).startswith(f"{field}: ")


def test_probe_dimension_checked():
    with pytest.raises(ConfigError, match="probe"):
        ExperimentConfig(problem="heat", probe=(0.5,))


def test_mapping_and_file_loading(tmp_path):
    with pytest.raises(ConfigError, match="colour"):
        config_from_mapping({"colour": "red"})
    cfg = config_from_mapping({"seed": 3, "width": 7}, seed=4, width=None)
    assert cfg.seed == 4 and cfg.width == 7
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"problem": "heat", "depth": 2}))
    assert load_config(path, depth=1).depth == 1
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="config"):
        load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_digest_ignores_output_directory():
    a, b = ExperimentConfig(out="x"), ExperimentConfig(out="y")
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig(seed=2).digest()


@pytest.mark.parametrize("problem", ["poisson-fd", "heat", "poisson-fem", "toy-one-layer"])
def test_problems_build_and_evaluate(problem):
    cfg = ExperimentConfig(problem=problem, grid=4, steps=2, hidden=(3,))
    p = build_problem(cfg)
    theta = np.zeros(p.spec.n_params)
    assert np.isfinite(forward(p.tape, theta + 0.1)[0])
    assert (p.dnn_only_tape is None) == (problem == "toy-one-layer")


def test_toy_run_artifacts(tmp_path):
    res = execute(toy(tmp_path))
    assert res.spectrum.counts[1] == 3
    out = tmp_path / "toy"
    names = {"history.csv", "spectrum.csv", "weights_cdf.csv", "activations.csv", "profile.csv", "report.json", "params.txt"}
    assert names <= {p.name for p in out.iterdir()}
    for name in names - {"report.json"}:
        lines = (out / name).read_text().splitlines()
        assert lines[0] == "# hesspcl 0.1.0" and lines[1] == f"# config {res.config.digest()}"
    report = json.loads((out / "report.json").read_text())
    assert report["tool_version"] == "0.1.0" and report["config_digest"] == res.config.digest()
    assert report["spectrum"]["zero"] == 3
    theta, seed = load_params(out / "params.txt")
    assert seed == 1 and np.array_equal(theta, res.theta)


def test_runs_are_byte_identical(tmp_path):
    a = execute(toy(tmp_path, angles=True), write=True).files
    b = execute(ExperimentConfig(problem="toy-one-layer", angles=True, out=str(tmp_path / "again")), write=True).files
    assert a.keys() == b.keys() and "angles.csv" in a
    for name in a:
        assert (tmp_path / "toy" / name).read_bytes() == (tmp_path / "again" / name).read_bytes(), name


def test_fd_run_small(tmp_path):
    cfg = ExperimentConfig(grid=4, hidden=(3,), max_iters=20, out=str(tmp_path / "fd"))
    res = execute(cfg)
    assert "dnn_only_spectrum" in res.report and (tmp_path / "fd" / "dnn_only_spectrum.csv").exists()
    losses = res.history.losses()
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_sweep_configs():
    cfgs = sweep_configs(ExperimentConfig(hidden=(4,), out="base"), "depth", [1, 2])
    assert [c.hidden_sizes for c in cfgs] == [(20,), (20, 20)]
    assert cfgs[1].out.endswith("depth-2")
    with pytest.raises(ConfigError):
        sweep_configs(ExperimentConfig(), "colour", [1])
    with pytest.raises(ConfigError):
        sweep_configs(ExperimentConfig(), "seed", [])


def test_optimizer_sweep_rows_and_determinism(tmp_path):
    template = toy(tmp_path, max_iters=30)
    text, results = sweep(template, "optimizer", ["adam", "bfgs", "lbfgs", "trust-region"])
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    assert len(lines) == 5 and all(r is not None for r in results)
    again, _ = sweep(template, "optimizer", ["adam", "bfgs", "lbfgs", "trust-region"], write=False)
    assert again == text
    assert (tmp_path / "toy" / "summary.csv").read_text() == text


def test_sweep_records_row_failures(tmp_path, monkeypatch):
    real = experiment.execute

    def flaky(cfg, write=True):
        if cfg.seed == 2:
            raise RuntimeError("solver blew up")
        return real(cfg, write=write)

    monkeypatch.setattr(experiment, "execute", flaky)
    text, results = sweep(toy(tmp_path, max_iters=5), "seed", [1, 2, 3], write=False)
    rows = [l for l in text.splitlines() if l.startswith("seed,")]
    assert len(rows) == 3 and results[1] is None
    assert rows[1].endswith("RuntimeError: solver blew up") and rows[2].endswith(",")


def test_cli_run_and_invalid_config(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["run", "--problem", "toy-one-layer", "--optimizer", "trust-region", "--seed", "1", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "stop_reason=" in printed and "(1, 3, 0)" in printed
    assert main(["run", "--problem", "toy-one-layer", "--grid", "1"]) == 2
    assert "invalid configuration: grid:" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "toy-one-layer", "optimizer": "bfgs", "max_iters": 5}))
    assert main(["run", "--config", str(cfg), "--optimizer", "adam", "--out", str(tmp_path / "c")]) == 0
    assert json.loads((tmp_path / "c" / "report.json").read_text())["config"]["optimizer"] == "adam"


def test_cli_sweep(tmp_path, capsys):
    args = ["sweep", "--problem", "toy-one-layer", "--max-iters", "5", "--out", str(tmp_path / "s"), "--axis", "seed"]
    assert main(args + ["--values", "1,2"]) == 0
    assert (tmp_path / "s" / "summary.csv").exists() and (tmp_path / "s" / "seed-2" / "history.csv").exists()
    assert main(args + ["--values", "1,x"]) == 2
    assert main(args + ["--values", ","]) == 2
    capsys.readouterr()


def test_cli_verify_single_suite(capsys):
    assert main(["verify", "--suite", "sparse_solver"]) == 0
    assert "sparse_solver" in capsys.readouterr().out
