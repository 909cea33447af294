import json
import subprocess
import sys

import numpy as np
import pytest

from leastaction.cli import main
from leastaction.errors import ConfigError, DomainError
from leastaction.experiment import (
    PRESETS,
    ExperimentConfig,
    build_baseline,
    preset,
    run_experiment,
)
from leastaction.optimizer import perturb
from leastaction.path import Path, action


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), np.array([[float(v) if v else np.nan for v in l.split(",")] for l in lines[1:]])


def test_free_body_default_config_recovers():
    r = run_experiment(preset("free_body"), write=False).report
    assert r.final_mse <= 0.01 * r.initial_mse
    assert r.steps == 500


def test_zero_steps_report_is_the_perturbed_path():
    cfg = preset("pendulum", steps=0)
    res = run_experiment(cfg, write=False)
    b = build_baseline(cfg)
    p0 = perturb(b.reference, cfg.optimizer.noise_sigma, cfg.optimizer.seed)
    parts = action(p0, b.system)
    r = res.report
    assert (r.sim_S, r.sim_T, r.sim_V) == (parts.S, parts.T_sum, parts.V_sum)
    assert r.final_mse == r.initial_mse and r.best_step == 0


def test_written_files_and_report_consistency(tmp_path):
    out = tmp_path / "dp"
    res = run_experiment(preset("double_pendulum", out=str(out)))
    r = res.report
    assert r.files == [
        "config.json", "history.csv", "initial.csv", "reference.csv", "final.csv",
        "history.svg", "paths.svg", "report.txt",
    ]
    for name in r.files:
        assert (out / name).is_file()

    head, hist = read_csv(out / "history.csv")
    assert head == ["step", "S", "T", "V", "mse", "grad_norm"]
    assert hist.shape == (501, 6)

    dt = r.dt
    paths = {}
    for name in ("reference", "final", "initial"):
        head, data = read_csv(out / f"{name}.csv")
        assert head == ["t", "coord_0", "coord_1"]
        np.testing.assert_array_equal(data[:, 0], np.arange(r.n_points) * dt)
        paths[name] = Path(data[:, 1:], dt)
    # the report must agree exactly with the action of the stored paths
    ode, sim = action(paths["reference"], res.system), action(paths["final"], res.system)
    assert (r.ode_S, r.ode_T, r.ode_V) == (ode.S, ode.T_sum, ode.V_sum)
    assert (r.sim_S, r.sim_T, r.sim_V) == (sim.S, sim.T_sum, sim.V_sum)

    kv = dict(line.split("=", 1) for line in (out / "report.txt").read_text().splitlines())
    assert float(kv["sim_S"]) == r.sim_S and float(kv["initial_mse"]) == r.initial_mse
    assert "wall_time" not in (out / "report.txt").read_text()
    assert (out / "paths.svg").read_text().startswith("<svg")
    cfg = json.loads((out / "config.json").read_text())
    assert ExperimentConfig.from_dict(cfg).to_dict() == cfg


def test_rerun_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        run_experiment(preset("three_body", out=str(tmp_path / name), steps=200))
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_emit_flags(tmp_path):
    d = dict(PRESETS["free_body"], emit={"svg": False, "history": False}, out=str(tmp_path))
    run_experiment(ExperimentConfig.from_dict(d))
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"config.json", "initial.csv", "reference.csv", "final.csv", "report.txt"}


@pytest.mark.parametrize(
    "bad",
    [
        {"system": "rocket", "n_points": 5, "initial": {"x0": [0], "v0": [0]}},
        {"system": "pendulum", "n_points": 5, "initial": {"x0": [0], "v0": [0]}, "colour": 1},
        {"system": "pendulum", "n_points": 5},
        {"system": "pendulum", "n_points": 2, "initial": {"x0": [0], "v0": [0]}},
        {"system": "pendulum", "n_points": 5, "initial": {"x0": [0]}},
        {"system": "pendulum", "n_points": 5, "initial": {"x0": [0], "v0": [0]}, "optimizer": {"lr": -1}},
        {"system": "pendulum", "n_points": 5, "initial": {"x0": [0], "v0": [0]}, "optimizer": {"momentum": 1}},
        {"system": "pendulum", "n_points": 5, "initial": {"x0": [0], "v0": [0]},
         "optimizer": {"mitigation": {"kind": "freeze_adjacent", "k": 0}}},
        {"system": "pendulum", "n_points": 5, "initial": {"x0": [0], "v0": [0]}, "params": {"rope": 2}},
        {"system": "pendulum", "n_points": 5, "initial": {"lattice": {}}},
    ],
)
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        build_baseline(ExperimentConfig.from_dict(bad))


def test_phase_label_on_errors():
    d = {"system": "three_body", "n_points": 5, "initial": {"x0": [0, 0, 0, 0, 3, 8], "v0": [0] * 6}}
    with pytest.raises(DomainError) as info:
        run_experiment(ExperimentConfig.from_dict(d), write=False)
    assert info.value.phase == "baseline"
    assert str(info.value).startswith("baseline:")


def test_cli_run_preset_and_config(tmp_path, capsys):
    assert main(["run", "free_body", "--out", str(tmp_path / "fb"), "--steps", "20"]) == 0
    assert "free_body" in capsys.readouterr().out
    cfg = tmp_path / "pend.json"
    cfg.write_text(json.dumps(dict(PRESETS["pendulum"], optimizer={"steps": 10})))
    assert main(["run", str(cfg), "--out", str(tmp_path / "p"), "--seed", "4"]) == 0
    report = (tmp_path / "p" / "report.txt").read_text()
    assert "seed=4" in report and "steps=10" in report


def test_cli_parallel_matches_serial(tmp_path):
    cfgs = []
    for name in ("free_body", "pendulum"):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(PRESETS[name]))
        cfgs.append(str(p))
    assert main(["run", *cfgs, "--out", str(tmp_path / "serial"), "--steps", "30"]) == 0
    assert main(["run", *cfgs, "--out", str(tmp_path / "par"), "--steps", "30", "--parallel", "2"]) == 0
    for name in ("free_body", "pendulum"):
        for f in (tmp_path / "serial" / name).iterdir():
            assert f.read_bytes() == (tmp_path / "par" / name / f.name).read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"system": "rocket"}))
    assert main(["run", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert main(["run", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x")]) == 1
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["run", str(tmp_path / "junk.json"), "--out", str(tmp_path / "x")]) == 1
    crash = tmp_path / "crash.json"
    crash.write_text(json.dumps({"system": "three_body", "n_points": 5,
                                 "initial": {"x0": [0, 0, 0, 0, 3, 8], "v0": [0] * 6}}))
    assert main(["run", str(crash), "--out", str(tmp_path / "y")]) == 2
    err = capsys.readouterr().err
    assert "baseline" in err


def test_cli_baseline(tmp_path):
    assert main(["baseline", "pendulum", "--out", str(tmp_path)]) == 0
    kv = dict(l.split("=", 1) for l in (tmp_path / "baseline.txt").read_text().splitlines())
    head, data = read_csv(tmp_path / "reference.csv")
    b = build_baseline(preset("pendulum"))
    assert float(kv["S"]) == action(b.reference, b.system).S
    np.testing.assert_array_equal(data[:, 1:], b.reference.coords)


def test_cli_quantum_three_scales(tmp_path):
    cfg = tmp_path / "q.json"
    cfg.write_text(json.dumps({"grid": {"n_points": 64}, "scales": [0.5, 1, 2], "steps": 20, "snapshot_every": 10}))
    assert main(["quantum", str(cfg), "--out", str(tmp_path / "q")]) == 0
    names = sorted(p.name for p in (tmp_path / "q").iterdir())
    assert names == sorted(
        [f"snapshots_scale_{s}.csv" for s in ("0.5", "1", "2")]
        + [f"kphase_scale_{s}.pgm" for s in ("0.5", "1", "2")]
        + ["report.txt"]
    )
    lines = (tmp_path / "q" / "snapshots_scale_2.csv").read_text().splitlines()
    assert lines[0] == "step,x,re,im,prob" and len(lines) == 1 + 3 * 64


def test_cli_quantum_bad_config(tmp_path):
    cfg = tmp_path / "q.json"
    cfg.write_text(json.dumps({"grid": {"n_points": 64, "shape": "ring"}}))
    assert main(["quantum", str(cfg), "--out", str(tmp_path / "q")]) == 1
    cfg.write_text(json.dumps({"grid": {"potential": {"kind": "well"}}}))
    assert main(["quantum", str(cfg), "--out", str(tmp_path / "q")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "leastaction", "run", "pendulum", "--steps", "5", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "report.txt").is_file()
