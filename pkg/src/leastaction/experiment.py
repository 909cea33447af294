"""Experiment configs and the baseline -> perturb -> optimize -> report pipeline."""
from __future__ import annotations

import contextlib
import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Optional

import numpy as np

from . import ephemeris as eph
from .errors import ConfigError, DivergenceError, LeastActionError
from .integrator import InitialState, rest_terminated_state, substep_integrate
from .optimizer import Mitigation, OptimizeConfig, compare_paths, minimize_action, perturb
from .path import Path, action
from .svg import PALETTE, Chart
from .systems import DEFAULT_HYPERPARAMS, jittered_lattice, make_system

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "ExperimentResult",
    "PRESETS",
    "preset",
    "build_baseline",
    "run_experiment",
    "compare_paths",
]

SYSTEMS = tuple(DEFAULT_HYPERPARAMS)

# Desk-scale setups. Most trajectories come to rest at their final point:
# the last velocity of a discrete path repeats the one before it, which only
# agrees with the true motion when the body is (nearly) stopped there.
PRESETS = {
    "free_body": {
        "system": "free_body",
        "n_points": 40,
        "initial": {"x0": [0.0], "v0": [9.75]},
    },
    "pendulum": {
        "system": "pendulum",
        "n_points": 11,
        "dt": 0.25,
        "initial": {"rest_at_end": [2.44]},
    },
    "double_pendulum": {
        "system": "double_pendulum",
        "n_points": 6,
        "initial": {"x0": [1.0, -1.0], "v0": [1.0, 1.0]},
    },
    "three_body": {
        "system": "three_body",
        "n_points": 4,
        "initial": {"rest_at_end": [0.0, 0.0, 10.0, 0.0, 3.0, 8.0]},
    },
    "gas": {
        "system": "gas",
        "n_points": 8,
        "params": {"box": [30.0, 15.0]},
        "initial": {"lattice": {"cols": 10, "rows": 5, "spacing": 3.0, "jitter": 0.1, "seed": 1}},
    },
    "ephemeris": {
        "system": "ephemeris",
        "window": [0, 61],
    },
}

_OPT_KEYS = {"steps", "lr", "noise_sigma", "seed", "mitigation", "snapshot_every", "adam_beta1", "adam_beta2", "adam_eps"}
_EMIT_KEYS = {"history", "paths", "svg"}
_TOP_KEYS = {"system", "params", "n_points", "dt", "refinement", "initial", "window", "ephemeris_file", "optimizer", "emit", "out"}


def _mitigation_from(obj):
    if obj is None:
        return Mitigation()
    if isinstance(obj, str):
        obj = {"kind": obj}
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("mitigation must be a name or an object with a 'kind'")
    unknown = set(obj) - {"kind", "k", "lam"}
    if unknown:
        raise ConfigError(f"unknown mitigation keys: {sorted(unknown)}")
    return Mitigation(obj["kind"], int(obj.get("k", 0)), float(obj.get("lam", 0.0)))


@dataclass(frozen=True)
class ExperimentConfig:
    system: str
    params: dict = field(default_factory=dict)
    n_points: Optional[int] = None
    dt: Optional[float] = None
    refinement: int = 100
    initial: dict = field(default_factory=dict)
    window: Optional[tuple] = None
    ephemeris_file: Optional[str] = None
    optimizer: OptimizeConfig = None
    emit_history: bool = True
    emit_paths: bool = True
    emit_svg: bool = True
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; expected one of {list(SYSTEMS)}")
        if self.refinement < 1:
            raise ConfigError("refinement must be >= 1")
        if self.n_points is not None and self.n_points < 3:
            raise ConfigError("n_points must be >= 3")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.system == "ephemeris":
            if self.initial:
                raise ConfigError("the ephemeris experiment takes its initial state from the table")
        elif not self.initial:
            raise ConfigError(f"{self.system}: an 'initial' block is required")
        if self.optimizer is None:
            object.__setattr__(self, "optimizer", OptimizeConfig.for_system(self.make_system()))

    def make_system(self):
        params = dict(self.params)
        if self.system == "gas" and "box" in params:
            params["box"] = tuple(params["box"])
        try:
            return make_system(self.system, **params)
        except TypeError as exc:
            raise ConfigError(f"{self.system}: bad parameters: {exc}") from None

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "system" not in d:
            raise ConfigError("config needs a 'system'")
        opt = dict(d.get("optimizer") or {})
        bad = set(opt) - _OPT_KEYS
        if bad:
            raise ConfigError(f"unknown optimizer keys: {sorted(bad)}")
        emit = dict(d.get("emit") or {})
        bad = set(emit) - _EMIT_KEYS
        if bad:
            raise ConfigError(f"unknown emit keys: {sorted(bad)}")
        for key in ("steps", "seed"):
            if overrides.get(key) is not None:
                opt[key] = overrides[key]
        out = overrides.get("out") or d.get("out")

        base = cls(
            system=d["system"],
            params=dict(d.get("params") or {}),
            n_points=d.get("n_points"),
            dt=d.get("dt"),
            refinement=int(d.get("refinement", 100)),
            initial=dict(d.get("initial") or {}),
            window=tuple(d["window"]) if d.get("window") is not None else None,
            ephemeris_file=d.get("ephemeris_file"),
            emit_history=bool(emit.get("history", True)),
            emit_paths=bool(emit.get("paths", True)),
            emit_svg=bool(emit.get("svg", True)),
            out_dir=out,
        )
        if "mitigation" in opt:
            opt["mitigation"] = _mitigation_from(opt["mitigation"])
        try:
            return replace(base, optimizer=base.optimizer.with_(**opt))
        except TypeError as exc:
            raise ConfigError(f"bad optimizer settings: {exc}") from None

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        try:
            d = json.loads(FsPath(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(d, **overrides)

    def to_dict(self) -> dict:
        o = self.optimizer
        d = {
            "system": self.system,
            "params": self.params,
            "n_points": self.n_points,
            "dt": self.dt,
            "refinement": self.refinement,
            "initial": self.initial,
            "optimizer": {
                "steps": o.steps,
                "lr": o.lr,
                "noise_sigma": o.noise_sigma,
                "seed": o.seed,
                "mitigation": o.mitigation.to_dict(),
                "snapshot_every": o.snapshot_every,
                "adam_beta1": o.adam_beta1,
                "adam_beta2": o.adam_beta2,
                "adam_eps": o.adam_eps,
            },
            "emit": {"history": self.emit_history, "paths": self.emit_paths, "svg": self.emit_svg},
        }
        if self.system == "ephemeris":
            d["window"] = list(self.window or (0, eph.DEFAULT_WINDOW_DAYS))
            d["ephemeris_file"] = self.ephemeris_file
        return d


def preset(system: str, **overrides) -> ExperimentConfig:
    """Compiled-in configuration for ``system`` with the default hyperparameters."""
    if system not in PRESETS:
        raise ConfigError(f"no preset for {system!r}; expected one of {list(PRESETS)}")
    return ExperimentConfig.from_dict(json.loads(json.dumps(PRESETS[system])), **overrides)


@dataclass
class Baseline:
    system: object
    reference: Path
    state: InitialState


def build_baseline(config: ExperimentConfig) -> Baseline:
    """Reference path for a config: integrated, or read from the ephemeris table."""
    if config.system == "ephemeris":
        src = config.ephemeris_file or eph.default_data_path()
        table = eph.load_ephemeris(src)
        window = config.window or (0, eph.DEFAULT_WINDOW_DAYS)
        fixed = tuple(config.params.get("fixed_bodies", ("Sun",)))
        ref, state, system = eph.to_experiment(table, window, fixed=fixed)
        return Baseline(system, ref, state)

    system = config.make_system()
    n = config.n_points
    if n is None:
        raise ConfigError(f"{config.system}: n_points is required")
    dt = config.dt if config.dt is not None else system.dt_default
    init = config.initial
    keys = set(init)
    if keys == {"x0", "v0"}:
        state = InitialState(init["x0"], init["v0"])
    elif keys == {"rest_at_end"}:
        state = rest_terminated_state(system, init["rest_at_end"], dt, n, config.refinement)
    elif keys == {"lattice"}:
        if config.system != "gas":
            raise ConfigError("'lattice' initial positions only apply to the gas")
        lat = dict(init["lattice"])
        x_end = jittered_lattice(**lat)
        if x_end.size != system.dim:
            raise ConfigError(f"lattice gives {x_end.size // 2} particles, system has {system.dim // 2}")
        state = rest_terminated_state(system, x_end, dt, n, config.refinement)
    else:
        raise ConfigError("'initial' needs x0 and v0, rest_at_end, or lattice")
    if state.x0.size != system.dim:
        raise ConfigError(f"initial state has {state.x0.size} coordinates, {config.system} needs {system.dim}")
    ref = substep_integrate(system, state, dt, n, config.refinement)
    return Baseline(system, ref, state)


@dataclass
class ExperimentReport:
    system: str
    n_points: int
    dim: int
    dt: float
    seed: int
    steps: int
    mitigation: str
    ode_S: float
    ode_T: float
    ode_V: float
    sim_S: float
    sim_T: float
    sim_V: float
    initial_mse: float
    final_mse: float
    best_step: int
    last_mse: float
    diverged_at: Optional[int] = None
    wall_time_s: float = 0.0  # kept out of report.txt so reruns stay identical
    files: list = field(default_factory=list)

    @property
    def mse_ratio(self):
        return self.initial_mse / self.final_mse if self.final_mse > 0 else float("inf")

    def lines(self):
        keys = [
            "system", "n_points", "dim", "dt", "seed", "steps", "mitigation",
            "ode_S", "ode_T", "ode_V", "sim_S", "sim_T", "sim_V",
            "initial_mse", "final_mse", "best_step", "last_mse", "diverged_at",
        ]
        out = []
        for k in keys:
            v = getattr(self, k)
            out.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
        out.append("files=" + ",".join(self.files))
        return out

    def to_text(self):
        return "\n".join(self.lines()) + "\n"


@dataclass
class ExperimentResult:
    report: ExperimentReport
    reference: Path
    initial: Path
    history: object
    system: object

    @property
    def best_path(self):
        return self.history.best_path


@contextlib.contextmanager
def _phase(name):
    try:
        yield
    except LeastActionError as exc:
        if not getattr(exc, "phase", None):
            exc.phase = name
            exc.args = (f"{name}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
        raise


def write_path_csv(path, p: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"coord_{j}" for j in range(p.dim)])
        for t, row in zip(p.times, p.coords):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "S", "T", "V", "mse", "grad_norm"])
        for r in history.records:
            mse = "" if r.mse is None else repr(r.mse)
            w.writerow([r.step, repr(r.S), repr(r.T_sum), repr(r.V_sum), mse, repr(r.grad_norm)])


def _history_svg(path, history, title):
    chart = Chart(f"{title}: action, kinetic and potential sums")
    steps = history.column("step")
    for name, label, color in (("S", "S", PALETTE[0]), ("T_sum", "T", PALETTE[1]), ("V_sum", "V", PALETTE[2])):
        chart.line(steps, history.column(name), color, label=label)
    chart.save(path)


def _paths_svg(path, system, reference, initial, best, title):
    if getattr(system, "n_bodies", None) is not None and reference.dim % 2 == 0 and reference.dim > 2:
        chart = Chart(f"{title}: trajectories (x, y)", equal_aspect=True)
        for j in range(reference.dim // 2):
            col = PALETTE[j % len(PALETTE)]
            chart.line(reference.coords[:, 2 * j], reference.coords[:, 2 * j + 1], "#999999", dashed=True,
                       label="reference" if j == 0 else None)
            chart.dots(initial.coords[:, 2 * j], initial.coords[:, 2 * j + 1], "#d62728", radius=1.5,
                       label="perturbed" if j == 0 else None)
            chart.line(best.coords[:, 2 * j], best.coords[:, 2 * j + 1], col, label="optimized" if j == 0 else None)
    else:
        chart = Chart(f"{title}: coordinates vs time")
        t = reference.times
        for j in range(reference.dim):
            first = j == 0
            chart.line(t, reference.coords[:, j], "#999999", dashed=True, label="reference" if first else None)
            chart.dots(t, initial.coords[:, j], "#d62728", label="perturbed" if first else None)
            chart.line(t, best.coords[:, j], PALETTE[j % len(PALETTE)], label="optimized" if first else None)
    chart.save(path)


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Baseline, perturb, optimize, and report; writes files when ``config.out_dir`` is set."""
    t_start = time.perf_counter()
    opt = config.optimizer
    with _phase("baseline"):
        base = build_baseline(config)
    system, ref = base.system, base.reference
    with _phase("perturb"):
        p0 = perturb(ref, opt.noise_sigma, opt.seed, fixed_columns=system.fixed_columns)
    with _phase("optimize"):
        hist = minimize_action(p0, system, opt, reference=ref, initial_state=base.state)

    with _phase("report"):
        ode = action(ref, system)
        sim = action(hist.best_path, system)
        mse = hist.column("mse")
        report = ExperimentReport(
            system=config.system,
            n_points=ref.n,
            dim=ref.dim,
            dt=ref.dt,
            seed=opt.seed,
            steps=opt.steps,
            mitigation=opt.mitigation.kind,
            ode_S=ode.S,
            ode_T=ode.T_sum,
            ode_V=ode.V_sum,
            sim_S=sim.S,
            sim_T=sim.T_sum,
            sim_V=sim.V_sum,
            initial_mse=float(mse[0]),
            final_mse=float(mse[hist.best_step]),
            best_step=hist.best_step,
            last_mse=float(mse[-1]),
            diverged_at=hist.diverged_at,
        )
        if write and config.out_dir:
            _write_outputs(config, report, ref, p0, hist, system)
        report.wall_time_s = time.perf_counter() - t_start
    if hist.diverged_at is not None:
        exc = DivergenceError(f"optimize: action became non-finite at step {hist.diverged_at}", step=hist.diverged_at)
        exc.phase = "optimize"
        exc.result = ExperimentResult(report, ref, p0, hist, system)
        raise exc
    log.info("%s: mse %.3g -> %.3g (best step %d)", config.system, report.initial_mse, report.final_mse, report.best_step)
    return ExperimentResult(report, ref, p0, hist, system)


def _write_outputs(config, report, ref, p0, hist, system):
    out = FsPath(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = ["config.json"]
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    if config.emit_history:
        write_history_csv(out / "history.csv", hist)
        files.append("history.csv")
    if config.emit_paths:
        for name, p in (("initial", p0), ("reference", ref), ("final", hist.best_path)):
            write_path_csv(out / f"{name}.csv", p)
            files.append(f"{name}.csv")
    if config.emit_svg:
        _history_svg(out / "history.svg", hist, config.system)
        _paths_svg(out / "paths.svg", system, ref, p0, hist.best_path, config.system)
        files += ["history.svg", "paths.svg"]
    files.append("report.txt")
    report.files = files
    (out / "report.txt").write_text(report.to_text())


def write_baseline(config: ExperimentConfig, out_dir) -> dict:
    """Integrate only; writes ``reference.csv`` and ``baseline.txt``."""
    with _phase("baseline"):
        base = build_baseline(config)
    parts = action(base.reference, base.system)
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_path_csv(out / "reference.csv", base.reference)
    info = {
        "system": config.system,
        "n_points": base.reference.n,
        "dt": base.reference.dt,
        "S": parts.S,
        "T": parts.T_sum,
        "V": parts.V_sum,
    }
    lines = [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in info.items()]
    (out / "baseline.txt").write_text("\n".join(lines) + "\n")
    return info
