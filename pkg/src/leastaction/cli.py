"""Command-line driver.

    leastaction run CONFIG.json [CONFIG.json ...] [--out DIR] [--seed N] [--steps N] [--parallel K]
    leastaction run SYSTEM                 (compiled-in preset)
    leastaction baseline SYSTEM [--out DIR] [--steps N]
    leastaction quantum CONFIG.json [--out DIR] [--steps N]

Exit status: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path as FsPath

import numpy as np

from .errors import ConfigError, EphemerisParseError, InvalidPathError, LeastActionError
from .experiment import PRESETS, ExperimentConfig, preset, run_experiment, write_baseline
from .quantum import (
    SpatialGrid,
    desk_grid,
    gaussian_packet,
    scale_sweep,
    write_phase_pgm,
    write_snapshots_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("leastaction")


def _exit_code(exc) -> int:
    if isinstance(exc, (ConfigError, EphemerisParseError, InvalidPathError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def _load_config(source, out, seed, steps) -> ExperimentConfig:
    if source in PRESETS:
        return preset(source, out=out, seed=seed, steps=steps)
    return ExperimentConfig.load(source, out=out, seed=seed, steps=steps)


def _run_one(job):
    """Run one config; returns ``(source, exit code, message)``. Top-level so worker processes can import it."""
    source, out, seed, steps = job
    try:
        config = _load_config(source, out, seed, steps)
        if config.out_dir is None:
            raise ConfigError(f"{source}: no output directory (set 'out' or pass --out)")
        r = run_experiment(config).report
    except LeastActionError as exc:
        return source, _exit_code(exc), str(exc)
    msg = (
        f"{config.system}: S ode={r.ode_S:.6g} sim={r.sim_S:.6g}  "
        f"mse {r.initial_mse:.4g} -> {r.final_mse:.4g} (x{r.mse_ratio:.1f}, best step {r.best_step})  "
        f"-> {config.out_dir}"
    )
    return source, EXIT_OK, msg


def cmd_run(args) -> int:
    sources = args.configs
    jobs = []
    for source in sources:
        out = args.out
        if out is not None and len(sources) > 1:
            out = str(FsPath(out) / FsPath(source).stem)
        elif out is None and source in PRESETS:
            out = str(FsPath("runs") / source)
        jobs.append((source, out, args.seed, args.steps))
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    code = EXIT_OK
    for source, rc, msg in results:
        stream = sys.stdout if rc == EXIT_OK else sys.stderr
        print(msg if rc == EXIT_OK else f"error: {source}: {msg}", file=stream)
        code = max(code, rc)
    return code


def cmd_baseline(args) -> int:
    config = preset(args.system, steps=args.steps)
    out = args.out or str(FsPath("runs") / f"{args.system}_baseline")
    info = write_baseline(config, out)
    print(f"{args.system}: N={info['n_points']} dt={info['dt']!r} S={info['S']!r} T={info['T']!r} V={info['V']!r} -> {out}")
    return EXIT_OK


_QUANTUM_KEYS = {"grid", "packet", "scales", "steps", "snapshot_every", "out"}
_GRID_KEYS = {"n_points", "length", "mass", "hbar", "dt", "max_increment", "potential"}


def _potential(pot):
    if pot is None or pot == "free":
        return None
    if not isinstance(pot, dict) or "kind" not in pot:
        raise ConfigError("potential must be 'free' or an object with a 'kind'")
    kind = pot["kind"]
    if kind == "harmonic":
        k, c = float(pot.get("k", 1.0)), float(pot.get("center", 0.5))
        return lambda x: 0.5 * k * (x - c) ** 2
    if kind == "barrier":
        h, lo, hi = float(pot["height"]), float(pot["start"]), float(pot["end"])
        return lambda x: np.where((x >= lo) & (x <= hi), h, 0.0)
    raise ConfigError(f"unknown potential kind {kind!r}")


def quantum_from_dict(d):
    unknown = set(d) - _QUANTUM_KEYS
    if unknown:
        raise ConfigError(f"unknown quantum config keys: {sorted(unknown)}")
    g = dict(d.get("grid") or {})
    bad = set(g) - _GRID_KEYS
    if bad:
        raise ConfigError(f"unknown grid keys: {sorted(bad)}")
    pot = _potential(g.pop("potential", None))
    n = int(g.get("n_points", 128))
    length = float(g.get("length", 1.0))
    mass, hbar = float(g.get("mass", 1.0)), float(g.get("hbar", 1.0))
    if "dt" in g:
        grid = SpatialGrid(n, 0.0, length, float(g["dt"]), mass, hbar, pot)
    else:
        grid = desk_grid(n, length, mass, hbar, float(g.get("max_increment", np.pi / 4)), pot)
    pk = dict(d.get("packet") or {})
    packet = (float(pk.get("center", 0.3 * length)), float(pk.get("width", 0.05 * length)), float(pk.get("momentum", 20.0)))
    scales = [float(s) for s in d.get("scales", [0.5, 1.0, 2.0])]
    return grid, packet, scales, int(d.get("steps", 100)), int(d.get("snapshot_every", 10))


def cmd_quantum(args) -> int:
    try:
        d = json.loads(FsPath(args.config).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    grid, (center, width, momentum), scales, steps, every = quantum_from_dict(d)
    if args.steps is not None:
        steps = args.steps
    out = FsPath(args.out or d.get("out") or "runs/quantum")
    out.mkdir(parents=True, exist_ok=True)
    psi0 = gaussian_packet(grid, center, width, momentum)
    runs = scale_sweep(grid, scales, psi0, steps, every)
    lines = [f"n_points={grid.n_points}", f"dx={grid.dx!r}", f"dt={grid.dt!r}", f"steps={steps}"]
    for run in runs:
        tag = f"scale_{run.scale:g}"
        write_snapshots_csv(out / f"snapshots_{tag}.csv", run.propagation.snapshots)
        write_phase_pgm(out / f"kphase_{tag}.pgm", run.kernel)
        xs = [wf.mean_x() for _, wf in run.propagation.snapshots]
        worst = max(abs(n - 1.0) for n in run.propagation.norms)
        lines += [f"{tag}.hbar={run.kernel.grid.hbar!r}", f"{tag}.max_norm_error={worst!r}", f"{tag}.mean_x_final={xs[-1]!r}"]
        print(f"scale {run.scale:g}: <x> {xs[0]:.4g} -> {xs[-1]:.4g}, max |norm-1| {worst:.2e}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="leastaction", description="Least-action path optimization experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run experiments from JSON configs or preset names")
    r.add_argument("configs", nargs="+", metavar="CONFIG")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--steps", type=int)
    r.add_argument("--parallel", type=int, default=1, metavar="K")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("baseline", help="integrate the preset ODE baseline for a system")
    b.add_argument("system", choices=sorted(PRESETS))
    b.add_argument("--out")
    b.add_argument("--seed", type=int, help="accepted for symmetry; the baseline is not random")
    b.add_argument("--steps", type=int)
    b.set_defaults(func=cmd_baseline)

    q = sub.add_parser("quantum", help="propagate a wave packet with the phase-action kernel")
    q.add_argument("config")
    q.add_argument("--out")
    q.add_argument("--seed", type=int, help="accepted for symmetry; propagation is not random")
    q.add_argument("--steps", type=int)
    q.set_defaults(func=cmd_quantum)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LeastActionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
