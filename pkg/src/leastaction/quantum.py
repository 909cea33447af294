"""Discretized path-integral propagation on a 1D grid.

Every pair of grid points is joined by one straight path of duration ``dt``;
the kernel entry for that pair is ``exp(i S / hbar)`` with ``S`` the action of
the straight path (potential sampled at its midpoint). The wave function is
advanced by repeated matrix-vector products, renormalized after each step.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegeneracyError, DomainError


COLLAPSE_FRACTION = 1e-20  # norm ratio below which one step counts as total cancellation


def _zero_potential(x):
    return np.zeros_like(x)


@dataclass(frozen=True)
class SpatialGrid:
    n_points: int
    x_min: float
    x_max: float
    dt: float
    mass: float = 1.0
    hbar: float = 1.0
    potential: Optional[Callable] = None

    def __post_init__(self):
        if self.n_points < 1:
            raise ConfigError("grid needs at least one point")
        if self.n_points > 1 and not self.x_max > self.x_min:
            raise ConfigError("x_max must exceed x_min")
        if not (self.dt > 0 and self.mass > 0 and self.hbar > 0):
            raise ConfigError("dt, mass and hbar must be positive")

    @property
    def dx(self) -> float:
        if self.n_points == 1:
            return 1.0  # unit cell so that sum |psi|^2 dx = 1 stays meaningful
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def V(self, x):
        fn = self.potential or _zero_potential
        return np.asarray(fn(np.asarray(x, dtype=np.float64)), dtype=np.float64) * np.ones_like(x)

    def with_hbar(self, hbar) -> "SpatialGrid":
        return replace(self, hbar=float(hbar))

    def max_phase_increment(self) -> float:
        """Largest phase step between neighbouring entries of a free-particle kernel row."""
        n = self.n_points
        if n < 2:
            return 0.0
        return self.mass * self.dx**2 * (2 * n - 3) / (2 * self.hbar * self.dt)


def desk_grid(n_points=128, length=1.0, mass=1.0, hbar=1.0, max_increment=np.pi / 4, potential=None):
    """Grid on ``[0, length]`` with ``dt`` set so the fastest kernel phase step is ``max_increment``."""
    dx = length / (n_points - 1)
    dt = mass * dx**2 * (2 * n_points - 3) / (2 * hbar * max_increment)
    return SpatialGrid(n_points, 0.0, float(length), float(dt), mass, hbar, potential)


@dataclass(frozen=True)
class PhaseActionKernel:
    K: np.ndarray
    grid: SpatialGrid
    phase: np.ndarray  # S_ab / hbar, not wrapped

    @property
    def n(self):
        return self.K.shape[0]


def path_actions(grid: SpatialGrid) -> np.ndarray:
    """``S[a, b]``: action of the straight path from ``x_b`` to ``x_a`` in one step."""
    idx = np.arange(grid.n_points)
    # integer offsets keep the free part exactly Toeplitz and symmetric
    offset = idx[:, None] - idx[None, :]
    disp = offset * grid.dx
    mid = grid.x_min + (idx[:, None] + idx[None, :]) * (grid.dx / 2)
    V = grid.V(mid)
    if not np.all(np.isfinite(V)):
        a, b = np.argwhere(~np.isfinite(V))[0]
        raise DomainError(f"potential is not finite at the midpoint of ({a}, {b})")
    vel = disp / grid.dt
    return grid.dt * (0.5 * grid.mass * vel * vel - V)


def build_kernel(grid: SpatialGrid) -> PhaseActionKernel:
    phase = path_actions(grid) / grid.hbar
    K = np.exp(1j * phase)
    K.setflags(write=False)
    phase.setflags(write=False)
    return PhaseActionKernel(K, grid, phase)


def kernel_phases(kernel: PhaseActionKernel, wrapped=True) -> np.ndarray:
    """Kernel phases, either in ``(-pi, pi]`` or as the raw ``S / hbar``."""
    if wrapped:
        return np.angle(kernel.K)
    return np.array(kernel.phase)


def offdiagonal_increments(kernel: PhaseActionKernel, row=0) -> np.ndarray:
    """Phase differences between neighbouring entries of one kernel row.

    Taken from the unwrapped phases, so they are exact multiples of ``1/hbar``.
    """
    return np.diff(kernel.phase[row])


@dataclass
class WaveFunction:
    amplitudes: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.grid.n_points,):
            raise ConfigError("amplitude count does not match the grid")

    @property
    def prob(self) -> np.ndarray:
        a = self.amplitudes
        return a.real**2 + a.imag**2

    def norm(self) -> float:
        return float(np.sum(self.prob) * self.grid.dx)

    def normalized(self) -> "WaveFunction":
        n = self.norm()
        if not n > 0 or not np.isfinite(n):
            raise DegeneracyError("wave function has zero norm")
        return WaveFunction(self.amplitudes / np.sqrt(n), self.grid)

    def mean_x(self) -> float:
        p = self.prob
        return float(np.sum(p * self.grid.x) / np.sum(p))


def gaussian_packet(grid: SpatialGrid, center: float, width: float, momentum: float = 0.0) -> WaveFunction:
    if not width > 0:
        raise ConfigError("packet width must be positive")
    if grid.n_points > 1 and not grid.x_min <= center <= grid.x_max:
        raise ConfigError(f"packet center {center} lies outside [{grid.x_min}, {grid.x_max}]")
    if grid.n_points > 1 and width < 2 * grid.dx:
        warnings.warn(f"packet width {width} is under 2 grid spacings ({2 * grid.dx}); under-resolved", stacklevel=2)
    x = grid.x
    amp = np.exp(-((x - center) ** 2) / (4 * width**2)) * np.exp(1j * momentum * x / grid.hbar)
    return WaveFunction(amp, grid).normalized()


@dataclass
class Propagation:
    final: WaveFunction
    snapshots: list = field(default_factory=list)  # (step, WaveFunction)
    norms: list = field(default_factory=list)


def propagate(psi: WaveFunction, kernel: PhaseActionKernel, steps: int, snapshot_every: int = 1) -> Propagation:
    """Apply ``psi <- K psi`` and renormalize, ``steps`` times.

    Snapshot 0 is the input; further snapshots are taken every ``snapshot_every``
    steps and after the last one.
    """
    if steps < 0:
        raise ConfigError("steps must be non-negative")
    if psi.grid.n_points != kernel.n or psi.grid.dx != kernel.grid.dx:
        raise ConfigError("wave function and kernel live on different grids")
    out = Propagation(psi, [(0, psi)], [psi.norm()])
    amp = psi.amplitudes
    dx = kernel.grid.dx
    prev = psi.norm()
    for step in range(1, steps + 1):
        amp = kernel.K @ amp
        p = float(np.sum(amp.real**2 + amp.imag**2) * dx)
        if not p > COLLAPSE_FRACTION * prev or not np.isfinite(p):
            raise DegeneracyError(f"wave function collapsed to zero norm at step {step}")
        amp = amp / np.sqrt(p)
        wf = WaveFunction(amp, psi.grid)
        prev = wf.norm()
        out.norms.append(wf.norm())
        if step % snapshot_every == 0 or step == steps:
            out.snapshots.append((step, wf))
        out.final = wf
    return out


@dataclass
class ScaleRun:
    scale: float
    kernel: PhaseActionKernel
    propagation: Propagation


def scale_sweep(base_grid: SpatialGrid, scales, packet: WaveFunction, steps: int, snapshot_every: int = 1) -> list:
    """Rerun the same initial packet with ``hbar = base_hbar / scale`` for each scale."""
    runs = []
    for scale in scales:
        if not scale > 0:
            raise ConfigError(f"scale must be positive, got {scale}")
        grid = base_grid.with_hbar(base_grid.hbar / scale)
        kernel = build_kernel(grid)
        psi = WaveFunction(packet.amplitudes, grid)
        runs.append(ScaleRun(float(scale), kernel, propagate(psi, kernel, steps, snapshot_every)))
    return runs


def write_snapshots_csv(path, snapshots) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "x", "re", "im", "prob"])
        for step, wf in snapshots:
            for x, a, p in zip(wf.grid.x, wf.amplitudes, wf.prob):
                w.writerow([step, repr(float(x)), repr(float(a.real)), repr(float(a.imag)), repr(float(p))])


def write_phase_pgm(path, kernel: PhaseActionKernel) -> None:
    """Binary 8-bit grayscale image of the wrapped kernel phases, black = -pi."""
    ph = np.angle(kernel.K)
    img = np.clip(np.round((ph + np.pi) / (2 * np.pi) * 255), 0, 255).astype(np.uint8)
    h, w = img.shape
    FsPath(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())
