"""Discretized paths and the discrete action.

A path is an ``N x D`` grid of generalized coordinates sampled at a uniform
time step. Velocities are forward differences, with the last velocity row
repeated so every slice has one. The action is the sum over all ``N`` slices
of ``(T - V) * dt``.

Gradients are derived by hand: every scalar we differentiate here is a
weighted sum of per-slice kinetic and potential energies, so one pullback
(:func:`slice_pullback`) serves the action and the energy regularizers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidPathError


@dataclass(frozen=True)
class Path:
    coords: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2:
            raise InvalidPathError(f"coords must be N x D, got shape {coords.shape}")
        if coords.shape[0] < 3:
            raise InvalidPathError(f"a path needs at least 3 points, got {coords.shape[0]}")
        if not np.all(np.isfinite(coords)):
            bad = int(np.argwhere(~np.isfinite(coords))[0, 0])
            raise InvalidPathError(f"non-finite coordinate at row {bad}")
        dt = float(self.dt)
        if not (np.isfinite(dt) and dt > 0):
            raise InvalidPathError(f"dt must be positive and finite, got {self.dt!r}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def with_coords(self, coords) -> "Path":
        return Path(coords, self.dt, self.t0)


@dataclass(frozen=True)
class PathGradient:
    grads: np.ndarray
    pinned_mask: np.ndarray
    fixed_columns: tuple = field(default=())


@dataclass(frozen=True)
class ActionBreakdown:
    S: float
    T_sum: float
    V_sum: float


def ordered_sum(values) -> float:
    """Left-to-right sum. Deterministic regardless of array layout or length."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def velocities(path: Path) -> np.ndarray:
    x = path.coords
    v = np.empty_like(x)
    v[:-1] = (x[1:] - x[:-1]) / path.dt
    v[-1] = v[-2]
    return v


def _check_dim(path, system):
    if system.dim != path.dim:
        raise InvalidPathError(
            f"path has {path.dim} coordinates but system {system.name!r} expects {system.dim}"
        )


def _evaluate(fn, *args):
    try:
        return fn(*args)
    except DomainError as exc:
        if exc.index is None:
            raise
        raise DomainError(f"slice {exc.index}: {exc}", index=exc.index) from exc


def slice_energies(path: Path, system):
    """Per-slice ``(T_i, V_i)`` arrays."""
    _check_dim(path, system)
    v = velocities(path)
    T = _evaluate(system.kinetic, path.coords, v)
    V = _evaluate(system.potential, path.coords)
    return T, V


def action(path: Path, system) -> ActionBreakdown:
    T, V = slice_energies(path, system)
    T_sum = ordered_sum(T * path.dt)
    V_sum = ordered_sum(V * path.dt)
    return ActionBreakdown(S=T_sum - V_sum, T_sum=T_sum, V_sum=V_sum)


def energy_series(path: Path, system) -> np.ndarray:
    T, V = slice_energies(path, system)
    return T + V


def slice_pullback(path: Path, system, wT, wV) -> np.ndarray:
    """Gradient of ``sum_i wT[i]*T_i + wV[i]*V_i`` with respect to ``path.coords``.

    The velocity of the last slice is the velocity of the one before it, so its
    kinetic sensitivity flows into the ``(N-2, N-1)`` difference.
    """
    _check_dim(path, system)
    x = path.coords
    v = velocities(path)
    dTdx, dTdv = _evaluate(system.kinetic_grads, x, v)
    dVdx = _evaluate(system.potential_grad, x)
    wT = np.asarray(wT, dtype=np.float64)[:, None]
    wV = np.asarray(wV, dtype=np.float64)[:, None]

    g = wT * dTdx + wV * dVdx
    p = wT * dTdv
    q = p[:-1].copy()
    q[-1] += p[-1]
    q /= path.dt
    g[1:] += q
    g[:-1] -= q
    return g


def default_pins(n: int) -> frozenset:
    return frozenset({0, n - 1})


def pinned_mask(n: int, pinned) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    idx = np.fromiter(pinned, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InvalidPathError(f"pinned index out of range for a path of {n} points")
    mask[idx] = True
    return mask


def mask_gradient(grads, mask, fixed_columns=()):
    grads = np.array(grads, dtype=np.float64)
    grads[mask] = 0.0
    if len(fixed_columns):
        grads[:, list(fixed_columns)] = 0.0
    return grads


def grad_action(path: Path, system, pinned=None, fixed_columns=()) -> PathGradient:
    """Exact gradient of ``action(path, system).S``; pinned rows are zeroed."""
    n = path.n
    pinned = default_pins(n) if pinned is None else frozenset(int(i) for i in pinned)
    if not {0, n - 1} <= pinned:
        raise InvalidPathError("pinned set must contain both endpoints")
    mask = pinned_mask(n, pinned)
    w = np.full(n, path.dt)
    raw = slice_pullback(path, system, w, -w)
    return PathGradient(mask_gradient(raw, mask, fixed_columns), mask, tuple(fixed_columns))


def discrete_el_residual(path: Path, system) -> np.ndarray:
    """Unpinned action gradient at interior rows ``1..N-2``.

    Rows near zero certify that the discrete path is stationary.
    """
    w = np.full(path.n, path.dt)
    return slice_pullback(path, system, w, -w)[1:-1]
