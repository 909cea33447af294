"""Explicit-Euler baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvalidPathError
from .path import Path


@dataclass(frozen=True)
class InitialState:
    x0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64)).copy()
        v0 = np.atleast_1d(np.asarray(self.v0, dtype=np.float64)).copy()
        if x0.shape != v0.shape or x0.ndim != 1:
            raise InvalidPathError("x0 and v0 must be vectors of equal length")
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(v0))):
            raise InvalidPathError("initial state must be finite")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "v0", v0)


def _integrate(system, state, dt, steps, refinement, t0, return_state=False):
    if not (dt > 0 and np.isfinite(dt)):
        raise InvalidPathError(f"dt must be positive, got {dt!r}")
    if steps < 3:
        raise InvalidPathError(f"need at least 3 points, got {steps}")
    if refinement < 1:
        raise InvalidPathError(f"refinement must be >= 1, got {refinement}")
    if state.x0.shape[0] != system.dim:
        raise InvalidPathError(f"state has {state.x0.shape[0]} coordinates, system expects {system.dim}")

    h = dt / refinement
    gamma = system.damping if refinement == 1 else system.damping ** (1.0 / refinement)
    x, v = state.x0.copy(), state.v0.copy()
    out = np.empty((steps, system.dim))
    out[0] = x
    for i in range(1, steps):
        for _ in range(refinement):
            a = system.acceleration(x, v)
            x, v = x + v * h, gamma * (v + a * h)
            x, v = system.constrain(x, v)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise DivergenceError(f"baseline diverged at step {i}", step=i)
        out[i] = x
    if return_state:
        return Path(out, dt, t0), InitialState(x, v)
    return Path(out, dt, t0)


def euler_integrate(system, state: InitialState, dt: float, steps: int, t0: float = 0.0) -> Path:
    """Explicit Euler: ``x += v*dt`` and ``v = gamma*(v + a(x, v)*dt)`` from the same state.

    ``steps`` is the number of points in the returned path.
    """
    return _integrate(system, state, dt, steps, 1, t0)


def substep_integrate(system, state: InitialState, dt: float, steps: int, refinement: int, t0: float = 0.0) -> Path:
    """Euler at ``dt/refinement``, keeping every ``refinement``-th point."""
    return _integrate(system, state, dt, steps, int(refinement), t0)


def integrate_with_state(system, state: InitialState, dt: float, steps: int, refinement: int = 1, t0: float = 0.0):
    """Like :func:`substep_integrate`, also returning the exact final ``(x, v)`` state."""
    return _integrate(system, state, dt, steps, int(refinement), t0, True)


def rest_terminated_state(system, x_end, dt: float, steps: int, refinement: int = 100) -> InitialState:
    """Initial state whose trajectory comes to rest at ``x_end`` after ``steps`` points.

    Releases the system from rest at ``x_end``, integrates forward, and flips
    the final velocity. Exact only for conservative systems and in the limit
    of fine substeps.
    """
    x_end = np.atleast_1d(np.asarray(x_end, dtype=np.float64))
    _, end = integrate_with_state(system, InitialState(x_end, np.zeros_like(x_end)), dt, steps, refinement)
    return InitialState(end.x0, -end.v0)
