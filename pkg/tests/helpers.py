"""Shared oracles for the test suite: random paths and finite-difference gradients."""
import numpy as np

from leastaction.ephemeris import default_data_path, load_ephemeris, to_experiment
from leastaction.path import Path, ordered_sum
from leastaction.systems import jittered_lattice, make_system

SYSTEM_NAMES = ("free_body", "pendulum", "double_pendulum", "three_body", "gas", "ephemeris")

_EPH_TABLE = None


def _table():
    global _EPH_TABLE
    if _EPH_TABLE is None:
        _EPH_TABLE = load_ephemeris(default_data_path())
    return _EPH_TABLE


def random_path(name, rng, n=None):
    """A random but physically sensible path for the named system."""
    n = int(rng.integers(5, 33)) if n is None else n
    if name == "ephemeris":
        start = int(rng.integers(0, 300))
        ref, _, system = to_experiment(_table(), (start, start + n))
        noise = rng.normal(0, 2e10, ref.coords.shape)
        noise[:, list(system.fixed_columns)] = 0.0
        return ref.with_coords(ref.coords + noise), system
    system = make_system(name) if name != "gas" else make_system("gas", box=(30.0, 15.0))
    dt = system.dt_default
    if name == "free_body":
        x = rng.normal(0, 3, (n, 1)).cumsum(axis=0)
    elif name == "pendulum":
        x = rng.uniform(-2, 2) + rng.normal(0, 0.4, (n, 1)).cumsum(axis=0)
    elif name == "double_pendulum":
        x = rng.uniform(-2, 2, 2) + rng.normal(0, 0.1, (n, 2)).cumsum(axis=0)
    elif name == "three_body":
        base = np.array([0.0, 0.0, 10.0, 0.0, 3.0, 8.0])
        x = base + rng.normal(0, 0.5, (n, 6)).cumsum(axis=0) / np.sqrt(n)
    elif name == "gas":
        base = jittered_lattice(seed=int(rng.integers(1 << 30)))
        x = base + rng.normal(0, 0.3, (n, 100))
    return Path(x, dt), system


def batched_actions(coords_batch, dt, system):
    """Action of each path in a ``(K, N, D)`` stack, summed left to right."""
    K, N, D = coords_batch.shape
    v = np.empty_like(coords_batch)
    v[:, :-1] = (coords_batch[:, 1:] - coords_batch[:, :-1]) / dt
    v[:, -1] = v[:, -2]
    T = np.asarray(system.kinetic(coords_batch.reshape(-1, D), v.reshape(-1, D))).reshape(K, N)
    V = np.asarray(system.potential(coords_batch.reshape(-1, D))).reshape(K, N)
    return np.array([ordered_sum(t * dt) - ordered_sum(u * dt) for t, u in zip(T, V)])


def fd_gradient(path, system, components=None, rel_step=1e-6, chunk=256):
    """Central differences of the action, one coordinate at a time.

    The step is ``rel_step`` times the largest coordinate magnitude of the
    path, so coordinates sitting near the origin (the Sun in barycentric
    coordinates) still move the action by a resolvable amount.

    ``components`` is an optional list of ``(i, j)`` pairs; the default is all.
    Returns ``(components, fd values)``.
    """
    x = np.array(path.coords)
    scale = max(1.0, float(np.abs(x).max()))
    if components is None:
        components = [(i, j) for i in range(path.n) for j in range(path.dim)]
    components = list(components)
    out = np.empty(len(components))
    for start in range(0, len(components), chunk):
        comps = components[start : start + chunk]
        k = len(comps)
        stack = np.repeat(x[None], 2 * k, axis=0)
        hs = np.empty(k)
        for m, (i, j) in enumerate(comps):
            h = rel_step * scale
            hs[m] = (x[i, j] + h) - (x[i, j] - h)  # the step actually taken
            stack[2 * m, i, j] += h
            stack[2 * m + 1, i, j] -= h
        s = batched_actions(stack, path.dt, system)
        out[start : start + k] = (s[0::2] - s[1::2]) / hs
    return components, out
