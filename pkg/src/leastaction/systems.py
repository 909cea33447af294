"""Lagrangian systems: energies, their gradients, and analytic accelerations.

Every evaluation accepts a single state (shape ``(D,)``) or a batch of states
(shape ``(N, D)``, one row per time slice) and is vectorized over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

# name -> (noise sigma, dt, learning rate, optimizer steps)
DEFAULT_HYPERPARAMS = {
    "free_body": (1.5, 0.25, 1.0, 500),
    "pendulum": (2e-1, 1.0, 5e-2, 500),
    "double_pendulum": (6e-1, 6e-2, 1e-2, 500),
    "three_body": (3e-2, 0.5, 2e-4, 1000),
    "gas": (1e-2, 0.5, 1e-4, 500),
    "ephemeris": (2e10, 86400.0, 1e9, 500),
}

G_SI = 6.67430e-11
INNER_PLANETS = ("Sun", "Mercury", "Venus", "Earth", "Mars")
BODY_MASSES_KG = {
    "Sun": 1.98847e30,
    "Mercury": 3.3011e23,
    "Venus": 4.8675e24,
    "Earth": 6.0458e24,  # Earth-Moon barycenter
    "Mars": 6.4171e23,
}


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _unbatch(values, single):
    if single:
        return float(values[0]) if np.ndim(values) == 1 else values[0]
    return values


class LagrangianSystem:
    """Base for all systems.

    Subclasses implement the batched ``_T``, ``_V``, ``_dT``, ``_dV`` and
    ``_acc`` hooks; the public methods handle single-state vs batch inputs.
    """

    name = "abstract"
    dim = 0
    noise_sigma = 0.0
    dt_default = 1.0
    lr_default = 1.0
    steps_default = 500
    fixed_columns: tuple = ()
    damping = 1.0  # velocity factor per baseline step, 1.0 = conservative

    def _table1(self):
        noise, dt, lr, steps = DEFAULT_HYPERPARAMS[self.name]
        if self.noise_sigma is None:
            object.__setattr__(self, "noise_sigma", noise)
        if self.dt_default is None:
            object.__setattr__(self, "dt_default", dt)
        if self.lr_default is None:
            object.__setattr__(self, "lr_default", lr)
        if self.steps_default is None:
            object.__setattr__(self, "steps_default", steps)
        if self.dt_default <= 0 or self.lr_default <= 0 or self.noise_sigma < 0:
            raise ConfigError(f"{self.name}: invalid hyperparameters")

    @property
    def masses(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def constants(self) -> dict:
        return {}

    def kinetic(self, x, v):
        X, single = _as_batch(x)
        V_, _ = _as_batch(v)
        return _unbatch(self._T(X, V_), single)

    def potential(self, x):
        X, single = _as_batch(x)
        return _unbatch(self._V(X), single)

    def lagrangian(self, x, v):
        return self.kinetic(x, v) - self.potential(x)

    def kinetic_grads(self, x, v):
        """``(dT/dx, dT/dv)``."""
        X, single = _as_batch(x)
        V_, _ = _as_batch(v)
        gx, gv = self._dT(X, V_)
        if single:
            return gx[0], gv[0]
        return gx, gv

    def potential_grad(self, x):
        X, single = _as_batch(x)
        return _unbatch(self._dV(X), single)

    def acceleration(self, x, v):
        X, single = _as_batch(x)
        V_, _ = _as_batch(v)
        return _unbatch(self._acc(X, V_), single)

    def constrain(self, x, v):
        """Hook for hard constraints applied by the baseline integrator."""
        return x, v


@dataclass(frozen=True)
class FreeBody(LagrangianSystem):
    """A body in uniform gravity; ``x`` is height, so the acceleration is ``-g``."""

    m: float = 1.0
    g: float = 1.0
    noise_sigma: float = None
    dt_default: float = None
    lr_default: float = None
    steps_default: int = None

    name = "free_body"
    dim = 1

    def __post_init__(self):
        if self.m <= 0:
            raise ConfigError("mass must be positive")
        self._table1()

    @property
    def masses(self):
        return np.array([self.m])

    @property
    def constants(self):
        return {"g": self.g}

    def _T(self, X, V):
        return 0.5 * self.m * V[:, 0] ** 2

    def _V(self, X):
        return self.m * self.g * X[:, 0]

    def _dT(self, X, V):
        return np.zeros_like(X), self.m * V

    def _dV(self, X):
        return np.full_like(X, self.m * self.g)

    def _acc(self, X, V):
        return np.full_like(X, -self.g)


@dataclass(frozen=True)
class Pendulum(LagrangianSystem):
    m: float = 1.0
    l: float = 1.0
    g: float = 1.0
    noise_sigma: float = None
    dt_default: float = None
    lr_default: float = None
    steps_default: int = None

    name = "pendulum"
    dim = 1

    def __post_init__(self):
        if self.m <= 0 or self.l <= 0:
            raise ConfigError("mass and length must be positive")
        self._table1()

    @property
    def masses(self):
        return np.array([self.m])

    @property
    def constants(self):
        return {"g": self.g, "l": self.l}

    def _T(self, X, V):
        return 0.5 * self.m * self.l**2 * V[:, 0] ** 2

    def _V(self, X):
        return self.m * self.g * self.l * (1.0 - np.cos(X[:, 0]))

    def _dT(self, X, V):
        return np.zeros_like(X), self.m * self.l**2 * V

    def _dV(self, X):
        return self.m * self.g * self.l * np.sin(X)

    def _acc(self, X, V):
        return -(self.g / self.l) * np.sin(X)


@dataclass(frozen=True)
class DoublePendulumParams:
    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    g: float = 1.0

    def __post_init__(self):
        if min(self.m1, self.m2, self.l1, self.l2) <= 0:
            raise ConfigError("double pendulum masses and lengths must be positive")

    def alpha1(self, delta):
        return (self.l2 / self.l1) * (self.m2 / (self.m1 + self.m2)) * np.cos(delta)

    def alpha2(self, delta):
        return (self.l1 / self.l2) * np.cos(delta)


@dataclass(frozen=True)
class DoublePendulum(LagrangianSystem):
    """Angles measured from the downward vertical; ``x = (theta1, theta2)``."""

    params: DoublePendulumParams = field(default_factory=DoublePendulumParams)
    noise_sigma: float = None
    dt_default: float = None
    lr_default: float = None
    steps_default: int = None

    name = "double_pendulum"
    dim = 2

    def __post_init__(self):
        self._table1()

    @property
    def masses(self):
        return np.array([self.params.m1, self.params.m2])

    @property
    def constants(self):
        p = self.params
        return {"g": p.g, "l1": p.l1, "l2": p.l2}

    def _coeffs(self):
        p = self.params
        return (p.m1 + p.m2) * p.l1**2, p.m2 * p.l2**2, p.m2 * p.l1 * p.l2

    def _T(self, X, V):
        A, B, C = self._coeffs()
        w1, w2 = V[:, 0], V[:, 1]
        return 0.5 * A * w1**2 + 0.5 * B * w2**2 + C * w1 * w2 * np.cos(X[:, 0] - X[:, 1])

    def _V(self, X):
        p = self.params
        return -(p.m1 + p.m2) * p.g * p.l1 * np.cos(X[:, 0]) - p.m2 * p.g * p.l2 * np.cos(X[:, 1])

    def _dT(self, X, V):
        A, B, C = self._coeffs()
        w1, w2 = V[:, 0], V[:, 1]
        delta = X[:, 0] - X[:, 1]
        s, c = np.sin(delta), np.cos(delta)
        gx = np.stack([-C * w1 * w2 * s, C * w1 * w2 * s], axis=1)
        gv = np.stack([A * w1 + C * w2 * c, B * w2 + C * w1 * c], axis=1)
        return gx, gv

    def _dV(self, X):
        p = self.params
        return np.stack(
            [(p.m1 + p.m2) * p.g * p.l1 * np.sin(X[:, 0]), p.m2 * p.g * p.l2 * np.sin(X[:, 1])],
            axis=1,
        )

    def _acc(self, X, V):
        p = self.params
        th1, th2 = X[:, 0], X[:, 1]
        w1, w2 = V[:, 0], V[:, 1]
        delta = th1 - th2
        a1, a2 = p.alpha1(delta), p.alpha2(delta)
        f1 = -(p.l2 / p.l1) * (p.m2 / (p.m1 + p.m2)) * w2**2 * np.sin(delta) - (p.g / p.l1) * np.sin(th1)
        f2 = (p.l1 / p.l2) * w1**2 * np.sin(delta) - (p.g / p.l2) * np.sin(th2)
        den = 1.0 - a1 * a2
        bad = np.abs(den) < 1e-12
        if np.any(bad):
            raise DomainError("singular double-pendulum denominator 1 - a1*a2", index=int(np.argmax(bad)))
        return np.stack([(f1 - a1 * f2) / den, (f2 - a2 * f1) / den], axis=1)


class ParticleSystem(LagrangianSystem):
    """Point masses in the plane. Coordinates are ``(x_0, y_0, x_1, y_1, ...)``."""

    def _body_masses(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def n_bodies(self) -> int:
        return len(self._body_masses())

    @property
    def masses(self):
        return self._body_masses()

    @property
    def coord_masses(self) -> np.ndarray:
        return np.repeat(self._body_masses(), 2)

    def _T(self, X, V):
        return 0.5 * (V * V) @ self.coord_masses

    def _dT(self, X, V):
        return np.zeros_like(X), V * self.coord_masses

    def _pairs(self, X):
        """Separation vectors ``x_i - x_j`` of shape (B, n, n, 2) and distances (B, n, n).

        Diagonal distances are set to ``inf``.
        """
        B = X.shape[0]
        P = X.reshape(B, -1, 2)
        d = P[:, :, None, :] - P[:, None, :, :]
        r = np.sqrt(np.einsum("bijk,bijk->bij", d, d))
        idx = np.arange(P.shape[1])
        r[:, idx, idx] = np.inf
        return d, r


@dataclass(frozen=True)
class Gravity(ParticleSystem):
    """Newtonian point masses, ``V = -sum_{i<j} G m_i m_j / r_ij``."""

    body_masses: tuple = (1.0, 1.0, 1.0)
    G: float = 1.0
    body_names: tuple = ()
    fixed_bodies: tuple = ()
    name: str = "three_body"
    noise_sigma: float = None
    dt_default: float = None
    lr_default: float = None
    steps_default: int = None

    def __post_init__(self):
        masses = tuple(float(m) for m in self.body_masses)
        if any(m <= 0 for m in masses):
            raise ConfigError("body masses must be positive")
        object.__setattr__(self, "body_masses", masses)
        if not self.body_names:
            object.__setattr__(self, "body_names", tuple(f"body{i}" for i in range(len(masses))))
        if len(self.body_names) != len(masses):
            raise ConfigError("body_names and body_masses differ in length")
        self._table1()

    @property
    def dim(self):
        return 2 * len(self.body_masses)

    @property
    def fixed_columns(self):
        cols = []
        for name in self.fixed_bodies:
            i = self.body_names.index(name)
            cols += [2 * i, 2 * i + 1]
        return tuple(cols)

    @property
    def constants(self):
        return {"G": self.G}

    def _body_masses(self):
        return np.array(self.body_masses)

    def _pairs_checked(self, X):
        d, r = self._pairs(X)
        if np.any(r == 0):
            b, i, j = np.argwhere(r == 0)[0]
            raise DomainError(f"coincident bodies {i} and {j} (r = 0)", index=int(b))
        return d, r

    def _V(self, X):
        _, r = self._pairs_checked(X)
        m = self._body_masses()
        mm = m[:, None] * m[None, :]
        return -0.5 * self.G * np.einsum("ij,bij->b", mm, 1.0 / r)

    def _dV(self, X):
        d, r = self._pairs_checked(X)
        m = self._body_masses()
        w = self.G * (m[:, None] * m[None, :]) / r**3
        return np.einsum("bij,bijk->bik", w, d).reshape(X.shape)

    def _acc(self, X, V):
        d, r = self._pairs_checked(X)
        m = self._body_masses()
        # a_i = -G sum_j m_j / r_ij^2 * rhat_ij
        w = self.G * m[None, None, :] / r**2
        rhat = d / r[..., None]
        return -np.einsum("bij,bijk->bik", w, rhat).reshape(X.shape)


@dataclass(frozen=True)
class LennardJonesParams:
    epsilon: float = 1.0
    sigma: float = 1.0
    r_cap: float = None
    box: tuple = (20.0, 20.0)
    dissipation: float = 0.0

    def __post_init__(self):
        if self.r_cap is None:
            object.__setattr__(self, "r_cap", 0.9 * self.sigma)
        if min(self.epsilon, self.sigma, self.r_cap) <= 0:
            raise ConfigError("epsilon, sigma and r_cap must be positive")
        if self.r_cap >= 2 ** (1 / 6) * self.sigma:
            raise ConfigError("r_cap must lie on the repulsive wall (r_cap < 2^(1/6) sigma)")
        if not 0.0 <= self.dissipation <= 1.0:
            raise ConfigError("dissipation must lie in [0, 1]")
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))

    def pair_potential(self, r):
        """Capped LJ potential: linear continuation of the wall below ``r_cap``."""
        r = np.asarray(r, dtype=np.float64)
        rc = self.r_cap
        out = np.empty_like(r)
        hi = r >= rc
        out[hi] = self._lj(r[hi])
        out[~hi] = self._lj(rc) - self._lj_force(rc) * (r[~hi] - rc)
        return out

    def pair_force(self, r):
        """Radial force magnitude ``-dV/dr`` (positive = repulsive)."""
        r = np.asarray(r, dtype=np.float64)
        return self._lj_force(np.maximum(r, self.r_cap))

    def _lj(self, r):
        s6 = (self.sigma / r) ** 6
        return 4.0 * self.epsilon * (s6 * s6 - s6)

    def _lj_force(self, r):
        s6 = self.sigma**6
        return 4.0 * self.epsilon * (12.0 * s6 * s6 / r**13 - 6.0 * s6 / r**7)


@dataclass(frozen=True)
class LennardJonesGas(ParticleSystem):
    """Pairwise capped Lennard-Jones particles in a reflective 2D box."""

    n_particles: int = 50
    mass: float = 1.0
    lj: LennardJonesParams = field(default_factory=LennardJonesParams)
    noise_sigma: float = None
    dt_default: float = None
    lr_default: float = None
    steps_default: int = None

    name = "gas"

    def __post_init__(self):
        if self.mass <= 0 or self.n_particles < 2:
            raise ConfigError("gas needs positive mass and at least two particles")
        self._table1()

    @property
    def dim(self):
        return 2 * self.n_particles

    @property
    def damping(self):
        return 1.0 - self.lj.dissipation

    @property
    def constants(self):
        return {"epsilon": self.lj.epsilon, "sigma": self.lj.sigma, "r_cap": self.lj.r_cap}

    def _body_masses(self):
        return np.full(self.n_particles, float(self.mass))

    def _V(self, X):
        _, r = self._pairs(X)
        mask = np.isfinite(r)
        phi = np.zeros_like(r)
        phi[mask] = self.lj.pair_potential(r[mask])
        return 0.5 * phi.sum(axis=(1, 2))

    def _radial_weights(self, r, fn):
        # fn(r) / r on off-diagonal entries, 0 on the diagonal and at r == 0
        w = np.zeros_like(r)
        mask = np.isfinite(r) & (r > 0)
        w[mask] = fn(r[mask]) / r[mask]
        return w

    def _dV(self, X):
        d, r = self._pairs(X)
        w = self._radial_weights(r, lambda s: -self.lj.pair_force(s))
        return np.einsum("bij,bijk->bik", w, d).reshape(X.shape)

    def _acc(self, X, V):
        d, r = self._pairs(X)
        w = self._radial_weights(r, self.lj.pair_force) / self.mass
        return np.einsum("bij,bijk->bik", w, d).reshape(X.shape)

    def constrain(self, x, v):
        x = np.array(x, dtype=np.float64)
        v = np.array(v, dtype=np.float64)
        lo = np.zeros(self.dim)
        hi = np.tile(self.lj.box, self.n_particles)
        below, above = x < lo, x > hi
        x[below] = -x[below]
        v[below] = np.abs(v[below])
        x[above] = 2 * hi[above] - x[above]
        v[above] = -np.abs(v[above])
        return x, v


def ephemeris_system(masses=None, names=INNER_PLANETS, fixed=("Sun",)) -> Gravity:
    if masses is None:
        masses = [BODY_MASSES_KG[n] for n in names]
    return Gravity(
        body_masses=tuple(masses),
        G=G_SI,
        body_names=tuple(names),
        fixed_bodies=tuple(fixed),
        name="ephemeris",
    )


def make_system(name: str, **params) -> LagrangianSystem:
    """Build a system by name with default hyperparameters, overridable by ``params``."""
    if name == "free_body":
        return FreeBody(**params)
    if name == "pendulum":
        return Pendulum(**params)
    if name == "double_pendulum":
        dp = {k: params.pop(k) for k in ("m1", "m2", "l1", "l2", "g") if k in params}
        return DoublePendulum(params=DoublePendulumParams(**dp), **params)
    if name == "three_body":
        return Gravity(name="three_body", **params)
    if name == "gas":
        lj = {k: params.pop(k) for k in ("epsilon", "sigma", "r_cap", "box", "dissipation") if k in params}
        return LennardJonesGas(lj=LennardJonesParams(**lj), **params)
    if name == "ephemeris":
        return ephemeris_system(**params)
    raise ConfigError(f"unknown system {name!r}; expected one of {sorted(DEFAULT_HYPERPARAMS)}")


def jittered_lattice(cols=10, rows=5, spacing=3.0, jitter=0.1, seed=1) -> np.ndarray:
    """Flattened ``(x, y)`` positions on a ``cols x rows`` lattice, each cell-centred
    point shifted uniformly by up to ``jitter * spacing`` per axis."""
    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.arange(cols) + 0.5, np.arange(rows) + 0.5)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1) * spacing
    pts += rng.uniform(-jitter * spacing, jitter * spacing, pts.shape)
    return pts.ravel()
