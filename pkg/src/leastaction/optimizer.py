"""Action minimization with Adam over the free (unpinned) path coordinates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError
from .integrator import InitialState
from .path import (
    Path,
    action,
    default_pins,
    energy_series,
    mask_gradient,
    pinned_mask,
    slice_energies,
    slice_pullback,
)

log = logging.getLogger(__name__)

MITIGATIONS = ("perturb_early_stop", "freeze_adjacent", "global_energy_reg", "local_energy_reg")


@dataclass(frozen=True)
class Mitigation:
    """How the optimizer copes with paths of the wrong total energy.

    ``k`` is the number of extra frozen points at each end for
    ``freeze_adjacent``; ``lam`` weights the energy penalty of the two
    regularized modes.
    """

    kind: str = "perturb_early_stop"
    k: int = 0
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in MITIGATIONS:
            raise ConfigError(f"unknown mitigation {self.kind!r}; expected one of {MITIGATIONS}")
        if self.kind == "freeze_adjacent" and self.k < 1:
            raise ConfigError("freeze_adjacent needs k >= 1")
        if self.lam < 0:
            raise ConfigError("regularizer weight must be non-negative")

    @classmethod
    def perturb_early_stop(cls):
        return cls()

    @classmethod
    def freeze_adjacent(cls, k):
        return cls("freeze_adjacent", k=int(k))

    @classmethod
    def global_energy_reg(cls, lam):
        return cls("global_energy_reg", lam=float(lam))

    @classmethod
    def local_energy_reg(cls, lam):
        return cls("local_energy_reg", lam=float(lam))

    def to_dict(self):
        if self.kind == "freeze_adjacent":
            return {"kind": self.kind, "k": self.k}
        if self.kind.endswith("_reg"):
            return {"kind": self.kind, "lam": self.lam}
        return {"kind": self.kind}


@dataclass(frozen=True)
class OptimizeConfig:
    steps: int = 500
    lr: float = 1e-2
    noise_sigma: float = 0.0
    seed: int = 0
    mitigation: Mitigation = field(default_factory=Mitigation)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    snapshot_every: int = 50

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("steps must be non-negative")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")

    @classmethod
    def for_system(cls, system, **overrides):
        base = dict(steps=system.steps_default, lr=system.lr_default, noise_sigma=system.noise_sigma)
        base.update(overrides)
        return cls(**base)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class StepRecord:
    step: int
    S: float
    T_sum: float
    V_sum: float
    mse: Optional[float]
    grad_norm: float


@dataclass
class OptimizeHistory:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (step, Path)
    best_step: int = 0
    best_path: Optional[Path] = None
    final_path: Optional[Path] = None
    diverged_at: Optional[int] = None

    @property
    def best(self):
        return self.best_step, self.best_path

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


class Adam:
    """Adam on a single array; zero gradients leave entries untouched."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def freeze_mask(n: int, k: int) -> frozenset:
    """Rows ``0..k`` and ``n-1-k..n-1``."""
    if k < 0:
        raise ConfigError("k must be non-negative")
    if not 2 * (k + 1) < n:
        raise ConfigError(f"freezing {k} adjacent points at each end leaves no free point in a path of {n}")
    return frozenset(range(k + 1)) | frozenset(range(n - 1 - k, n))


def perturb(path: Path, sigma: float, seed, pinned=None, fixed_columns=()) -> Path:
    """Add i.i.d. Gaussian noise to every free row; pinned rows and fixed columns stay exact."""
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    pinned = default_pins(path.n) if pinned is None else pinned
    if sigma == 0:
        return path
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=path.coords.shape)
    noise = mask_gradient(noise, pinned_mask(path.n, pinned), fixed_columns)
    return path.with_coords(path.coords + noise)


def compare_paths(a: Path, b: Path) -> float:
    """Mean squared coordinate difference over all ``N*D`` entries."""
    if a.coords.shape != b.coords.shape:
        raise ValueError(f"shape mismatch: {a.coords.shape} vs {b.coords.shape}")
    if a.dt != b.dt:
        raise ValueError(f"time step mismatch: {a.dt} vs {b.dt}")
    d = a.coords - b.coords
    return float(np.mean(d * d))


def initial_energy(system, state: InitialState) -> float:
    return float(system.kinetic(state.x0, state.v0) + system.potential(state.x0))


def _penalty_terms(path, system, mitigation, expected_energy):
    """Penalty value and its per-slice derivative with respect to each energy ``E_i``."""
    T, V = slice_energies(path, system)
    E = T + V
    dt = path.dt
    if mitigation.kind == "global_energy_reg":
        if expected_energy is None:
            raise ConfigError("global_energy_reg needs the expected energy of the initial state")
        dev = E - expected_energy
        return float(np.sum(dev * dev) * dt), 2.0 * dev * dt
    rate = np.diff(E) / dt
    dE = np.zeros_like(E)
    dE[:-1] -= 2.0 * rate
    dE[1:] += 2.0 * rate
    return float(np.sum(rate * rate) * dt), dE


def apply_mitigation_loss(path: Path, system, mitigation: Mitigation, expected_energy=None) -> float:
    """Optimizer loss: ``S`` plus the weighted energy penalty, if any."""
    S = action(path, system).S
    if not mitigation.kind.endswith("_reg"):
        return S
    penalty, _ = _penalty_terms(path, system, mitigation, expected_energy)
    return S + mitigation.lam * penalty


def loss_and_grad(path, system, mitigation, expected_energy=None):
    """Returns ``(loss, ActionBreakdown, raw gradient)``; the gradient is not masked."""
    parts = action(path, system)
    w = np.full(path.n, path.dt)
    wT, wV = w.copy(), -w
    loss = parts.S
    if mitigation.kind.endswith("_reg"):
        penalty, dE = _penalty_terms(path, system, mitigation, expected_energy)
        loss += mitigation.lam * penalty
        wT = wT + mitigation.lam * dE
        wV = wV + mitigation.lam * dE
    return loss, parts, slice_pullback(path, system, wT, wV)


def minimize_action(
    path0: Path,
    system,
    config: OptimizeConfig,
    reference: Optional[Path] = None,
    initial_state: Optional[InitialState] = None,
) -> OptimizeHistory:
    """Run Adam on the action for ``config.steps`` updates.

    One record is kept per iterate (``steps + 1`` in total). ``best`` is the
    iterate closest to ``reference`` when one is given, otherwise the one with
    the lowest action. A non-finite action stops the run early and sets
    ``diverged_at``.
    """
    n = path0.n
    mitigation = config.mitigation
    if reference is not None:
        if reference.coords.shape != path0.coords.shape:
            raise ConfigError("reference and initial path differ in shape")
    if mitigation.kind == "freeze_adjacent":
        pinned = freeze_mask(n, mitigation.k)
    else:
        pinned = default_pins(n)
    mask = pinned_mask(n, pinned)
    fixed = tuple(system.fixed_columns)

    expected = None
    if mitigation.kind == "global_energy_reg":
        if initial_state is not None:
            expected = initial_energy(system, initial_state)
        elif reference is not None:
            expected = float(energy_series(reference, system)[0])
        else:
            raise ConfigError("global_energy_reg needs an initial state or a reference path")

    adam = Adam(path0.coords.shape, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    hist = OptimizeHistory()
    coords = np.array(path0.coords)
    best_score = np.inf

    for step in range(config.steps + 1):
        path = path0.with_coords(coords)
        try:
            _, parts, raw = loss_and_grad(path, system, mitigation, expected)
        except DomainError as exc:
            raise DomainError(f"step {step}: {exc}", index=exc.index) from exc
        if not np.isfinite(parts.S):
            log.warning("action became non-finite at step %d", step)
            hist.diverged_at = step
            break
        grad = mask_gradient(raw, mask, fixed)
        mse = compare_paths(path, reference) if reference is not None else None
        hist.records.append(
            StepRecord(step, parts.S, parts.T_sum, parts.V_sum, mse, float(np.linalg.norm(grad)))
        )
        score = mse if reference is not None else parts.S
        if score < best_score:
            best_score, hist.best_step, hist.best_path = score, step, path
        if step % config.snapshot_every == 0 or step == config.steps:
            hist.snapshots.append((step, path))
        hist.final_path = path
        if step == config.steps:
            break
        coords = adam.step(coords, grad)
        if not np.all(np.isfinite(coords)):
            log.warning("coordinates became non-finite after step %d", step)
            hist.diverged_at = step + 1
            break
    return hist
