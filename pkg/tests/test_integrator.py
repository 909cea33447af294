import numpy as np
import pytest

from leastaction.errors import DivergenceError, InvalidPathError
from leastaction.experiment import build_baseline, preset
from leastaction.integrator import (
    InitialState,
    euler_integrate,
    integrate_with_state,
    rest_terminated_state,
    substep_integrate,
)
from leastaction.systems import FreeBody, Gravity, Pendulum, jittered_lattice, make_system


def free_fall_error(dt, t_end=2.0):
    n = int(round(t_end / dt)) + 1
    p = euler_integrate(FreeBody(), InitialState([0.0], [0.0]), dt, n)
    return abs(p.coords[-1, 0] - (-0.5 * t_end**2))


def test_constant_path_without_forces():
    p = euler_integrate(FreeBody(g=0.0), InitialState([1.5], [0.0]), 0.1, 6)
    np.testing.assert_array_equal(p.coords, 1.5)


def test_free_body_hand_steps():
    p = euler_integrate(FreeBody(), InitialState([0.0], [0.0]), 0.25, 3)
    np.testing.assert_array_equal(p.coords[:, 0], [0.0, 0.0, -0.0625])


def test_refinement_one_is_plain_euler():
    s = Pendulum()
    st = InitialState([0.4], [0.3])
    a = euler_integrate(s, st, 0.1, 50)
    b = substep_integrate(s, st, 0.1, 50, 1)
    assert a.coords.tobytes() == b.coords.tobytes()


def test_fine_substeps_match_closed_form_free_fall():
    p = substep_integrate(FreeBody(), InitialState([0.0], [0.0]), 0.25, 4, 100)
    t = p.times[-1]
    assert abs(p.coords[-1, 0] + 0.5 * t**2) < 1e-3


def test_free_fall_error_is_exactly_half_g_t_h():
    # Euler from rest: x_n = -g h^2 n(n-1)/2, so the gap to -g t^2/2 is g t h/2
    p = substep_integrate(FreeBody(), InitialState([0.0], [0.0]), 0.25, 40, 100)
    t, h = p.times, 0.25 / 100
    np.testing.assert_allclose(p.coords[:, 0] + 0.5 * t**2, 0.5 * t * h, rtol=1e-9, atol=1e-12)


def test_first_order_convergence():
    dts = [0.1, 0.05, 0.025, 0.0125]
    err = [free_fall_error(dt) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(err), 1)[0]
    assert 0.8 <= slope <= 1.2
    for a, b in zip(err, err[1:]):
        assert b / a == pytest.approx(0.5, rel=0.05)


def test_small_angle_period():
    p = substep_integrate(Pendulum(), InitialState([0.01], [0.0]), 0.01, 1400, 100)
    th, t = p.coords[:, 0], p.times
    down = [t[i] - th[i] * (t[i + 1] - t[i]) / (th[i + 1] - th[i]) for i in range(len(th) - 1) if th[i] > 0 >= th[i + 1]]
    period = np.diff(down)[0]
    assert abs(period - 2 * np.pi) < 0.05 * 2 * np.pi


def test_pendulum_energy_drift_decreases_with_refinement():
    s = Pendulum()
    start = InitialState([1.0], [0.0])
    e0 = s.kinetic(start.x0, start.v0) + s.potential(start.x0)
    drift = []
    for k in (1, 2, 5, 10, 50, 100):
        _, end = integrate_with_state(s, start, 0.1, 60, k)
        drift.append(abs(s.kinetic(end.x0, end.v0) + s.potential(end.x0) - e0))
    assert all(b < a for a, b in zip(drift, drift[1:]))


def test_ideal_gas_limit_loses_kinetic_energy_geometrically():
    # with interactions switched off only the damping acts on |v|
    s = make_system("gas", box=(30.0, 15.0), dissipation=0.1, epsilon=1e-12)
    x = jittered_lattice()
    state = InitialState(x, np.random.default_rng(0).normal(0, 0.3, x.size))
    ke = [s.kinetic(state.x0, state.v0)]
    for _ in range(7):
        _, state = integrate_with_state(s, state, 0.5, 3, 100)
        ke.append(s.kinetic(state.x0, state.v0))
    ratios = np.array(ke[1:]) / np.array(ke[:-1])
    np.testing.assert_allclose(ratios, 0.9**4, rtol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_damped_gas_total_energy_decreases(seed):
    s = make_system("gas", box=(30.0, 15.0), dissipation=0.2)
    x = jittered_lattice()
    state = InitialState(x, np.random.default_rng(seed).normal(0, 0.3, x.size))
    energy = [s.kinetic(x, state.v0) + s.potential(x)]
    for _ in range(7):
        _, state = integrate_with_state(s, state, 0.5, 3, 100)
        energy.append(s.kinetic(state.x0, state.v0) + s.potential(state.x0))
    assert np.all(np.diff(energy) < 0)


def test_deterministic():
    b1 = build_baseline(preset("three_body")).reference
    b2 = build_baseline(preset("three_body")).reference
    assert b1.coords.tobytes() == b2.coords.tobytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_step():
    # two bodies released almost on top of each other: Euler flings them to infinity
    s = Gravity(body_masses=(1.0, 1.0, 1.0))
    x0 = [0.0, 0.0, 1e-160, 0.0, 5.0, 5.0]
    with pytest.raises(DivergenceError) as info:
        euler_integrate(s, InitialState(x0, np.zeros(6)), 0.5, 10)
    assert info.value.step is not None
    assert f"step {info.value.step}" in str(info.value)


@pytest.mark.parametrize("bad", [dict(dt=0.0), dict(steps=2), dict(refinement=0)])
def test_rejects_bad_arguments(bad):
    kw = dict(dt=0.1, steps=5, refinement=1) | bad
    with pytest.raises(InvalidPathError):
        substep_integrate(Pendulum(), InitialState([0.1], [0.0]), **kw)


def test_state_dimension_checked():
    with pytest.raises(InvalidPathError):
        euler_integrate(Pendulum(), InitialState([0.1, 0.2], [0.0, 0.0]), 0.1, 5)


def test_rest_terminated_state_ends_near_rest():
    s = Pendulum()
    state = rest_terminated_state(s, [2.44], 0.25, 11)
    _, end = integrate_with_state(s, state, 0.25, 11, 100)
    # Euler is not time-reversible, so the landing misses by O(dt/k)
    assert end.x0[0] == pytest.approx(2.44, abs=2e-2)
    assert abs(end.v0[0]) < 1e-2
    _, fine = integrate_with_state(s, rest_terminated_state(s, [2.44], 0.25, 11, 1000), 0.25, 11, 1000)
    assert abs(fine.x0[0] - 2.44) < abs(end.x0[0] - 2.44) / 5
