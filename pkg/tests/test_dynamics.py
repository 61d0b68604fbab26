import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inertial_id.dynamics import (
    TRUE_IZZ,
    TRUE_MASS,
    AugmentedState,
    FrictionModel,
    GeneralizedForce,
    ModuleGeometry,
    dynamics_jacobian,
    kinetic_energy,
    propagate,
    propagate_stm,
    refine_grid,
    resolve_thrust,
    state_derivative,
    thrust_matrix,
    uniform_grid,
)
from inertial_id.errors import ConfigurationError, DomainError, InvalidArgumentError
from inertial_id.excitation import phase_shifted_sine
from inertial_id.inputs import InputSequence

C = 1.0 / math.sqrt(2.0)
FRICTION = FrictionModel(0.05, 5e-4, 1e-4, enabled=True)


def test_reference_inertia():
    assert TRUE_IZZ == pytest.approx(TRUE_MASS * 0.1**2 / 6)
    assert TRUE_IZZ == pytest.approx(0.00378, rel=1e-12)


@pytest.mark.parametrize(
    "thrusts, expected",
    [
        ((1, 0, 0, 0), (-C, C, 0.05)),
        ((0, 1, 0, 0), (C, C, -0.05)),
        ((0, 0, 1, 0), (C, -C, 0.05)),
        ((0, 0, 0, 1), (-C, -C, -0.05)),
        ((1, 1, 1, 1), (0, 0, 0)),
        ((1, 1, 0, 0), (0, 2 * C, 0)),
        ((1, 0, 1, 0), (0, 0, 0.1)),
    ],
)
def test_resolve_thrust(thrusts, expected):
    f = resolve_thrust(thrusts)
    assert isinstance(f, GeneralizedForce)
    np.testing.assert_allclose(f, expected, atol=1e-15)


def test_moment_arm_defaults_to_half_side():
    assert ModuleGeometry(0.2).moment_arm_d == pytest.approx(0.1)
    assert thrust_matrix(ModuleGeometry(0.2, 0.3))[2, 0] == pytest.approx(0.3)


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.floats(-3, 3))
def test_resolve_thrust_is_linear(a, b, k):
    lhs = np.array(resolve_thrust(np.array(a) + k * np.array(b)))
    rhs = np.array(resolve_thrust(a)) + k * np.array(resolve_thrust(b))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_state_derivative_hand_values():
    x = AugmentedState(1.0, -2.0, 0.3, 0.1, 0.2, 0.3, 2.0, 0.004)
    xd = state_derivative(x, (0.5, -0.2, 0.01))
    np.testing.assert_allclose(xd, [0.1, 0.2, 0.3, 0.25 + 0.06, -0.1 - 0.03, 2.5, 0, 0], atol=1e-15)


def test_state_derivative_rotated_kinematics():
    x = AugmentedState(0, 0, math.pi / 2, 1.0, 0.0, 0.0, 1.0, 1.0)
    xd = state_derivative(x, (0, 0, 0), kinematics="rotated")
    np.testing.assert_allclose(xd[:2], [0.0, 1.0], atol=1e-15)


def test_friction_terms():
    x = AugmentedState(0, 0, 0, 0.3, 0.4, 2.0, 2.0, 0.01)
    xd = state_derivative(x, (0, 0, 0), FRICTION)
    assert xd[3] == pytest.approx(2.0 * 0.4 - 0.05 * 0.3 / 2.0)
    assert xd[4] == pytest.approx(-2.0 * 0.3 - 0.05 * 0.4 / 2.0)
    assert xd[5] == pytest.approx((-5e-4 * 2.0 + 1e-4 * 0.5) / 0.01)
    # disabled friction is ignored whatever the coefficients
    off = FrictionModel(0.05, 5e-4, 1e-4, enabled=False)
    np.testing.assert_array_equal(state_derivative(x, (0, 0, 0), off), state_derivative(x, (0, 0, 0)))


@pytest.mark.parametrize("m, izz", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_non_positive_parameters_rejected(m, izz):
    with pytest.raises(DomainError):
        state_derivative(AugmentedState(m=m, izz=izz), (0, 0, 0))


def test_unknown_kinematics():
    with pytest.raises(ConfigurationError):
        state_derivative(AugmentedState(), (0, 0, 0), kinematics="sideways")


def _constant(thrusts, duration):
    t = np.arange(0.0, duration + 0.005, 0.01)
    return InputSequence(t, np.tile(thrusts, (t.size, 1)))


def _random_state(rng):
    return np.array([
        *rng.normal(0, 1, 2), rng.uniform(-math.pi, math.pi), *rng.normal(0, 0.5, 3),
        rng.uniform(0.5, 5.0), rng.uniform(1e-3, 1e-2),
    ])


def _fd_jacobian(x, f, friction, kinematics):
    jac = np.empty((8, 8))
    for j in range(8):
        h = 1e-6 * max(abs(x[j]), 1e-2 if j < 6 else abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (state_derivative(xp, f, friction, kinematics)
                     - state_derivative(xm, f, friction, kinematics)) / (2 * h)
    return jac


@pytest.mark.parametrize("kinematics", ["direct", "rotated"])
def test_jacobian_matches_finite_differences(kinematics):
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = _random_state(rng)
        f = rng.normal(0, 0.2, 3)
        analytic = dynamics_jacobian(x, f, FRICTION, kinematics)
        numeric = _fd_jacobian(x, f, FRICTION, kinematics)
        scale = np.maximum(np.abs(analytic), 1.0)
        assert np.max(np.abs(analytic - numeric) / scale) < 1e-6


def test_rest_stays_at_rest():
    traj = propagate(AugmentedState(), _constant([0, 0, 0, 0], 5.0))
    assert np.all(traj.states[:, :6] == 0.0)


def test_force_free_spin_conserves_energy():
    x0 = AugmentedState(u=0.1, v=-0.05, r=1.5)
    traj = propagate(x0, _constant([0, 0, 0, 0], 10.0))
    ke = kinetic_energy(traj.states)
    assert np.ptp(ke) / ke[0] < 1e-9


def test_constant_thrust_matches_closed_form():
    # T1 = T2 only: pure body-y force, no rotation
    traj = propagate(AugmentedState(), _constant([0.1, 0.1, 0, 0], 3.0))
    a = 2 * 0.1 * C / TRUE_MASS
    assert traj.final.y == pytest.approx(0.5 * a * 9.0, rel=1e-12)
    assert traj.final.v == pytest.approx(a * 3.0, rel=1e-12)
    assert traj.final.x == pytest.approx(0.0, abs=1e-15)


def test_stm_semigroup(sine_30s):
    x0 = AugmentedState(u=0.01, r=0.02)
    x1, phi10 = propagate_stm(x0, sine_30s, 0.0, 10.0, friction=FRICTION)
    x2, phi21 = propagate_stm(x1, sine_30s, 10.0, 25.0, friction=FRICTION)
    x2b, phi20 = propagate_stm(x0, sine_30s, 0.0, 25.0, friction=FRICTION)
    np.testing.assert_allclose(np.array(x2), np.array(x2b), rtol=1e-12, atol=1e-14)
    assert np.max(np.abs(phi21 @ phi10 - phi20)) <= 1e-8 * max(1.0, np.max(np.abs(phi20)))


def test_stm_identity_for_zero_span(sine_30s):
    _, phi = propagate_stm(AugmentedState(), sine_30s, 3.0, 3.0)
    np.testing.assert_array_equal(phi, np.eye(8))


def test_stm_matches_finite_differences(sine_30s):
    x0 = np.array(AugmentedState(0.1, -0.1, 0.2, 0.01, -0.02, 0.05))
    _, phi = propagate_stm(x0, sine_30s, 0.0, 8.0, friction=FRICTION)
    numeric = np.empty((8, 8))
    for j in range(8):
        h = 1e-5 * max(abs(x0[j]), 1e-2 if j < 6 else abs(x0[j]))
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        fp = np.array(propagate_stm(xp, sine_30s, 0.0, 8.0, friction=FRICTION)[0])
        fm = np.array(propagate_stm(xm, sine_30s, 0.0, 8.0, friction=FRICTION)[0])
        numeric[:, j] = (fp - fm) / (2 * h)
    scale = np.maximum(np.abs(phi), 1.0)
    assert np.max(np.abs(phi - numeric) / scale) < 1e-5


def test_propagate_rejects_span_beyond_input(sine_30s):
    with pytest.raises(ConfigurationError):
        propagate(AugmentedState(), sine_30s, t_span=(0.0, 40.0))


def test_process_noise_needs_rng(sine_30s):
    with pytest.raises(ConfigurationError):
        propagate(AugmentedState(), sine_30s, accel_noise_std=(1e-3, 1e-3, 1e-3))


def test_process_noise_is_seeded():
    seq = phase_shifted_sine(duration=5.0)
    a = propagate(AugmentedState(), seq, accel_noise_std=(1e-3,) * 3, rng=np.random.default_rng(3))
    b = propagate(AugmentedState(), seq, accel_noise_std=(1e-3,) * 3, rng=np.random.default_rng(3))
    clean = propagate(AugmentedState(), seq)
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.states, clean.states)


def test_uniform_grid_shortens_last_step():
    g = uniform_grid(0.0, 0.105, 0.01)
    assert g[-1] == 0.105 and g.size == 12
    with pytest.raises(InvalidArgumentError):
        uniform_grid(1.0, 1.0, 0.01)


@settings(max_examples=50)
@given(st.lists(st.floats(0.001, 0.5), min_size=1, max_size=20), st.floats(0.001, 0.05))
def test_refine_grid_hits_outputs(steps, dt):
    t_out = np.cumsum(steps)
    grid, idx = refine_grid(t_out, dt, 0.0)
    np.testing.assert_allclose(grid[idx], t_out, rtol=0, atol=1e-12)
    assert np.all(np.diff(grid) <= dt * (1 + 1e-9))
    assert np.all(np.diff(grid) > 0)
