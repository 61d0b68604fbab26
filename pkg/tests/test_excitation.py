import math

import numpy as np
import pytest

from inertial_id.dynamics import (
    TRUE_IZZ,
    TRUE_MASS,
    AugmentedState,
    FrictionModel,
    Plant,
    input_forces,
    propagate,
)
from inertial_id.errors import InvalidArgumentError
from inertial_id.excitation import (
    observability_score,
    pd_orbit_follower,
    phase_shifted_sine,
    propagate_sensitivity,
    pure_rotation,
    pure_translation,
    translation_then_rotation,
)
from inertial_id.inputs import InputSequence


def test_phase_shifted_sine_values():
    seq = phase_shifted_sine(amplitude=0.025, duration=2.0)
    t = 1.23
    k = int(round(t / 0.01))
    expected = [0.025 * math.sin(t + i * math.pi / 4) for i in range(4)]
    np.testing.assert_allclose(seq.commands[k], expected, rtol=1e-12)
    assert len(seq) == 201


def test_offset_mode_non_negative():
    seq = phase_shifted_sine(duration=20.0, mode="offset")
    assert seq.commands.min() >= 0.0
    assert seq.commands.max() <= 0.025 + 1e-15
    with pytest.raises(InvalidArgumentError):
        phase_shifted_sine(mode="square")


def test_pure_translation_has_no_x_force_or_moment():
    f = input_forces(pure_translation(10.0))
    assert np.max(np.abs(f[:, 0])) < 1e-15 and np.max(np.abs(f[:, 2])) < 1e-15
    assert np.max(np.abs(f[:, 1])) > 0


def test_pure_rotation_has_no_force():
    f = input_forces(pure_rotation(10.0))
    assert np.max(np.abs(f[:, :2])) < 1e-15
    assert np.max(np.abs(f[:, 2])) > 0


def test_translation_then_rotation_layout():
    seq = translation_then_rotation()
    assert len(seq) == 1401
    assert seq.commands.min() >= 0.0
    f = input_forces(seq)
    first, second = seq.times < 7.0, seq.times >= 7.0
    assert np.max(np.abs(f[first, 2])) < 1e-15
    assert np.max(np.abs(f[second, :2])) < 1e-15
    traj = propagate(AugmentedState(), seq, t_span=(0.0, 7.0))
    # two whole forcing cycles: the body ends the first half at rest (up to discretisation)
    assert abs(traj.final.v) < 2e-3 * np.max(np.abs(traj.column("v")))


def _fd_sensitivity(seq, t_end, h_rel=1e-5):
    cols = []
    for j, name in ((6, "m"), (7, "izz")):
        base = np.array(AugmentedState())
        h = h_rel * base[j]
        xp, xm = base.copy(), base.copy()
        xp[j] += h
        xm[j] -= h
        fp = propagate(xp, seq, t_span=(0.0, t_end)).states[:, :6]
        fm = propagate(xm, seq, t_span=(0.0, t_end)).states[:, :6]
        cols.append((fp - fm) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("make", [lambda: phase_shifted_sine(duration=20.0), lambda: translation_then_rotation()])
def test_sensitivity_matches_finite_differences(make):
    seq = make()
    t_end = float(seq.times[-1])
    hist = propagate_sensitivity(AugmentedState(), seq, t_span=(0.0, t_end))
    fd = _fd_sensitivity(seq, t_end)
    for j in range(2):
        scale = np.max(np.abs(hist.s_x_theta[:, :, j]))
        err = np.max(np.abs(hist.s_x_theta[:, :, j] - fd[:, :, j]))
        assert err <= 1e-4 * scale


def test_sensitivity_starts_at_zero(sine_30s):
    hist = propagate_sensitivity(AugmentedState(), sine_30s)
    assert np.all(hist.s_x_theta[0] == 0)
    assert hist.s_y_theta.shape == (hist.times.size, 3, 2)


def test_translation_only_hides_inertia():
    hist = propagate_sensitivity(AugmentedState(), pure_translation(120.0))
    rep = observability_score(hist)
    assert rep.scores[1] < 1e-6 * rep.scores[0]
    assert rep.verdicts == ("observable", "weakly observable")


def test_phase_sine_excites_both():
    rep = observability_score(propagate_sensitivity(AugmentedState(), phase_shifted_sine()))
    assert min(rep.scores) > rep.threshold
    assert rep.as_dict()["izz"]["verdict"] == "observable"


def test_score_scales_with_noise(sine_30s):
    hist = propagate_sensitivity(AugmentedState(), sine_30s)
    a = observability_score(hist, (0.01, 0.01, 0.01)).scores
    b = observability_score(hist, (0.02, 0.02, 0.02)).scores
    np.testing.assert_allclose(np.array(a), 4 * np.array(b), rtol=1e-12)


def test_orbit_follower_tracks_setpoint():
    seq = pd_orbit_follower()
    traj = propagate(AugmentedState(), seq)
    w = 2 * math.pi / 60.0
    xd = 0.1 * np.sin(w * traj.times)
    yd = 0.1 * np.sin(w * traj.times + math.pi / 4)
    err = np.hypot(traj.column("x") - xd, traj.column("y") - yd)
    assert np.max(err) < 0.1
    assert np.max(np.abs(traj.column("psi"))) < 1e-9


def test_orbit_follower_runs_with_friction():
    plant = Plant(friction=FrictionModel(0.05, 5e-4, 1e-4, enabled=True))
    seq = pd_orbit_follower(plant=plant, duration=20.0)
    assert seq.commands.shape == (2001, 4)
    assert np.all(np.isfinite(seq.commands))


def test_sensitivity_needs_force_input(sine_30s):
    duty = InputSequence(sine_30s.times, np.full((len(sine_30s), 4), 50.0), "duty")
    with pytest.raises(InvalidArgumentError):
        propagate_sensitivity(AugmentedState(), duty)


def test_true_parameters_default():
    assert AugmentedState().m == TRUE_MASS and AugmentedState().izz == TRUE_IZZ
