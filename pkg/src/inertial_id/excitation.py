"""Input design and parameter-sensitivity analysis.

Generators return :class:`~inertial_id.inputs.InputSequence` objects in the
force domain (newtons per thruster, signed unless noted). The sensitivity
part integrates S = d(state)/d(m, izz) alongside the state and scores how
much each parameter shows up in the measured pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dynamics import (
    DEFAULT_DT,
    AugmentedState,
    Plant,
    _grid_forces,
    _state_array,
    thrust_matrix,
    uniform_grid,
)
from .errors import DivergenceError, InvalidArgumentError
from .inputs import InputSequence

__all__ = [
    "InputSequence",
    "ObservabilityReport",
    "SensitivityHistory",
    "observability_score",
    "pd_orbit_follower",
    "phase_shifted_sine",
    "propagate_sensitivity",
    "pure_rotation",
    "pure_translation",
    "translation_then_rotation",
]

DEFAULT_NOISE_STD = (0.01, 0.01, math.radians(1.0))
PARAMS = ("m", "izz")


def _times(duration: float, dt: float, t0: float = 0.0) -> np.ndarray:
    if not dt > 0 or not duration > 0:
        raise InvalidArgumentError("duration and dt must be positive")
    n = int(round(duration / dt))
    return t0 + dt * np.arange(n + 1)


def phase_shifted_sine(amplitude: float = 0.025, omega: float = 1.0, phase_step: float = math.pi / 4,
                       duration: float = 120.0, dt: float = DEFAULT_DT, mode: str = "signed") -> InputSequence:
    """Thruster i (1-based) gets ``amplitude * sin(omega t + (i - 1) phase_step)``.

    ``mode="offset"`` maps each command to ``amplitude * (1 + sin(.)) / 2`` so
    every thruster stays non-negative.
    """
    if not amplitude > 0:
        raise InvalidArgumentError("amplitude must be positive")
    t = _times(duration, dt)
    phases = omega * t[:, None] + phase_step * np.arange(4)[None, :]
    if mode == "signed":
        cmd = amplitude * np.sin(phases)
    elif mode == "offset":
        cmd = amplitude * (1.0 + np.sin(phases)) / 2.0
    else:
        raise InvalidArgumentError(f"mode must be 'signed' or 'offset', got {mode!r}")
    return InputSequence(t, cmd, "force")


def _half_wave_pair(t, amplitude, omega):
    s = np.sin(omega * t)
    return amplitude * np.maximum(s, 0.0), amplitude * np.maximum(-s, 0.0)


def pure_translation(duration: float, amplitude: float = 0.025, omega: float = 1.0,
                     dt: float = DEFAULT_DT, t0: float = 0.0) -> InputSequence:
    """Oscillating body-y force with no x force and no moment (T1=T2 against T3=T4)."""
    t = _times(duration, dt, t0)
    pos, neg = _half_wave_pair(t - t0, amplitude, omega)
    return InputSequence(t, np.column_stack([pos, pos, neg, neg]), "force")


def pure_rotation(duration: float, amplitude: float = 0.025, omega: float = 1.0,
                  dt: float = DEFAULT_DT, t0: float = 0.0) -> InputSequence:
    """Oscillating yaw moment with zero net force (T1=T3 against T2=T4)."""
    t = _times(duration, dt, t0)
    pos, neg = _half_wave_pair(t - t0, amplitude, omega)
    return InputSequence(t, np.column_stack([pos, neg, pos, neg]), "force")


def translation_then_rotation(half_duration: float = 7.0, amplitude: float = 0.1,
                              omega: float | None = None, dt: float = DEFAULT_DT) -> InputSequence:
    """Translate back and forth for ``half_duration``, then rock in yaw for as long.

    The default ``omega`` fits two whole cycles into each half, so the body
    velocity picked up in the first half is back to zero at the handover.
    Commands are non-negative in both halves.
    """
    if not half_duration > 0:
        raise InvalidArgumentError("half_duration must be positive")
    if omega is None:
        omega = 4.0 * math.pi / half_duration
    t = _times(2.0 * half_duration, dt)
    pos, neg = _half_wave_pair(t, amplitude, omega)
    second = t >= half_duration - 1e-9 * dt
    pos2, neg2 = _half_wave_pair(t - half_duration, amplitude, omega)
    cmd = np.column_stack([pos, pos, neg, neg])
    cmd[second] = np.column_stack([pos2, neg2, pos2, neg2])[second]
    return InputSequence(t, cmd, "force")


def pd_orbit_follower(setpoint_amplitude: float = 0.1, period: float = 60.0, gains=(2.0, 3.0),
                      plant: Plant | None = None, duration: float = 120.0, *, state0=None,
                      dt: float = DEFAULT_DT, phase_step: float = math.pi / 4) -> InputSequence:
    """Closed-loop PD tracking of sinusoidal position setpoints; returns the applied input.

    Setpoints are ``x_d = A sin(w t)``, ``y_d = A sin(w t + phase_step)`` and
    heading zero, with ``w = 2 pi / period``. ``gains`` are (kp [1/s^2],
    kd [1/s]) applied per axis and scaled by the plant's own mass and
    inertia, so the commanded force is ``m (kp e + kd e')``. Thruster
    commands come from the minimum-norm allocation of (fx, fy, mz) and may be
    negative.
    """
    kp, kd = (float(g) for g in gains)
    if kp < 0 or kd < 0:
        raise InvalidArgumentError("gains must be non-negative")
    plant = plant or Plant()
    x = _state_array(state0 if state0 is not None else AugmentedState())
    alloc = np.linalg.pinv(thrust_matrix(plant.geometry))
    fr = plant.friction.as_array()
    w = 2.0 * math.pi / period
    t = _times(duration, dt)
    cmds = np.zeros((t.size, 4))
    for k, tk in enumerate(t):
        xd = setpoint_amplitude * np.array([math.sin(w * tk), math.sin(w * tk + phase_step)])
        vd = setpoint_amplitude * w * np.array([math.cos(w * tk), math.cos(w * tk + phase_step)])
        c, s = math.cos(x[K.IPSI]), math.sin(x[K.IPSI])
        rot = np.array([[c, -s], [s, c]]) if plant.rotated else np.eye(2)
        vel = rot @ x[K.IU:K.IR]
        acc = kp * (xd - x[K.IX:K.IPSI]) + kd * (vd - vel)
        f_body = x[K.IM] * (rot.T @ acc)
        mz = x[K.IIZZ] * (kp * (0.0 - x[K.IPSI]) + kd * (0.0 - x[K.IR]))
        cmds[k] = alloc @ np.array([f_body[0], f_body[1], mz])
        if k + 1 < t.size:
            force = np.array([f_body[0], f_body[1], mz])
            x = K.rk4_step(x, force, fr, plant.rotated, t[k + 1] - tk)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x[:6]) > 1e3:
                raise DivergenceError(f"closed loop diverged at t = {t[k + 1]:.3f} s")
    # round-off from the pseudo-inverse; keep zero gains exactly zero
    cmds[np.abs(cmds) < 1e-15] = 0.0
    return InputSequence(t, cmds, "force")


@dataclass(frozen=True, eq=False)
class SensitivityHistory:
    times: np.ndarray
    states: np.ndarray  # (N, 8)
    s_x_theta: np.ndarray  # (N, 6, 2): d(x, y, psi, u, v, r)/d(m, izz)

    @property
    def s_y_theta(self) -> np.ndarray:
        """(N, 3, 2) output sensitivity; the pose output selects the first three states."""
        return self.s_x_theta[:, :3, :]


def propagate_sensitivity(state0, seq: InputSequence, dt: float = DEFAULT_DT,
                          plant: Plant | None = None, t_span=None) -> SensitivityHistory:
    """Integrate S' = (dF/dx) S + dF/dtheta from S(t0) = 0 with the same RK4 steps as the state."""
    if seq.domain != "force" and (plant is None or plant.curves is None):
        raise InvalidArgumentError("sensitivity propagation needs a force-domain input (or thrust curves)")
    plant = plant or Plant()
    x0 = _state_array(state0)
    if t_span is None:
        t_span = (seq.t_start, float(seq.times[-1]))
    grid = uniform_grid(t_span[0], t_span[1], dt)
    forces = _grid_forces(seq, plant, grid)
    xs, ss = K.propagate_grid_sens(x0, np.diff(grid), forces, plant.friction.as_array(), plant.rotated)
    return SensitivityHistory(grid, xs, ss)


@dataclass(frozen=True)
class ObservabilityReport:
    scores: tuple  # per parameter (m, izz)
    threshold: float
    verdicts: tuple  # "observable" / "weakly observable"

    def as_dict(self) -> dict:
        return {
            p: {"score": s, "verdict": v}
            for p, s, v in zip(PARAMS, self.scores, self.verdicts)
        } | {"threshold": self.threshold}


def observability_score(history: SensitivityHistory, noise_std=DEFAULT_NOISE_STD,
                        threshold: float = 10.0) -> ObservabilityReport:
    """Time-integrated, noise-normalised squared output sensitivity per parameter."""
    s_y = history.s_y_theta
    if s_y.shape[0] == 0:
        raise InvalidArgumentError("empty sensitivity history")
    sigma = np.asarray(noise_std, dtype=float).reshape(1, 3, 1)
    dt = np.diff(history.times, append=history.times[-1])
    if dt.size > 1:
        dt[-1] = dt[-2]
    scores = np.einsum("t,toj->j", dt, (s_y / sigma) ** 2)
    verdicts = tuple("observable" if s > threshold else "weakly observable" for s in scores)
    return ObservabilityReport(tuple(float(s) for s in scores), float(threshold), verdicts)
