"""Planar 3-DOF rigid-body dynamics with mass and inertia as augmented states.

The body carries four thrusters mounted at 45 degrees on the corners of a
square of side ``L``; each thruster acts with moment arm ``d`` about the
geometric center. The equations of motion are written in the body frame::

    x'   = u                      (or u cos psi - v sin psi, rotated kinematics)
    y'   = v                      (or u sin psi + v cos psi)
    psi' = r
    u'   = fx / m + r v - c_t u / m
    v'   = fy / m - r u - c_t v / m
    r'   = (mz - c_r r + b sqrt(u^2 + v^2)) / izz
    m'   = 0
    izz' = 0

Friction terms (c_t, c_r, b) are zero unless a :class:`FrictionModel` is
enabled. Integration is fixed-step RK4 with the input held constant over
each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, DomainError, InvalidArgumentError
from .inputs import InputSequence

KINEMATICS = ("direct", "rotated")
STATE_NAMES = ("x", "y", "psi", "u", "v", "r", "m", "izz")
STATE_UNITS = ("m", "m", "rad", "m/s", "m/s", "rad/s", "kg", "kg*m^2")

# reference module: 2.268 kg, L = 10 cm, izz = m L^2 / 6
TRUE_MASS = 2.268
TRUE_SIDE = 0.10
TRUE_IZZ = TRUE_MASS * TRUE_SIDE**2 / 6.0

DEFAULT_DT = 0.01
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ModuleGeometry:
    side_length_L: float = TRUE_SIDE
    moment_arm_d: float | None = None

    def __post_init__(self):
        if self.moment_arm_d is None:
            object.__setattr__(self, "moment_arm_d", self.side_length_L / 2.0)
        if not (self.side_length_L > 0 and self.moment_arm_d > 0):
            raise InvalidArgumentError("side length and moment arm must be strictly positive")


class AugmentedState(NamedTuple):
    """Pose, body velocities and the two inertial parameters."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    u: float = 0.0
    v: float = 0.0
    r: float = 0.0
    m: float = TRUE_MASS
    izz: float = TRUE_IZZ

    @classmethod
    def from_array(cls, arr) -> "AugmentedState":
        arr = np.asarray(arr, dtype=float).reshape(-1)
        if arr.size != 8:
            raise InvalidArgumentError(f"augmented state has 8 entries, got {arr.size}")
        return cls(*(float(a) for a in arr))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


class GeneralizedForce(NamedTuple):
    fx: float
    fy: float
    mz: float


@dataclass(frozen=True)
class FrictionModel:
    """Viscous friction on translation and rotation plus a translation-to-yaw bias.

    The bias term adds ``bias_cross * |(u, v)|`` to the yaw moment; it models
    a body that tends to spin while sliding.
    """

    c_translation: float = 0.0
    c_rotation: float = 0.0
    bias_cross: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if self.c_translation < 0 or self.c_rotation < 0:
            raise InvalidArgumentError("friction coefficients must be non-negative")
        if not all(map(math.isfinite, (self.c_translation, self.c_rotation, self.bias_cross))):
            raise InvalidArgumentError("friction coefficients must be finite")

    def as_array(self) -> np.ndarray:
        if not self.enabled:
            return np.zeros(3)
        return np.array([self.c_translation, self.c_rotation, self.bias_cross], dtype=float)


NO_FRICTION = FrictionModel()


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.shape != (times.size, 8):
            raise InvalidArgumentError("states must be (len(times), 8)")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.times.size

    def __getitem__(self, i) -> AugmentedState:
        return AugmentedState.from_array(self.states[i])

    def column(self, name: str) -> np.ndarray:
        return self.states[:, STATE_NAMES.index(name)]

    @property
    def final(self) -> AugmentedState:
        return self[-1]


@dataclass(frozen=True)
class Plant:
    """Everything needed to turn an input sequence into body forces and motion."""

    geometry: ModuleGeometry = field(default_factory=ModuleGeometry)
    friction: FrictionModel = NO_FRICTION
    kinematics: str = "direct"
    curves: object = None  # mapping active-nozzle count -> ThrustCurve, for duty inputs

    def __post_init__(self):
        _check_kinematics(self.kinematics)

    @property
    def rotated(self) -> bool:
        return self.kinematics == "rotated"

    def sample_forces(self, seq: InputSequence) -> np.ndarray:
        return input_forces(seq, self.geometry, self.curves)


def _check_kinematics(kinematics: str) -> None:
    if kinematics not in KINEMATICS:
        raise ConfigurationError(f"kinematics must be one of {KINEMATICS}, got {kinematics!r}")


def thrust_matrix(geometry: ModuleGeometry) -> np.ndarray:
    """3x4 map from thruster forces (T1..T4) to (fx, fy, mz)."""
    d = geometry.moment_arm_d
    c = 1.0 / _SQRT2
    return np.array(
        [
            [-c, c, c, -c],
            [c, c, -c, -c],
            [d, -d, d, -d],
        ]
    )


def resolve_thrust(thrusts, geometry: ModuleGeometry | None = None) -> GeneralizedForce:
    """Resolve four thruster forces into body-frame force and yaw moment."""
    geometry = geometry or ModuleGeometry()
    t = np.asarray(thrusts, dtype=float)
    if t.shape != (4,):
        raise InvalidArgumentError(f"expected 4 thruster values, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise InvalidArgumentError("thrust values must be finite")
    return GeneralizedForce(*(thrust_matrix(geometry) @ t))


def input_forces(seq: InputSequence, geometry: ModuleGeometry | None = None, curves=None) -> np.ndarray:
    """Generalized force (N, 3) for every sample of ``seq``."""
    geometry = geometry or ModuleGeometry()
    if seq.domain == "force":
        return seq.commands @ thrust_matrix(geometry).T
    if curves is None:
        raise ConfigurationError("duty-domain input needs thrust curves")
    from .thrust_model import duty_to_force

    return np.array([duty_to_force(row, curves, geometry) for row in seq.commands])


def _state_array(state) -> np.ndarray:
    x = np.asarray(state, dtype=float).reshape(-1)
    if x.size != 8:
        raise InvalidArgumentError(f"augmented state has 8 entries, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("state contains non-finite values")
    if x[K.IM] <= 0 or x[K.IIZZ] <= 0:
        raise DomainError(f"mass and inertia must be positive (m={x[K.IM]}, izz={x[K.IIZZ]})")
    return x


def _force_array(force) -> np.ndarray:
    f = np.asarray(force, dtype=float).reshape(-1)
    if f.size != 3 or not np.all(np.isfinite(f)):
        raise InvalidArgumentError("force must be three finite values (fx, fy, mz)")
    return f


def state_derivative(state, force, friction: FrictionModel | None = None,
                     kinematics: str = "direct") -> np.ndarray:
    _check_kinematics(kinematics)
    fr = (friction or NO_FRICTION).as_array()
    return K.deriv(_state_array(state), _force_array(force), fr, kinematics == "rotated")


def dynamics_jacobian(state, force, friction: FrictionModel | None = None,
                      kinematics: str = "direct") -> np.ndarray:
    """Analytic 8x8 partial derivative of :func:`state_derivative` w.r.t. the state."""
    _check_kinematics(kinematics)
    fr = (friction or NO_FRICTION).as_array()
    return K.jac(_state_array(state), _force_array(force), fr, kinematics == "rotated")


def uniform_grid(t0: float, tf: float, dt: float) -> np.ndarray:
    """t0, t0+dt, ..., tf; the last step is shortened if dt does not divide the span."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    if not tf > t0:
        raise InvalidArgumentError("tf must exceed t0")
    n = max(1, math.ceil((tf - t0) / dt - 1e-9))
    grid = t0 + dt * np.arange(n + 1, dtype=float)
    grid[-1] = tf
    return grid


def refine_grid(t_out, dt: float, t0: float | None = None):
    """Integration grid passing through every time in ``t_out`` with steps <= dt.

    Returns ``(grid, out_index)`` where ``grid[out_index] == t_out``.
    """
    t_out = np.asarray(t_out, dtype=float)
    start = float(t_out[0]) if t0 is None else float(t0)
    if t_out[0] < start or np.any(np.diff(t_out) <= 0):
        raise InvalidArgumentError("output times must be increasing and not before t0")
    knots = t_out if t_out[0] > start else t_out[1:]
    pieces = [np.array([start])]
    out_index = [] if t_out[0] > start else [0]
    prev, count = start, 0
    for tk in knots:
        n = max(1, math.ceil((tk - prev) / dt - 1e-9))
        pieces.append(prev + (tk - prev) * np.arange(1, n + 1) / n)
        count += n
        out_index.append(count)
        prev = tk
    grid = np.concatenate(pieces)
    return grid, np.array(out_index, dtype=int)


def _grid_forces(seq: InputSequence, plant: Plant, grid: np.ndarray, sample_forces=None) -> np.ndarray:
    seq.check_covers(grid[0], grid[-1])
    if sample_forces is None:
        sample_forces = plant.sample_forces(seq)
    return np.ascontiguousarray(sample_forces[seq.sample_index(grid[:-1])])


def propagate(state0, seq: InputSequence, geometry: ModuleGeometry | None = None,
              friction: FrictionModel | None = None, dt: float = DEFAULT_DT,
              t_span: tuple[float, float] | None = None, *, kinematics: str = "direct",
              curves=None, accel_noise_std=None, rng: np.random.Generator | None = None) -> Trajectory:
    """Integrate the model under ``seq`` and sample it every ``dt``.

    ``accel_noise_std`` (three spectral-density square roots for u, v, r, in
    m/s^2/sqrt(Hz) and rad/s^2/sqrt(Hz)) adds white process noise to the
    velocity states; it needs ``rng``.
    """
    plant = Plant(geometry or ModuleGeometry(), friction or NO_FRICTION, kinematics, curves)
    x0 = _state_array(state0)
    if t_span is None:
        t_span = (seq.t_start, float(seq.times[-1]))
    grid = uniform_grid(t_span[0], t_span[1], dt)
    forces = _grid_forces(seq, plant, grid)
    hs = np.diff(grid)
    kicks = np.empty((0, 3))
    if accel_noise_std is not None:
        if rng is None:
            raise ConfigurationError("process noise needs an rng")
        q = np.asarray(accel_noise_std, dtype=float)
        kicks = rng.standard_normal((hs.size, 3)) * q * np.sqrt(hs)[:, None]
    states = K.propagate_grid(x0, hs, forces, plant.friction.as_array(), plant.rotated, kicks)
    return Trajectory(grid, states)


def propagate_stm(state0, seq: InputSequence, t0: float, t1: float, dt: float = DEFAULT_DT,
                  geometry: ModuleGeometry | None = None, friction: FrictionModel | None = None,
                  *, kinematics: str = "direct", curves=None):
    """Propagate the state and the state transition matrix Phi(t1, t0)."""
    x0 = _state_array(state0)
    if t1 < t0:
        raise InvalidArgumentError("t1 must not precede t0")
    if t1 == t0:
        return AugmentedState.from_array(x0), np.eye(8)
    plant = Plant(geometry or ModuleGeometry(), friction or NO_FRICTION, kinematics, curves)
    xs, phis = propagate_grid_stm(x0, seq, plant, np.array([t1]), dt, t0=t0)
    return AugmentedState.from_array(xs[-1]), phis[-1]


def propagate_grid_stm(x0, seq: InputSequence, plant: Plant, t_out, dt: float = DEFAULT_DT,
                       t0: float | None = None, sample_forces=None):
    """States and Phi(t, t0) at each of ``t_out`` (vectorised helper for the estimators)."""
    grid, idx = refine_grid(t_out, dt, t0)
    forces = _grid_forces(seq, plant, grid, sample_forces)
    xs, phis = K.propagate_grid_stm(np.asarray(x0, dtype=float), np.diff(grid), forces,
                                    plant.friction.as_array(), plant.rotated)
    return xs[idx], phis[idx]


def kinetic_energy(states) -> np.ndarray:
    s = np.atleast_2d(states)
    return 0.5 * s[:, K.IM] * (s[:, K.IU] ** 2 + s[:, K.IV] ** 2) + 0.5 * s[:, K.IIZZ] * s[:, K.IR] ** 2
