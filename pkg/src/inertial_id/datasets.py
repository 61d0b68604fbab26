"""Synthetic data generation, dataset bundles, pose-log ingest and the swing test.

A dataset bundle is a directory holding

``measurements.csv``
    ``time_s,x_m,y_m,psi_rad`` pose samples (heading unwrapped).
``input.csv``
    The thruster command sequence (see :mod:`inertial_id.inputs`).
``truth.csv``
    Optional truth trajectory at the measurement times, synthetic data only.
``dataset.json``
    Geometry, noise levels, truth parameters, friction, kinematics and seed.

Every float is written with ``repr`` so a bundle read back and written again
is byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .dynamics import (
    DEFAULT_DT,
    TRUE_IZZ,
    TRUE_MASS,
    AugmentedState,
    FrictionModel,
    ModuleGeometry,
    Plant,
    Trajectory,
    _grid_forces,
    _state_array,
    refine_grid,
)
from .errors import ConfigurationError, InvalidArgumentError, ParseError, ValidationError
from .estimators import POSE_NOISE_STD, MeasurementRecord, MeasurementSet
from .excitation import (
    pd_orbit_follower,
    phase_shifted_sine,
    pure_rotation,
    pure_translation,
    translation_then_rotation,
)
from .inputs import InputSequence, read_input_csv, write_input_csv
from .thrust_model import ThrustCurve

FORMAT_VERSION = 1
MEAS_HEADER = ("time_s", "x_m", "y_m", "psi_rad")
TRUTH_HEADER = ("time_s", "x_m", "y_m", "psi_rad", "u_mps", "v_mps", "r_radps", "m_kg", "izz_kgm2")
POSE_HEADER = ("time_s", "x_m", "y_m", "psi", "unit_psi")
STANDARD_GRAVITY = 9.80665
SCALE_MASS = 0.720  # kg, module on the bench scale
SCALE_RESOLUTION = 0.0025  # kg


# ---------------------------------------------------------------------------
# scenarios and synthesis


INPUT_KINDS = ("phase-sine", "orbit", "translation-rotation", "translation", "rotation")


def make_input(kind: str, duration: float = 120.0, dt: float = DEFAULT_DT, plant: Plant | None = None,
               state0=None) -> InputSequence:
    """Named excitation with its default settings."""
    if kind == "phase-sine":
        return phase_shifted_sine(duration=duration, dt=dt)
    if kind == "orbit":
        return pd_orbit_follower(plant=plant, duration=duration, dt=dt, state0=state0)
    if kind == "translation-rotation":
        return translation_then_rotation(half_duration=duration / 2.0, dt=dt)
    if kind == "translation":
        return pure_translation(duration, dt=dt)
    if kind == "rotation":
        return pure_rotation(duration, dt=dt)
    raise ConfigurationError(f"unknown input kind {kind!r}; choose from {INPUT_KINDS}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to generate one synthetic dataset.

    ``input`` is a kind name from :data:`INPUT_KINDS` or an
    :class:`InputSequence`. ``accel_noise_std`` adds process noise to the
    truth (u, v, r), in units per sqrt(s).
    """

    geometry: ModuleGeometry = field(default_factory=ModuleGeometry)
    true_mass: float = TRUE_MASS
    true_izz: float = TRUE_IZZ
    noise_std: tuple = tuple(POSE_NOISE_STD)
    rate_hz: float = 50.0
    input: object = "phase-sine"
    duration: float = 120.0
    friction: FrictionModel = field(default_factory=FrictionModel)
    kinematics: str = "direct"
    seed: int = 0
    dt: float = DEFAULT_DT
    accel_noise_std: tuple | None = None
    state0: AugmentedState | None = None  # pose/velocity part; parameters come from true_*

    def __post_init__(self):
        noise = tuple(float(s) for s in self.noise_std)
        if len(noise) != 3 or min(noise) < 0:
            raise InvalidArgumentError("noise_std needs three non-negative entries")
        object.__setattr__(self, "noise_std", noise)
        if not self.rate_hz > 0 or not self.duration > 0 or not self.dt > 0:
            raise InvalidArgumentError("rate_hz, duration and dt must be positive")
        if not (self.true_mass > 0 and self.true_izz > 0):
            raise InvalidArgumentError("true parameters must be positive")
        if isinstance(self.input, str) and self.input not in INPUT_KINDS:
            raise ConfigurationError(f"unknown input kind {self.input!r}")

    @property
    def plant(self) -> Plant:
        return Plant(self.geometry, self.friction, self.kinematics)

    def initial_state(self) -> AugmentedState:
        base = self.state0 or AugmentedState()
        return base._replace(m=self.true_mass, izz=self.true_izz)

    def input_sequence(self) -> InputSequence:
        if isinstance(self.input, InputSequence):
            return self.input
        return make_input(self.input, self.duration, self.dt, self.plant, self.initial_state())


@dataclass(eq=False)
class Dataset:
    measurements: MeasurementSet
    input: InputSequence
    plant: Plant = field(default_factory=Plant)
    truth: Trajectory | None = None
    true_params: tuple | None = None  # (m, izz) reference values
    meta: dict = field(default_factory=dict)

    @property
    def noise_std(self) -> np.ndarray:
        return np.asarray(self.meta.get("noise_std", POSE_NOISE_STD), dtype=float)

    @property
    def truth_ref(self):
        """What the estimators compare against: the trajectory when known, else (m, izz)."""
        return self.truth if self.truth is not None else self.true_params

    def save(self, directory) -> Path:
        return save_dataset(self, directory)


def measurement_times(t0: float, tf: float, rate_hz: float) -> np.ndarray:
    n = int(math.floor((tf - t0) * rate_hz + 1e-9))
    return t0 + np.arange(n + 1) / rate_hz


def simulate_truth(state0, seq: InputSequence, plant: Plant, t_out, dt: float = DEFAULT_DT,
                   accel_noise_std=None, rng: np.random.Generator | None = None) -> Trajectory:
    """Truth states at ``t_out`` (first entry is the initial epoch), optionally with process noise."""
    t_out = np.asarray(t_out, dtype=float)
    grid, idx = refine_grid(t_out, dt, t_out[0])
    forces = _grid_forces(seq, plant, grid)
    hs = np.diff(grid)
    kicks = np.empty((0, 3))
    if accel_noise_std is not None:
        if rng is None:
            raise ConfigurationError("process noise needs an rng")
        kicks = rng.standard_normal((hs.size, 3)) * np.asarray(accel_noise_std, float) * np.sqrt(hs)[:, None]
    states = K.propagate_grid(_state_array(state0), hs, forces, plant.friction.as_array(), plant.rotated, kicks)
    return Trajectory(t_out.copy(), states[idx])


def noisy_poses(truth: Trajectory, noise_std, rng: np.random.Generator) -> np.ndarray:
    """Pose samples with additive Gaussian noise; the heading is left unwrapped."""
    sigma = np.asarray(noise_std, dtype=float)
    return truth.states[:, :3] + rng.standard_normal((len(truth), 3)) * sigma


def _measurement_cov(noise_std) -> np.ndarray:
    sigma = np.asarray(noise_std, dtype=float)
    # a noiseless dataset still needs an invertible weight for the estimators
    return np.diag(np.where(sigma > 0, sigma, POSE_NOISE_STD) ** 2)


def generate_synthetic(scenario: ScenarioConfig = ScenarioConfig(), directory=None) -> Dataset:
    """Simulate the truth, sample noisy poses and optionally write the bundle to ``directory``."""
    rng = np.random.default_rng(scenario.seed)
    seq = scenario.input_sequence()
    plant = scenario.plant
    t_last = min(seq.t_start + scenario.duration, float(seq.times[-1]))
    times = measurement_times(seq.t_start, t_last, scenario.rate_hz)
    truth = simulate_truth(scenario.initial_state(), seq, plant, times, scenario.dt,
                           scenario.accel_noise_std, rng)
    z = noisy_poses(truth, scenario.noise_std, rng)
    meas = MeasurementSet(times, z, _measurement_cov(scenario.noise_std))
    meta = {
        "noise_std": list(scenario.noise_std),
        "rate_hz": scenario.rate_hz,
        "seed": scenario.seed,
        "dt": scenario.dt,
        "input_kind": scenario.input if isinstance(scenario.input, str) else "custom",
        "accel_noise_std": None if scenario.accel_noise_std is None else list(scenario.accel_noise_std),
    }
    ds = Dataset(meas, seq, plant, truth, (scenario.true_mass, scenario.true_izz), meta)
    if directory is not None:
        save_dataset(ds, directory)
    return ds


def pseudo_experimental_scenario(seed: int = 11) -> ScenarioConfig:
    """Replay-style scenario: friction and rotational bias on, 120 Hz poses, translate-then-rotate."""
    return ScenarioConfig(
        rate_hz=120.0,
        input="translation-rotation",
        duration=14.0,
        friction=FrictionModel(c_translation=0.05, c_rotation=5e-4, bias_cross=1e-4, enabled=True),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# bundle files


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def _read_rows(path: Path, header) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or tuple(h.strip() for h in head) != tuple(header):
            raise ParseError(f"{path.name}: expected header {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path.name}: expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(f"{path.name}: {exc}", line=lineno) from None
    return np.array(rows, dtype=float).reshape(-1, len(header))


def save_dataset(ds: Dataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meas = ds.measurements
    _write_rows(directory / "measurements.csv", MEAS_HEADER, np.column_stack([meas.times, meas.z]))
    write_input_csv(ds.input, directory / "input.csv")
    if ds.truth is not None:
        _write_rows(directory / "truth.csv", TRUTH_HEADER, np.column_stack([ds.truth.times, ds.truth.states]))
    r = meas.r_cov if meas.r_cov.ndim == 2 else None
    if r is None:
        raise ConfigurationError("bundles store a single measurement covariance")
    fr = ds.plant.friction
    sidecar = {
        "format": FORMAT_VERSION,
        "geometry": {"L": ds.plant.geometry.side_length_L, "d": ds.plant.geometry.moment_arm_d},
        "kinematics": ds.plant.kinematics,
        "friction": {"enabled": fr.enabled, "c_translation": fr.c_translation,
                     "c_rotation": fr.c_rotation, "bias_cross": fr.bias_cross},
        "measurement_cov": r.tolist(),
        "truth": None if ds.true_params is None else {"m": ds.true_params[0], "izz": ds.true_params[1]},
        "input_file": "input.csv",
        "thrust_curves": None if ds.plant.curves is None else {
            str(n): c.to_dict() for n, c in sorted(ds.plant.curves.items())},
        "truth_file": "truth.csv" if ds.truth is not None else None,
        **ds.meta,
    }
    with open(directory / "dataset.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    try:
        with open(directory / "dataset.json") as fh:
            side = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"{directory} has no dataset.json") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"dataset.json: {exc.msg}", line=exc.lineno) from None
    if side.get("format") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported dataset format {side.get('format')!r}")
    geom = ModuleGeometry(side["geometry"]["L"], side["geometry"]["d"])
    fr = FrictionModel(**side.get("friction", {}))
    curves = side.get("thrust_curves")
    if curves is not None:
        curves = {int(n): ThrustCurve.from_dict(c) for n, c in curves.items()}
    plant = Plant(geom, fr, side.get("kinematics", "direct"), curves)
    rows = _read_rows(directory / "measurements.csv", MEAS_HEADER)
    meas = MeasurementSet(rows[:, 0], rows[:, 1:4], np.array(side["measurement_cov"], dtype=float))
    seq = read_input_csv(directory / side.get("input_file", "input.csv"))
    truth = None
    if side.get("truth_file"):
        t_rows = _read_rows(directory / side["truth_file"], TRUTH_HEADER)
        truth = Trajectory(t_rows[:, 0], t_rows[:, 1:])
    tp = side.get("truth")
    true_params = None if tp is None else (float(tp["m"]), float(tp["izz"]))
    reserved = {"format", "geometry", "kinematics", "friction", "measurement_cov", "truth", "input_file",
                "truth_file", "thrust_curves"}
    meta = {k: v for k, v in side.items() if k not in reserved}
    return Dataset(meas, seq, plant, truth, true_params, meta)


# ---------------------------------------------------------------------------
# motion-capture pose logs


@dataclass(frozen=True)
class PoseFormat:
    """Column mapping for a pose CSV; the defaults are the canonical layout."""

    time: str = "time_s"
    x: str = "x_m"
    y: str = "y_m"
    psi: str = "psi"
    unit: str | None = "unit_psi"  # per-row "rad"/"deg"; None means every row uses default_unit
    default_unit: str = "rad"
    time_scale: float = 1.0  # multiply raw times by this to get seconds
    length_scale: float = 1.0  # multiply raw x, y by this to get metres


@dataclass(eq=False)
class PoseLog:
    rate_hz: float
    times: np.ndarray
    poses: np.ndarray  # (N, 3): x [m], y [m], psi [rad, unwrapped]
    warnings: list = field(default_factory=list)

    def __len__(self):
        return self.times.size

    def records(self, r_cov=None) -> list[MeasurementRecord]:
        r = np.diag(POSE_NOISE_STD**2) if r_cov is None else np.asarray(r_cov, dtype=float)
        return [MeasurementRecord(float(t), tuple(z), r) for t, z in zip(self.times, self.poses)]

    def measurement_set(self, r_cov=None) -> MeasurementSet:
        r = np.diag(POSE_NOISE_STD**2) if r_cov is None else np.asarray(r_cov, dtype=float)
        return MeasurementSet(self.times, self.poses, r)


_ANGLE_UNITS = {"rad": 1.0, "deg": math.pi / 180.0}


def ingest_pose_log(path, fmt: PoseFormat = PoseFormat(), rate_hz: float | None = 120.0,
                    jitter: float = 0.10, gap_periods: float = 5.0) -> PoseLog:
    """Read and validate a motion-capture pose CSV.

    Rows are checked in file order: time must strictly increase (a repeated
    timestamp is rejected). The median sample period must match ``rate_hz``
    within ``jitter``; pass ``rate_hz=None`` to take the rate from the data.
    Gaps longer than ``gap_periods`` sample periods are kept but reported
    as warnings.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path.name}: empty file", line=1)
        header = [h.strip() for h in header]
        wanted = [fmt.time, fmt.x, fmt.y, fmt.psi] + ([fmt.unit] if fmt.unit else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ParseError(f"{path.name}: missing columns {missing}", line=1)
        cols = [header.index(c) for c in wanted]
        rows, lines = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path.name}: expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                t, x, y, psi = (float(row[c]) for c in cols[:4])
            except ValueError as exc:
                raise ParseError(f"{path.name}: {exc}", line=lineno) from None
            unit = row[cols[4]].strip() if fmt.unit else fmt.default_unit
            if unit not in _ANGLE_UNITS:
                raise ParseError(f"{path.name}: unit_psi must be 'rad' or 'deg', got {unit!r}", line=lineno)
            if not all(map(math.isfinite, (t, x, y, psi))):
                raise ParseError(f"{path.name}: non-finite value", line=lineno)
            rows.append((t * fmt.time_scale, x * fmt.length_scale, y * fmt.length_scale,
                         psi * _ANGLE_UNITS[unit]))
            lines.append(lineno)
    if not rows:
        raise ValidationError(f"{path.name}: no pose samples")
    data = np.array(rows)
    steps = np.diff(data[:, 0])
    for k in np.flatnonzero(steps <= 0):
        kind = "duplicate timestamp" if steps[k] == 0 else "time goes backwards"
        raise ValidationError(f"{path.name}: {kind} at line {lines[k + 1]}")
    notes = []
    if steps.size:
        period = float(np.median(steps))
        if rate_hz is None:
            rate_hz = 1.0 / period
        elif abs(period * rate_hz - 1.0) > jitter:
            raise ValidationError(
                f"{path.name}: median sample period {period:.6g} s does not match {rate_hz} Hz"
            )
        for k in np.flatnonzero(steps > gap_periods / rate_hz):
            msg = f"{path.name}: gap of {steps[k]:.4g} s before line {lines[k + 1]}"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
    elif rate_hz is None:
        raise ValidationError(f"{path.name}: a single sample does not define a rate")
    data[:, 3] = np.unwrap(data[:, 3])
    return PoseLog(float(rate_hz), data[:, 0].copy(), data[:, 1:].copy(), notes)


def write_pose_log(path, times, poses, unit: str = "rad") -> None:
    if unit not in _ANGLE_UNITS:
        raise InvalidArgumentError("unit must be 'rad' or 'deg'")
    scale = _ANGLE_UNITS[unit]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POSE_HEADER)
        for t, (x, y, psi) in zip(times, poses):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(psi) / scale), unit])


def dataset_from_pose_log(log: PoseLog, seq: InputSequence, plant: Plant | None = None, r_cov=None,
                          true_params=None) -> Dataset:
    """Wrap an experimental log as a dataset; only scalar reference values can be attached."""
    meas = log.measurement_set(r_cov)
    meta = {"rate_hz": log.rate_hz, "noise_std": np.sqrt(np.diag(meas.r_cov)).tolist()}
    return Dataset(meas, seq, plant or Plant(), None, true_params, meta)


# ---------------------------------------------------------------------------
# bifilar swing test


@dataclass(frozen=True)
class SwingTestConfig:
    """Bifilar pendulum rig: mass, string separation ``d_sep``, string length ``h``, period."""

    d_sep: float
    h: float
    period_T: float
    m: float = SCALE_MASS
    g: float = STANDARD_GRAVITY
    m_uncertainty: float = SCALE_RESOLUTION

    def __post_init__(self):
        for name in ("d_sep", "h", "period_T", "m", "g"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.m_uncertainty < 0:
            raise InvalidArgumentError("m_uncertainty must be non-negative")


def swing_test_moi(cfg: SwingTestConfig) -> float:
    """Yaw inertia from a bifilar swing: I = m g D^2 T^2 / (16 pi^2 h)."""
    return cfg.m * cfg.g * cfg.d_sep**2 * cfg.period_T**2 / (16.0 * math.pi**2 * cfg.h)


def swing_test_moi_uncertainty(cfg: SwingTestConfig) -> float:
    """Inertia spread implied by the scale resolution alone (the formula is linear in m)."""
    return swing_test_moi(cfg) * cfg.m_uncertainty / cfg.m


def period_from_cycles(durations, cycles: int = 10) -> float:
    """Oscillation period from repeated timings of ``cycles`` full swings each.

    Each timing is first reduced to a single-swing period, then the
    repetitions are averaged.
    """
    d = np.asarray(durations, dtype=float).reshape(-1)
    if d.size == 0 or np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise InvalidArgumentError("durations must be a non-empty list of positive times")
    if cycles < 1:
        raise InvalidArgumentError("cycles must be >= 1")
    return float(np.mean(d / cycles))
