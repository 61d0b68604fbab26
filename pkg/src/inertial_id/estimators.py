"""Batch nonlinear least squares and an augmented-state EKF for (m, izz).

Both estimators work on the 8-element augmented state and pose-only
measurements z = (x, y, psi). The output map is a pure selection, so the
measurement Jacobian is ``[I3 0]`` and the batch design rows are the first
three rows of the state transition matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .dynamics import (
    DEFAULT_DT,
    AugmentedState,
    Plant,
    Trajectory,
    _grid_forces,
    _state_array,
    propagate_grid_stm,
    refine_grid,
)
from .errors import (
    InvalidArgumentError,
    NonConvergenceError,
    NumericalFailureError,
    UnobservableError,
)
from .inputs import InputSequence

N_STATE = 8
H_POSE = np.hstack([np.eye(3), np.zeros((3, 5))])

# default filter initial distribution (mean, std)
NOMINAL_INITIAL_MEAN = AugmentedState(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 5e-3)
NOMINAL_INITIAL_STD = np.array(
    [0.1, 0.1, math.radians(5.0), 0.1, 0.1, math.radians(2.0), 1.0, 2e-3]
)
MASS_NOISE_PSD = 1e-4  # kg^2/Hz on the mass state
POSE_NOISE_STD = np.array([0.01, 0.01, math.radians(1.0)])


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


class MeasurementRecord(NamedTuple):
    t: float
    z: tuple  # (x [m], y [m], psi [rad])
    r_cov: np.ndarray  # 3x3


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Time-sorted pose measurements with a shared or per-sample covariance."""

    times: np.ndarray
    z: np.ndarray
    r_cov: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        z = np.asarray(self.z, dtype=float)
        r = np.asarray(self.r_cov, dtype=float)
        if times.ndim != 1 or times.size == 0 or z.shape != (times.size, 3):
            raise InvalidArgumentError("measurements need times (N,) and z (N, 3)")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("measurement times must be strictly increasing")
        if r.shape not in ((3, 3), (times.size, 3, 3)):
            raise InvalidArgumentError("r_cov must be 3x3 or (N, 3, 3)")
        mats = r.reshape(-1, 3, 3)
        if not np.allclose(mats, np.swapaxes(mats, 1, 2)):
            raise InvalidArgumentError("measurement covariance must be symmetric")
        try:
            np.linalg.cholesky(mats)
        except np.linalg.LinAlgError:
            raise InvalidArgumentError("measurement covariance must be positive definite") from None
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "r_cov", r)

    def __len__(self):
        return self.times.size

    @classmethod
    def from_records(cls, records: Sequence[MeasurementRecord]) -> "MeasurementSet":
        records = list(records)
        covs = np.array([np.asarray(r.r_cov, dtype=float) for r in records])
        r = covs[0] if np.all(covs == covs[0]) else covs
        return cls(np.array([r.t for r in records]), np.array([r.z for r in records]), r)

    def records(self) -> list[MeasurementRecord]:
        covs = self.covariances()
        return [MeasurementRecord(float(t), tuple(map(float, z)), c)
                for t, z, c in zip(self.times, self.z, covs)]

    def covariances(self) -> np.ndarray:
        if self.r_cov.ndim == 2:
            return np.broadcast_to(self.r_cov, (self.times.size, 3, 3))
        return self.r_cov

    def window(self, t_end: float) -> "MeasurementSet":
        keep = self.times <= t_end + 1e-9
        r = self.r_cov if self.r_cov.ndim == 2 else self.r_cov[keep]
        return MeasurementSet(self.times[keep], self.z[keep], r)


def as_measurement_set(meas) -> MeasurementSet:
    if isinstance(meas, MeasurementSet):
        return meas
    return MeasurementSet.from_records(meas)


def _check_cov(p, name, strict=True):
    p = np.asarray(p, dtype=float)
    if p.shape != (N_STATE, N_STATE):
        raise InvalidArgumentError(f"{name} must be 8x8")
    if not np.allclose(p, p.T, rtol=1e-10, atol=0.0):
        raise InvalidArgumentError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(p)
    if (strict and eig.min() <= 0) or eig.min() < -1e-12 * max(eig.max(), 0.0):
        raise InvalidArgumentError(f"{name} must be positive {'definite' if strict else 'semidefinite'}")
    return p


# ---------------------------------------------------------------------------
# batch least squares


@dataclass(frozen=True)
class PriorInfo:
    x0_ref: AugmentedState
    p0_bar: np.ndarray
    dx0_bar: np.ndarray = field(default_factory=lambda: np.zeros(N_STATE))

    def __post_init__(self):
        object.__setattr__(self, "x0_ref", AugmentedState.from_array(self.x0_ref))
        object.__setattr__(self, "p0_bar", _check_cov(self.p0_bar, "p0_bar"))
        dx = np.asarray(self.dx0_bar, dtype=float).reshape(-1)
        if dx.size != N_STATE:
            raise InvalidArgumentError("dx0_bar must have 8 entries")
        object.__setattr__(self, "dx0_bar", dx)

    @classmethod
    def nominal(cls) -> "PriorInfo":
        return cls(NOMINAL_INITIAL_MEAN, np.diag(NOMINAL_INITIAL_STD**2))


@dataclass(eq=False)
class BatchResult:
    x0_hat: AugmentedState
    p0: np.ndarray
    iterations: int
    final_correction_norm: float
    residuals: np.ndarray  # (N, 3) at the final iteration's reference
    times: np.ndarray
    t0: float
    costs: list  # weighted residual cost sum(res' R^-1 res) per iteration
    corrections: list  # max|dx0_hat| per iteration

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.diag(self.p0))


def batch_least_squares(measurements, seq: InputSequence, prior: PriorInfo, threshold: float = 1e-8,
                        max_iter: int = 25, *, plant: Plant | None = None, dt: float = DEFAULT_DT,
                        t0: float | None = None) -> BatchResult:
    """Iterated batch (Gauss-Newton) estimate of the augmented state at epoch ``t0``.

    Each pass integrates the reference trajectory and its transition matrix
    through every measurement, accumulates the information matrix and
    vector, solves the normal equations and shifts the reference. The prior
    deviation is shifted by the same correction so the prior stays anchored
    at its original mean. Iteration stops once ``max|dx0_hat| <= threshold``.
    """
    if not threshold > 0:
        raise InvalidArgumentError("threshold must be positive")
    meas = as_measurement_set(measurements)
    plant = plant or Plant()
    t0 = float(meas.times[0]) if t0 is None else float(t0)
    sample_forces = plant.sample_forces(seq)
    weights = np.linalg.inv(meas.covariances())  # (N, 3, 3)

    p_bar_inv = np.linalg.inv(prior.p0_bar)
    x_ref = prior.x0_ref.as_array()
    dx_bar = prior.dx0_bar.copy()
    costs, corrections = [], []
    best = np.inf
    result = None
    for it in range(1, max_iter + 1):
        try:
            _state_array(x_ref)
        except Exception as exc:
            raise NonConvergenceError(f"reference left the valid domain: {exc}", last=result) from None
        xs, phis = propagate_grid_stm(x_ref, seq, plant, meas.times, dt, t0=t0, sample_forces=sample_forces)
        # heading residuals stay unwrapped: far from the solution the
        # predicted heading can be off by several turns
        res = meas.z - xs[:, :3]
        h = phis[:, :3, :]  # (N, 3, 8) = H_pose @ Phi
        hw = np.einsum("nki,nkj->nij", h, weights)  # H' W
        lam_mat = p_bar_inv + np.einsum("nik,nkj->ij", hw, h)
        lam_vec = p_bar_inv @ dx_bar + np.einsum("nik,nk->i", hw, res)
        cost = float(np.einsum("ni,nij,nj->", res, weights, res))
        dx_hat, p0 = _solve_normal(lam_mat, lam_vec)
        step = float(np.max(np.abs(dx_hat)))
        costs.append(cost)
        corrections.append(step)
        result = BatchResult(AugmentedState.from_array(x_ref + dx_hat), p0, it, step, res,
                             meas.times.copy(), t0, list(costs), list(corrections))
        x_ref = x_ref + dx_hat
        dx_bar = dx_bar - dx_hat
        if step <= threshold:
            return result
        best = min(best, step)
        if step > 10.0 * best:
            raise NonConvergenceError(f"corrections grew from {best:.3g} to {step:.3g}", last=result)
    raise NonConvergenceError(f"no convergence after {max_iter} iterations (last step {step:.3g})",
                              last=result)


def _solve_normal(lam_mat, lam_vec):
    """Solve the normal equations with diagonal scaling; returns (dx, inverse)."""
    d = np.sqrt(np.abs(np.diag(lam_mat)))
    if np.any(d == 0):
        raise UnobservableError("information matrix has an empty row")
    scaled = lam_mat / np.outer(d, d)
    if np.linalg.cond(scaled) > 1e13:
        raise UnobservableError("information matrix is numerically singular")
    try:
        chol = np.linalg.cholesky(scaled)
    except np.linalg.LinAlgError:
        raise UnobservableError("information matrix is not positive definite") from None
    inv_scaled = np.linalg.inv(chol).T @ np.linalg.inv(chol)
    p = inv_scaled / np.outer(d, d)
    p = 0.5 * (p + p.T)
    dx = p @ lam_vec
    # one refinement pass against the unscaled system
    dx = dx + p @ (lam_vec - lam_mat @ dx)
    return dx, p


@dataclass(frozen=True)
class ResidualStats:
    n: int
    mean: np.ndarray
    std: np.ndarray
    z: np.ndarray
    zero_mean: tuple

    @property
    def all_zero_mean(self) -> bool:
        return all(self.zero_mean)

    def as_dict(self) -> dict:
        names = ("x", "y", "psi")
        return {
            nm: {"mean": float(m), "std": float(s), "z": float(z), "zero_mean": bool(ok)}
            for nm, m, s, z, ok in zip(names, self.mean, self.std, self.z, self.zero_mean)
        }


def residual_analysis(result, z_limit: float = 3.0) -> ResidualStats:
    """Per-channel mean, std and ``z = |mean| sqrt(N) / std``; zero-mean iff z < z_limit."""
    res = np.asarray(getattr(result, "residuals", result), dtype=float)
    if res.ndim != 2 or res.shape[0] == 0:
        raise InvalidArgumentError("residuals must be a non-empty (N, k) array")
    n = res.shape[0]
    mean = res.mean(axis=0)
    std = res.std(axis=0, ddof=1) if n > 1 else np.zeros(res.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, np.abs(mean) * math.sqrt(n) / std, np.where(mean == 0, 0.0, np.inf))
    return ResidualStats(n, mean, std, z, tuple(bool(v < z_limit) for v in z))


# ---------------------------------------------------------------------------
# extended Kalman filter


@dataclass(frozen=True)
class EkfConfig:
    """Initial distribution and noise levels.

    ``process_noise_q`` is a rate (spectral density); the per-interval
    process noise is ``Q * dt``.
    """

    initial_mean: AugmentedState = NOMINAL_INITIAL_MEAN
    initial_cov: np.ndarray = field(default_factory=lambda: np.diag(NOMINAL_INITIAL_STD**2))
    process_noise_q: np.ndarray = field(
        default_factory=lambda: np.diag([0, 0, 0, 0, 0, 0, MASS_NOISE_PSD, 0.0])
    )
    measurement_cov: np.ndarray = field(default_factory=lambda: np.diag(POSE_NOISE_STD**2))
    # lower bounds (m, izz) the updated mean is projected onto; None means 10 % of the initial mean
    param_floor: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "initial_mean", AugmentedState.from_array(self.initial_mean))
        if self.param_floor is None:
            m0, i0 = self.initial_mean.m, self.initial_mean.izz
            object.__setattr__(self, "param_floor", (0.1 * m0, 0.1 * i0))
        object.__setattr__(self, "initial_cov", _check_cov(self.initial_cov, "initial_cov", strict=False))
        object.__setattr__(self, "process_noise_q", _check_cov(self.process_noise_q, "process_noise_q",
                                                               strict=False))
        r = np.asarray(self.measurement_cov, dtype=float)
        if r.shape != (3, 3) or not np.allclose(r, r.T) or np.linalg.eigvalsh(r).min() <= 0:
            raise InvalidArgumentError("measurement_cov must be 3x3 symmetric positive definite")
        object.__setattr__(self, "measurement_cov", r)

    def with_initial(self, mean, cov) -> "EkfConfig":
        return replace(self, initial_mean=AugmentedState.from_array(mean), initial_cov=np.asarray(cov),
                       param_floor=None)


@dataclass(eq=False)
class EkfResult:
    times: np.ndarray
    means: np.ndarray  # (N, 8)
    covs: np.ndarray  # (N, 8, 8), posterior at each measurement
    innovations: np.ndarray  # (N, 3)
    innovation_covs: np.ndarray  # (N, 3, 3)
    prior_traces: np.ndarray  # trace of P before each update
    rmse_mass: float | None = None
    rmse_izz: float | None = None
    seed: BatchResult | None = None

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.covs, axis1=1, axis2=2))

    @property
    def final(self) -> AugmentedState:
        return AugmentedState.from_array(self.means[-1])


def _check_psd(p, step):
    try:
        np.linalg.cholesky(p)
        return
    except np.linalg.LinAlgError:
        pass
    eig = np.linalg.eigvalsh(p)
    if eig.min() < -1e-10 * max(eig.max(), 1e-300) or not np.all(np.isfinite(eig)):
        raise NumericalFailureError(f"covariance lost positive semidefiniteness at step {step}", step=step)


def ekf_run(measurements, seq: InputSequence, config: EkfConfig = EkfConfig(), *,
            plant: Plant | None = None, dt: float = DEFAULT_DT, truth=None,
            t0: float | None = None) -> EkfResult:
    """Run the EKF over every measurement.

    The initial mean applies at ``t0`` (default: first measurement time).
    Between measurements the mean follows the nonlinear model and the
    covariance ``Phi P Phi' + Q dt``; updates use the Joseph form with the
    heading innovation wrapped. ``truth`` (a :class:`Trajectory` sampled at
    the measurement times, or a constant ``(m, izz)`` pair) enables RMSE.
    """
    meas = as_measurement_set(measurements)
    plant = plant or Plant()
    t0 = float(meas.times[0]) if t0 is None else float(t0)
    grid, idx = refine_grid(meas.times, dt, t0)
    forces = _grid_forces(seq, plant, grid)
    hs = np.diff(grid)
    fr = plant.friction.as_array()
    rot = plant.rotated
    covs_r = meas.covariances()

    n = meas.times.size
    means = np.empty((n, N_STATE))
    covs = np.empty((n, N_STATE, N_STATE))
    innov = np.empty((n, 3))
    innov_cov = np.empty((n, 3, 3))
    prior_tr = np.empty(n)
    x = config.initial_mean.as_array()
    p = np.array(config.initial_cov, dtype=float)
    q = config.process_noise_q
    eye = np.eye(N_STATE)
    m_floor, izz_floor = config.param_floor
    g_prev = 0
    for k in range(n):
        g = idx[k]
        if g > g_prev:
            xs, phis = K.propagate_grid_stm(x, hs[g_prev:g], forces[g_prev:g], fr, rot)
            x = xs[-1]
            phi = phis[-1]
            p = phi @ p @ phi.T + q * (grid[g] - grid[g_prev])
            p = 0.5 * (p + p.T)
        g_prev = g
        prior_tr[k] = np.trace(p)

        r = covs_r[k]
        nu = meas.z[k] - x[:3]
        nu[2] = wrap_angle(nu[2])
        s = p[:3, :3] + r
        gain = np.linalg.solve(s, p[:3, :]).T  # P H' S^-1
        x = x + gain @ nu
        # early on the parameters are barely observable and a noisy update can push them
        # through zero, where the model is undefined
        x[K.IM] = max(x[K.IM], m_floor)
        x[K.IIZZ] = max(x[K.IIZZ], izz_floor)
        ikh = eye.copy()
        ikh[:, :3] -= gain
        p = ikh @ p @ ikh.T + gain @ r @ gain.T
        p = 0.5 * (p + p.T)
        _check_psd(p, k)
        if not (x[K.IM] > 0 and x[K.IIZZ] > 0) or not np.all(np.isfinite(x)):
            raise NumericalFailureError(f"non-physical estimate at step {k}: m={x[K.IM]}, izz={x[K.IIZZ]}",
                                        step=k)
        means[k] = x
        covs[k] = p
        innov[k] = nu
        innov_cov[k] = s

    out = EkfResult(meas.times.copy(), means, covs, innov, innov_cov, prior_tr)
    if truth is not None:
        out.rmse_mass, out.rmse_izz = rmse(meas.times, means, truth)
    return out


def rmse(times, means, truth) -> tuple[float, float]:
    """Full-run RMS of the mass and inertia errors.

    ``truth`` is a :class:`Trajectory` whose times match ``times`` or a
    constant ``(m, izz)`` pair.
    """
    times = np.asarray(times, dtype=float)
    means = np.asarray(means, dtype=float)
    if means.shape != (times.size, N_STATE):
        raise InvalidArgumentError("means must be (len(times), 8)")
    if isinstance(truth, Trajectory):
        if truth.times.size != times.size or not np.allclose(truth.times, times, rtol=0, atol=1e-9):
            raise InvalidArgumentError("truth timestamps do not line up with the estimates")
        ref = truth.states[:, 6:8]
    else:
        ref = np.broadcast_to(np.asarray(truth, dtype=float).reshape(1, 2), (times.size, 2))
    err = means[:, 6:8] - ref
    return tuple(float(v) for v in np.sqrt(np.mean(err**2, axis=0)))


def ls_seeded_ekf(measurements, seq: InputSequence, seed_duration: float = 20.0,
                  config: EkfConfig = EkfConfig(), *, prior: PriorInfo | None = None,
                  plant: Plant | None = None, dt: float = DEFAULT_DT, truth=None,
                  threshold: float = 1e-8, max_iter: int = 25) -> EkfResult:
    """Batch-solve the first ``seed_duration`` seconds, then filter the whole run from that solution.

    The batch prior defaults to the EKF's own initial distribution. The
    filter starts at the same epoch with the batch mean and its full
    covariance, cross terms included.
    """
    meas = as_measurement_set(measurements)
    t0 = float(meas.times[0])
    if not seed_duration > 0 or t0 + seed_duration > meas.times[-1] + 1e-9:
        raise InvalidArgumentError("seed_duration must be positive and within the data span")
    if prior is None:
        prior = PriorInfo(config.initial_mean, config.initial_cov)
    seed = batch_least_squares(meas.window(t0 + seed_duration), seq, prior, threshold, max_iter,
                               plant=plant, dt=dt, t0=t0)
    out = ekf_run(meas, seq, config.with_initial(seed.x0_hat, seed.p0), plant=plant, dt=dt,
                  truth=truth, t0=t0)
    out.seed = seed
    return out
