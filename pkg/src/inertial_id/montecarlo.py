"""Monte Carlo consistency checks for the EKF over randomised inertial parameters.

Each run draws true (m, izz) uniformly in a band around the nominal values,
simulates the truth with small acceleration noise, samples noisy poses and
filters them with the mean started at the drawn truth. Per-step averages of
the parameter error, the filter variance and the sample variance across
runs then show whether the filter is unbiased and whether its reported
covariance matches the spread it actually achieves.

Run ``k`` draws everything from ``default_rng([seed, k])``, so results do not
depend on how runs are scheduled across workers.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import measurement_times, noisy_poses, simulate_truth
from .dynamics import DEFAULT_DT, TRUE_IZZ, TRUE_MASS, AugmentedState, Plant
from .errors import InertialIdError, InvalidArgumentError
from .estimators import POSE_NOISE_STD, EkfConfig, MeasurementSet, ekf_run
from .excitation import translation_then_rotation
from .inputs import InputSequence, read_input_csv

PARAMS = ("m", "izz")
TRUTH_ACCEL_STD = (1e-3, 1e-3, 1e-3)  # u, v [m/s^2/sqrt(Hz)], r [rad/s^2/sqrt(Hz)]


def default_filter_config(accel_std=TRUTH_ACCEL_STD) -> EkfConfig:
    """Filter settings matched to the simulated truth.

    The velocity process noise equals the truth's acceleration noise. The
    mass gets none because it is constant in every run; with a mass noise
    floor the average mass variance would start rising once the data has
    pinned it down.
    """
    q = np.zeros(8)
    q[3:6] = np.asarray(accel_std, dtype=float) ** 2
    return EkfConfig(process_noise_q=np.diag(q))


@dataclass(frozen=True)
class McConfig:
    n_runs: int = 500
    param_variation: float = 0.5
    ekf: EkfConfig = field(default_factory=default_filter_config)
    input: InputSequence | None = None  # None: translate then rotate, 7 s each
    seed: int = 0
    workers: int = 1
    rate_hz: float = 50.0
    noise_std: tuple = tuple(POSE_NOISE_STD)
    accel_noise_std: tuple | None = TRUTH_ACCEL_STD
    nominal: tuple = (TRUE_MASS, TRUE_IZZ)
    dt: float = DEFAULT_DT
    plant: Plant = field(default_factory=Plant)

    def __post_init__(self):
        if int(self.n_runs) < 1:
            raise InvalidArgumentError("n_runs must be >= 1")
        if not 0.0 <= self.param_variation < 1.0:
            raise InvalidArgumentError("param_variation must be in [0, 1)")
        if int(self.workers) < 1:
            raise InvalidArgumentError("workers must be >= 1")
        if not self.rate_hz > 0:
            raise InvalidArgumentError("rate_hz must be positive")
        if min(self.noise_std) < 0:
            raise InvalidArgumentError("noise_std must be non-negative")
        if self.input is None:
            object.__setattr__(self, "input", translation_then_rotation(dt=self.dt))

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        """Campaign settings from JSON-style data; ``input_csv`` names an input file."""
        d = dict(d)
        extra = set(d) - {"n_runs", "param_variation", "seed", "workers", "rate_hz", "noise_std",
                          "accel_noise_std", "nominal", "dt", "input_csv"}
        if extra:
            raise InvalidArgumentError(f"unknown campaign keys {sorted(extra)}")
        seq = read_input_csv(d.pop("input_csv")) if "input_csv" in d else None
        for key in ("noise_std", "accel_noise_std", "nominal"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        accel = d.get("accel_noise_std", TRUTH_ACCEL_STD)
        return cls(input=seq, ekf=default_filter_config(accel or (0.0, 0.0, 0.0)), **d)

    def summary(self) -> dict:
        return {
            "n_runs": self.n_runs, "param_variation": self.param_variation, "seed": self.seed,
            "rate_hz": self.rate_hz, "noise_std": list(self.noise_std),
            "accel_noise_std": None if self.accel_noise_std is None else list(self.accel_noise_std),
            "nominal": list(self.nominal), "dt": self.dt,
            "input_span_s": [self.input.t_start, float(self.input.times[-1])],
        }


@dataclass(eq=False)
class RunOutcome:
    index: int
    true_params: np.ndarray  # (2,)
    errors: np.ndarray | None = None  # (N, 2) estimate minus truth
    variances: np.ndarray | None = None  # (N, 2) filter variance
    failure: str | None = None


@dataclass(eq=False)
class McReport:
    """Per-step aggregates over the successful runs plus per-run final values."""

    times: np.ndarray
    mean_error: np.ndarray  # (N, 2)
    avg_variance: np.ndarray  # (N, 2) mean filter variance
    sample_variance: np.ndarray  # (N, 2) variance of the error across runs
    containment: np.ndarray  # (N, 2) fraction of runs with |error| <= 3 sigma
    final_errors: np.ndarray  # (n_ok, 2)
    final_sigmas: np.ndarray  # (n_ok, 2)
    true_params: np.ndarray  # (n_runs, 2), failed runs included
    run_ok: np.ndarray  # (n_runs,) bool
    failures: dict = field(default_factory=dict)  # run index -> message
    config: dict = field(default_factory=dict)

    @property
    def n_effective(self) -> int:
        return int(self.run_ok.sum())

    @property
    def avg_sigma(self) -> np.ndarray:
        return np.sqrt(self.avg_variance)

    def summary(self) -> dict:
        fe = self.mean_error[-1]
        fs = self.avg_sigma[-1]
        out = {"n_runs": int(self.run_ok.size), "n_effective": self.n_effective,
               "failed_runs": {str(k): v for k, v in sorted(self.failures.items())},
               "config": self.config}
        for j, p in enumerate(PARAMS):
            out[p] = {
                "final_mean_error": float(fe[j]),
                "final_avg_sigma": float(fs[j]),
                "final_bias_over_sigma": float(fe[j] / fs[j]) if fs[j] > 0 else None,
                "min_containment": float(self.containment[:, j].min()),
            }
        return out

    def to_csv(self, path) -> None:
        header = ["time_s"]
        for p in PARAMS:
            header += [f"mean_err_{p}", f"avg_var_{p}", f"sample_var_{p}", f"containment_{p}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [t]
                for j in range(2):
                    row += [self.mean_error[k, j], self.avg_variance[k, j], self.sample_variance[k, j],
                            self.containment[k, j]]
                w.writerow([repr(float(v)) for v in row])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def draw_parameters(rng: np.random.Generator, nominal, variation: float) -> np.ndarray:
    lo = np.asarray(nominal, dtype=float) * (1.0 - variation)
    hi = np.asarray(nominal, dtype=float) * (1.0 + variation)
    return rng.uniform(lo, hi)


def simulate_run(config: McConfig, index: int) -> RunOutcome:
    """One campaign member, fully determined by ``(config.seed, index)``."""
    rng = np.random.default_rng([config.seed, index])
    params = draw_parameters(rng, config.nominal, config.param_variation)
    x0 = AugmentedState(m=float(params[0]), izz=float(params[1]))
    seq = config.input
    times = measurement_times(seq.t_start, float(seq.times[-1]), config.rate_hz)
    out = RunOutcome(index, params)
    try:
        truth = simulate_truth(x0, seq, config.plant, times, config.dt, config.accel_noise_std, rng)
        z = noisy_poses(truth, config.noise_std, rng)
        meas = MeasurementSet(times, z, config.ekf.measurement_cov)
        filt = replace(config.ekf, initial_mean=x0, param_floor=None)
        res = ekf_run(meas, seq, filt, plant=config.plant, dt=config.dt)
    except (InertialIdError, np.linalg.LinAlgError, FloatingPointError) as exc:
        out.failure = f"{type(exc).__name__}: {exc}"
        return out
    out.errors = res.means[:, 6:8] - params
    out.variances = np.diagonal(res.covs, axis1=1, axis2=2)[:, 6:8].copy()
    return out


def _run_chunk(args):
    config, indices = args
    return [simulate_run(config, k) for k in indices]


def aggregate(outcomes: list[RunOutcome], times: np.ndarray, config: dict | None = None) -> McReport:
    """Deterministic reduction over the outcomes, in run-index order."""
    outcomes = sorted(outcomes, key=lambda o: o.index)
    ok = np.array([o.failure is None for o in outcomes])
    failures = {o.index: o.failure for o in outcomes if o.failure is not None}
    params = np.array([o.true_params for o in outcomes]).reshape(-1, 2)
    good = [o for o in outcomes if o.failure is None]
    n = times.size
    if not good:
        nan = np.full((n, 2), np.nan)
        return McReport(times, nan, nan, nan, nan, np.empty((0, 2)), np.empty((0, 2)), params, ok,
                        failures, config or {})
    err = np.stack([o.errors for o in good])  # (R, N, 2)
    var = np.stack([o.variances for o in good])
    mean_err = err.mean(axis=0)
    sample_var = err.var(axis=0, ddof=1) if len(good) > 1 else np.zeros((n, 2))
    avg_var = var.mean(axis=0)
    inside = np.abs(err) <= 3.0 * np.sqrt(np.maximum(var, 0.0))
    contain = inside.mean(axis=0)
    return McReport(times, mean_err, avg_var, sample_var, contain, err[:, -1, :].copy(),
                    np.sqrt(var[:, -1, :]), params, ok, failures, config or {})


def run_monte_carlo(config: McConfig = McConfig()) -> McReport:
    """Run the campaign; failed runs are reported and left out of the aggregates."""
    indices = list(range(int(config.n_runs)))
    workers = min(int(config.workers), len(indices))
    if workers == 1:
        outcomes = [simulate_run(config, k) for k in indices]
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = [o for part in pool.map(_run_chunk, [(config, c) for c in chunks]) for o in part]
    times = measurement_times(config.input.t_start, float(config.input.times[-1]), config.rate_hz)
    return aggregate(outcomes, times, config.summary())


@dataclass(eq=False)
class ConsistencyStats:
    """Sample variance over average filter variance, per parameter and step."""

    times: np.ndarray
    ratio: np.ndarray  # (N, 2)
    flagged: np.ndarray  # (N, 2) bool, ratio outside [low, high]
    low: float = 0.5
    high: float = 2.0

    def fraction_in_band(self) -> np.ndarray:
        return 1.0 - self.flagged.mean(axis=0)

    def flagged_times(self, param: str) -> np.ndarray:
        return self.times[self.flagged[:, PARAMS.index(param)]]

    def as_dict(self) -> dict:
        return {p: {"fraction_in_band": float(self.fraction_in_band()[j]),
                    "median_ratio": float(np.median(self.ratio[:, j])),
                    "n_flagged": int(self.flagged[:, j].sum())}
                for j, p in enumerate(PARAMS)}


def consistency_stats(report: McReport, low: float = 0.5, high: float = 2.0,
                      min_runs: int = 30) -> ConsistencyStats:
    if report.n_effective < min_runs:
        raise InvalidArgumentError(f"consistency needs at least {min_runs} runs, got {report.n_effective}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(report.avg_variance > 0, report.sample_variance / report.avg_variance, np.inf)
    flagged = (ratio > high) | (ratio < low)
    return ConsistencyStats(report.times, ratio, flagged, low, high)


__all__ = [
    "ConsistencyStats",
    "McConfig",
    "McReport",
    "RunOutcome",
    "aggregate",
    "consistency_stats",
    "default_filter_config",
    "draw_parameters",
    "run_monte_carlo",
    "simulate_run",
]
