"""Duty-cycle to thrust actuator model.

A nozzle's thrust is a polynomial in the PWM duty cycle, fitted by linear
least squares on bench data averaged per duty step. Curves are kept per
number of simultaneously active nozzles because the shared supply starves
when several valves open at once.

Coefficients are in gram-force per percent**k; :func:`eval_thrust` returns
newtons.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .dynamics import GeneralizedForce, ModuleGeometry, resolve_thrust
from .errors import ConfigurationError, InvalidArgumentError, ParseError, SingularSystemError

GRAM_FORCE = 9.80665e-3  # N per gram-force
DUTY_MIN = 10.0
DUTY_MAX = 90.0
_DUTY_SCALE = 100.0  # column scaling for the Vandermonde solve

# bench coefficients (a0..a3) at 60 psi accumulator pressure, keyed by active nozzles
TPODS_60PSI = {
    1: (-9.0692, 1.0439, -0.0128, 7.88e-5),
    2: (-7.4315, 0.8516, -0.0104, 6.35e-5),
    3: (-6.6022, 0.7555, -0.0096, 6.11e-5),
    4: (-6.6791, 0.7700, -0.0104, 6.34e-5),
}


class ThrustSample(NamedTuple):
    duty: float  # percent
    thrust: float  # gram-force


@dataclass(frozen=True)
class ThrustCurve:
    coefficients: tuple
    active_nozzles: int = 1
    valid_duty_range: tuple = (DUTY_MIN, DUTY_MAX)
    deadband_high: str = "clamp"  # or "zero": no thrust above the valid range

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) < 2:
            raise InvalidArgumentError("a thrust curve needs order >= 1")
        if self.active_nozzles not in (1, 2, 3, 4):
            raise InvalidArgumentError("active_nozzles must be 1..4")
        if self.deadband_high not in ("clamp", "zero"):
            raise InvalidArgumentError("deadband_high must be 'clamp' or 'zero'")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def polynomial(self, duty) -> np.ndarray:
        """Raw polynomial value in gram-force, no deadband or clamping."""
        return np.polynomial.polynomial.polyval(np.asarray(duty, dtype=float), self.coefficients)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "active_nozzles": self.active_nozzles,
            "coefficients": list(self.coefficients),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ThrustCurve":
        curve = cls(tuple(d["coefficients"]), int(d.get("active_nozzles", 1)))
        if "order" in d and int(d["order"]) != curve.order:
            raise InvalidArgumentError("order does not match coefficient count")
        return curve


def preset(name: str = "tpods-60psi") -> dict[int, ThrustCurve]:
    """Built-in curve sets keyed by active-nozzle count."""
    if name != "tpods-60psi":
        raise ConfigurationError(f"unknown thrust preset {name!r}")
    return {n: ThrustCurve(c, n) for n, c in TPODS_60PSI.items()}


def _vandermonde(duty: np.ndarray, order: int) -> np.ndarray:
    return np.vander(duty / _DUTY_SCALE, order + 1, increasing=True)


def _as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray([(s[0], s[1]) for s in samples], dtype=float).reshape(-1, 2)
    duty, thrust = arr[:, 0], arr[:, 1]
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("thrust samples must be finite")
    if np.any(duty < DUTY_MIN) or np.any(duty > DUTY_MAX):
        raise InvalidArgumentError(f"fit duties must lie within [{DUTY_MIN}, {DUTY_MAX}] percent")
    return duty, thrust


def fit_thrust_curve(samples: Sequence, order: int = 3, active_nozzles: int = 1) -> ThrustCurve:
    """Least-squares polynomial fit of thrust (gf) against duty (percent).

    The solve uses a column-scaled Vandermonde matrix and an orthogonal
    factorisation rather than forming H^T H, which is badly conditioned for
    duties up to 90 raised to the third or fourth power.
    """
    if order < 1:
        raise InvalidArgumentError("order must be >= 1")
    duty, thrust = _as_arrays(samples)
    if duty.size <= order + 1:
        raise InvalidArgumentError(f"order {order} needs more than {order + 1} samples, got {duty.size}")
    h = _vandermonde(duty, order)
    coeffs, _, rank, _ = np.linalg.lstsq(h, thrust, rcond=None)
    if rank < order + 1:
        raise SingularSystemError(
            f"Vandermonde matrix has rank {rank} < {order + 1}; need more distinct duty values"
        )
    coeffs = coeffs / _DUTY_SCALE ** np.arange(order + 1)
    return ThrustCurve(tuple(coeffs), active_nozzles)


def fit_residuals(curve: ThrustCurve, samples) -> np.ndarray:
    duty, thrust = _as_arrays(samples)
    return thrust - curve.polynomial(duty)


@dataclass
class OrderComparison:
    orders: list
    rms: list
    flagged_order: int
    curves: dict = field(default_factory=dict)

    def rows(self):
        for n, r in zip(self.orders, self.rms):
            yield {"order": n, "residual_rms_gf": r, "flagged": n == self.flagged_order}


def compare_fit_orders(samples, orders=(1, 2, 3, 4), improvement: float = 0.05,
                       active_nozzles: int = 1) -> OrderComparison:
    """Fit each order and flag the lowest one that higher orders do not beat.

    An order is flagged when the next order up improves its residual RMS by
    less than ``improvement`` (fractional), or when its RMS is already at
    round-off level. If no order qualifies the highest one is flagged.
    """
    orders = sorted(int(n) for n in orders)
    duty, thrust = _as_arrays(samples)
    floor = 1e-9 * max(float(np.sqrt(np.mean(thrust**2))), 1e-300)
    curves, rms = {}, []
    for n in orders:
        curves[n] = fit_thrust_curve(samples, n, active_nozzles)
        res = thrust - curves[n].polynomial(duty)
        rms.append(float(np.sqrt(np.mean(res**2))))
    flagged = orders[-1]
    for i, n in enumerate(orders[:-1]):
        if rms[i] <= floor or (rms[i] - rms[i + 1]) / rms[i] < improvement:
            flagged = n
            break
    return OrderComparison(orders, rms, flagged, curves)


def eval_thrust(curve: ThrustCurve, duty: float) -> float:
    """Nozzle thrust in newtons for a duty cycle in percent.

    Zero below the valid range; above it the top-of-range value is held (or
    zero with ``deadband_high="zero"``). Negative polynomial values clamp to 0.
    """
    if not 0.0 <= duty <= 100.0:
        raise InvalidArgumentError(f"duty must be within [0, 100] percent, got {duty}")
    lo, hi = curve.valid_duty_range
    if duty < lo:
        return 0.0
    if duty > hi:
        if curve.deadband_high == "zero":
            return 0.0
        duty = hi
    return max(float(curve.polynomial(duty)), 0.0) * GRAM_FORCE


def duty_to_force(duties, curves: Mapping[int, ThrustCurve],
                  geometry: ModuleGeometry | None = None) -> GeneralizedForce:
    """Body force from four duty commands, using the curve for the active count."""
    duties = np.asarray(duties, dtype=float)
    if duties.shape != (4,):
        raise InvalidArgumentError("a duty command has four entries")
    if np.any(duties < 0) or np.any(duties > 100):
        raise InvalidArgumentError("duties must lie within [0, 100] percent")
    active = duties >= DUTY_MIN
    count = int(active.sum())
    thrusts = np.zeros(4)
    if count:
        if count not in curves:
            raise ConfigurationError(f"no thrust curve for {count} active nozzles")
        curve = curves[count]
        thrusts[active] = [eval_thrust(curve, d) for d in duties[active]]
    return resolve_thrust(thrusts, geometry)


def read_bench_csv(path) -> list[ThrustSample]:
    """Bench log with columns ``time_s,duty_pct,thrust_gf`` (one row per averaged step)."""
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time_s", "duty_pct", "thrust_gf"]:
            raise ParseError("expected header time_s,duty_pct,thrust_gf", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                _, duty, thrust = (float(c) for c in row)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            samples.append(ThrustSample(duty, thrust))
    return samples


def write_bench_csv(samples, path, step_s: float = 5.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "duty_pct", "thrust_gf"])
        for i, (duty, thrust) in enumerate(samples):
            w.writerow([repr(i * step_s), repr(float(duty)), repr(float(thrust))])


def save_curve(curve: ThrustCurve, path) -> None:
    with open(path, "w") as fh:
        json.dump(curve.to_dict(), fh, indent=2)
        fh.write("\n")


def load_curve(path) -> ThrustCurve:
    with open(path) as fh:
        return ThrustCurve.from_dict(json.load(fh))
