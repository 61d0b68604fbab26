"""Time-indexed thruster command sequences and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, ParseError

DOMAINS = ("force", "duty")
CSV_HEADER = ("time_s", "t1", "t2", "t3", "t4", "domain")

# relative tolerance used for "uniform step" and ZOH sample lookup
_STEP_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class InputSequence:
    """Thruster commands T1..T4 sampled on a uniform time grid.

    ``domain`` is ``"force"`` (signed newtons per thruster) or ``"duty"``
    (percent PWM on-time). Between samples the command is held constant,
    and the last sample is held for one more step.
    """

    times: np.ndarray
    commands: np.ndarray
    domain: str = "force"

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        commands = np.array(self.commands, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidArgumentError("input sequence needs at least two samples")
        if commands.shape != (times.size, 4):
            raise InvalidArgumentError(
                f"commands must have shape ({times.size}, 4), got {commands.shape}"
            )
        if self.domain not in DOMAINS:
            raise InvalidArgumentError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(commands))):
            raise InvalidArgumentError("input sequence contains non-finite values")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise InvalidArgumentError("input times must be strictly increasing")
        if np.ptp(steps) > _STEP_RTOL * max(steps.mean(), 1e-12) + 1e-12:
            raise InvalidArgumentError("input times must be uniformly spaced")
        if self.domain == "duty" and (commands.min() < 0 or commands.max() > 100):
            raise InvalidArgumentError("duty commands must lie in [0, 100] percent")
        times.setflags(write=False)
        commands.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "commands", commands)

    def __len__(self) -> int:
        return self.times.size

    @property
    def step(self) -> float:
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        """Last instant covered by the hold of the final sample."""
        return float(self.times[-1]) + self.step

    def check_covers(self, t0: float, tf: float) -> None:
        tol = _STEP_RTOL * self.step
        if t0 < self.t_start - tol or tf > self.t_end + tol:
            raise ConfigurationError(
                f"input covers [{self.t_start}, {self.t_end}] s but [{t0}, {tf}] s was requested"
            )

    def sample_index(self, t) -> np.ndarray:
        """Index of the sample held at time(s) ``t`` (zero-order hold)."""
        t = np.asarray(t, dtype=float)
        # nudge forward so a time sitting on a sample instant (up to rounding) picks that sample
        idx = np.searchsorted(self.times, t + _STEP_RTOL * self.step, side="right") - 1
        return np.clip(idx, 0, self.times.size - 1)

    def scaled(self, factor: float) -> "InputSequence":
        return InputSequence(self.times, self.commands * factor, self.domain)

    def concat(self, other: "InputSequence") -> "InputSequence":
        if other.domain != self.domain:
            raise ConfigurationError("cannot join sequences from different domains")
        return InputSequence(
            np.concatenate([self.times, other.times]),
            np.vstack([self.commands, other.commands]),
            self.domain,
        )

    def to_csv(self, path) -> None:
        write_input_csv(self, path)

    @classmethod
    def from_csv(cls, path) -> "InputSequence":
        return read_input_csv(path)


def write_input_csv(seq: InputSequence, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, row in zip(seq.times, seq.commands):
            w.writerow([repr(float(t)), *(repr(float(c)) for c in row), seq.domain])


def read_input_csv(path) -> InputSequence:
    path = Path(path)
    times, commands, domains = [], [], set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ParseError(f"expected 6 fields, got {len(row)}", line=lineno)
            try:
                times.append(float(row[0]))
                commands.append([float(c) for c in row[1:5]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            domains.add(row[5].strip())
    if len(domains) != 1:
        raise ParseError(f"{path.name}: mixed or missing domain column {sorted(domains)}")
    return InputSequence(np.array(times), np.array(commands), domains.pop())
