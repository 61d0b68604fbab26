"""Command-line entry point: ``inertial-id <subcommand> ...``.

Exit status is 0 on success, 2 for usage errors and 1 when inputs fail
validation (a one-line JSON error is written to stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import replicate
from .datasets import (
    INPUT_KINDS,
    ScenarioConfig,
    SwingTestConfig,
    generate_synthetic,
    load_dataset,
    make_input,
    period_from_cycles,
    swing_test_moi,
    swing_test_moi_uncertainty,
)
from .dynamics import (
    STATE_NAMES,
    STATE_UNITS,
    TRUE_IZZ,
    TRUE_MASS,
    AugmentedState,
    FrictionModel,
    ModuleGeometry,
)
from .errors import InertialIdError
from .estimators import (
    NOMINAL_INITIAL_MEAN,
    NOMINAL_INITIAL_STD,
    EkfConfig,
    PriorInfo,
    batch_least_squares,
    ekf_run,
    ls_seeded_ekf,
    residual_analysis,
)
from .excitation import observability_score, propagate_sensitivity
from .inputs import read_input_csv
from .montecarlo import McConfig, consistency_stats, run_monte_carlo
from .thrust_model import compare_fit_orders, fit_thrust_curve, read_bench_csv, save_curve

_UNIT_TAG = {"m": "m", "m/s": "mps", "rad": "rad", "rad/s": "radps", "kg": "kg", "kg*m^2": "kgm2"}


def _emit(obj, path=None) -> None:
    text = json.dumps(obj, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    print(text)


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def _state_columns(suffix=""):
    return [f"{n}{suffix}_{_UNIT_TAG[u]}" for n, u in zip(STATE_NAMES, STATE_UNITS)]


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    friction = FrictionModel(*args.friction, enabled=True) if args.friction else FrictionModel()
    scenario = ScenarioConfig(
        geometry=ModuleGeometry(args.side_length),
        true_mass=args.mass,
        true_izz=args.izz,
        noise_std=tuple(args.noise),
        rate_hz=args.rate,
        input=read_input_csv(args.input_csv) if args.input_csv else args.input,
        duration=args.duration,
        friction=friction,
        kinematics=args.kinematics,
        seed=args.seed,
        accel_noise_std=tuple(args.accel_noise) if args.accel_noise else None,
    )
    ds = generate_synthetic(scenario, args.out)
    _emit({"dataset": str(args.out), "measurements": len(ds.measurements), "seed": args.seed})
    return 0


def cmd_fit_thrust(args) -> int:
    samples = read_bench_csv(args.bench_csv)
    curve = fit_thrust_curve(samples, args.order, args.nozzles)
    if args.out:
        save_curve(curve, args.out)
    out = {"curve": curve.to_dict()}
    if args.compare:
        cmp = compare_fit_orders(samples, active_nozzles=args.nozzles)
        out["order_comparison"] = list(cmp.rows())
        out["flagged_order"] = cmp.flagged_order
    _emit(out)
    return 0


def cmd_sensitivity(args) -> int:
    seq = read_input_csv(args.input_csv) if args.input_csv else make_input(args.input, args.duration)
    hist = propagate_sensitivity(AugmentedState(m=args.mass, izz=args.izz), seq)
    report = observability_score(hist, threshold=args.threshold)
    if args.out:
        header = ["time_s"] + [f"d{o}_d{p}" for o in ("x", "y", "psi", "u", "v", "r") for p in ("m", "izz")]
        rows = np.column_stack([hist.times, hist.s_x_theta.reshape(len(hist.times), -1)])
        _write_table(args.out, header, rows)
    _emit(report.as_dict())
    return 0


def _prior_from_args(args) -> PriorInfo:
    mean = NOMINAL_INITIAL_MEAN._replace(m=args.prior_mass, izz=args.prior_izz)
    return PriorInfo(mean, np.diag(NOMINAL_INITIAL_STD**2))


def _ekf_outputs(res, out_dir, ds, extra=None) -> dict:
    summary = {
        "final": dict(zip(STATE_NAMES, map(float, res.means[-1]))),
        "final_sigma": dict(zip(STATE_NAMES, map(float, res.sigmas[-1]))),
        "rmse_mass": res.rmse_mass,
        "rmse_izz": res.rmse_izz,
        "true_params": ds.true_params,
        **(extra or {}),
    }
    if out_dir:
        d = _out_dir(out_dir)
        header = ["time_s"] + _state_columns() + _state_columns("_sigma")
        _write_table(d / "ekf_steps.csv", header, np.column_stack([res.times, res.means, res.sigmas]))
        (d / "result.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_estimate_batch(args) -> int:
    ds = load_dataset(args.dataset)
    res = batch_least_squares(ds.measurements, ds.input, _prior_from_args(args), args.threshold,
                              args.max_iter, plant=ds.plant)
    stats = residual_analysis(res)
    summary = {
        "x0_hat": dict(zip(STATE_NAMES, map(float, res.x0_hat))),
        "sigma": dict(zip(STATE_NAMES, map(float, res.sigma))),
        "iterations": res.iterations,
        "final_correction_norm": res.final_correction_norm,
        "residuals": stats.as_dict(),
        "true_params": ds.true_params,
    }
    if ds.true_params:
        m, izz = ds.true_params
        summary["mass_rel_err_pct"] = 100.0 * abs(res.x0_hat.m - m) / m
        summary["izz_rel_err_pct"] = 100.0 * abs(res.x0_hat.izz - izz) / izz
    if args.out:
        d = _out_dir(args.out)
        _write_table(d / "residuals.csv", ["time_s", "res_x_m", "res_y_m", "res_psi_rad"],
                     np.column_stack([res.times, res.residuals]))
        (d / "result.json").write_text(json.dumps(summary, indent=2) + "\n")
    _emit(summary)
    return 0


def _ekf_config(args, ds) -> EkfConfig:
    q = np.zeros((8, 8))
    q[6, 6] = args.mass_psd
    return EkfConfig(process_noise_q=q, measurement_cov=ds.measurements.r_cov)


def cmd_estimate_ekf(args) -> int:
    ds = load_dataset(args.dataset)
    res = ekf_run(ds.measurements, ds.input, _ekf_config(args, ds), plant=ds.plant, truth=ds.truth_ref)
    _emit(_ekf_outputs(res, args.out, ds))
    return 0


def cmd_estimate_seeded(args) -> int:
    ds = load_dataset(args.dataset)
    res = ls_seeded_ekf(ds.measurements, ds.input, args.seed_duration, _ekf_config(args, ds),
                        plant=ds.plant, truth=ds.truth_ref)
    extra = {"seed_iterations": res.seed.iterations,
             "seed_x0_hat": dict(zip(STATE_NAMES, map(float, res.seed.x0_hat)))}
    _emit(_ekf_outputs(res, args.out, ds, extra))
    return 0


def cmd_montecarlo(args) -> int:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    for key in ("n_runs", "seed", "workers"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    report = run_monte_carlo(McConfig.from_dict(cfg))
    summary = report.summary()
    if report.n_effective >= 30:
        summary["consistency"] = consistency_stats(report).as_dict()
    if args.out:
        d = _out_dir(args.out)
        report.to_csv(d / "mc_steps.csv")
        (d / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _emit(summary)
    return 0


def cmd_swing_moi(args) -> int:
    period = args.T if args.T is not None else period_from_cycles(args.cycles, args.cycles_per_timing)
    cfg = SwingTestConfig(d_sep=args.D, h=args.h, period_T=period, m=args.m, g=args.g,
                          m_uncertainty=args.m_uncertainty)
    value = swing_test_moi(cfg)
    if args.json:
        _emit({"izz": value, "izz_uncertainty_from_mass": swing_test_moi_uncertainty(cfg), "period_s": period,
               "m": cfg.m, "m_uncertainty": cfg.m_uncertainty})
    else:
        print(f"{value:.4e}")
        print(f"# +/- {swing_test_moi_uncertainty(cfg):.1e} kg*m^2 from m = {cfg.m} +/- {cfg.m_uncertainty} kg",
              file=sys.stderr)
    return 0


def cmd_replicate(args) -> int:
    _emit(replicate.run_preset(args.preset, args.seed, args.workers), args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _positive(text):
    val = float(text)
    if not (val > 0 and math.isfinite(val)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return val


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inertial-id", description="Mass and yaw-inertia identification tools.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    s = sub.add_parser("simulate", help="generate a synthetic dataset bundle")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--input", choices=INPUT_KINDS, default="phase-sine")
    s.add_argument("--input-csv", help="use this input file instead of a named input")
    s.add_argument("--duration", type=_positive, default=120.0)
    s.add_argument("--rate", type=_positive, default=50.0, help="measurement rate [Hz]")
    s.add_argument("--noise", type=float, nargs=3, default=[0.01, 0.01, math.radians(1.0)],
                   metavar=("SX", "SY", "SPSI"), help="pose noise std [m, m, rad]")
    s.add_argument("--mass", type=_positive, default=TRUE_MASS)
    s.add_argument("--izz", type=_positive, default=TRUE_IZZ)
    s.add_argument("--side-length", type=_positive, default=0.1)
    s.add_argument("--friction", type=float, nargs=3, metavar=("CT", "CR", "BIAS"))
    s.add_argument("--kinematics", choices=("direct", "rotated"), default="direct")
    s.add_argument("--accel-noise", type=float, nargs=3, metavar=("QU", "QV", "QR"))
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit-thrust", help="fit a thrust curve to bench data")
    s.add_argument("bench_csv")
    s.add_argument("--order", type=int, default=3)
    s.add_argument("--nozzles", type=int, default=1)
    s.add_argument("--out", help="curve JSON path")
    s.add_argument("--compare", action="store_true", help="also compare orders 1-4")
    s.set_defaults(func=cmd_fit_thrust)

    s = sub.add_parser("sensitivity", help="parameter sensitivities and observability scores")
    s.add_argument("--input", choices=INPUT_KINDS, default="phase-sine")
    s.add_argument("--input-csv")
    s.add_argument("--duration", type=_positive, default=120.0)
    s.add_argument("--mass", type=_positive, default=TRUE_MASS)
    s.add_argument("--izz", type=_positive, default=TRUE_IZZ)
    s.add_argument("--threshold", type=_positive, default=10.0)
    s.add_argument("--out", help="sensitivity CSV path")
    s.set_defaults(func=cmd_sensitivity)

    for name, func, helptext in (("estimate-batch", cmd_estimate_batch, "iterated batch least squares"),
                                 ("estimate-ekf", cmd_estimate_ekf, "extended Kalman filter"),
                                 ("estimate-seeded", cmd_estimate_seeded, "batch-seeded EKF")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("dataset", help="dataset bundle directory")
        s.add_argument("--out", help="output directory")
        if name == "estimate-batch":
            s.add_argument("--prior-mass", type=_positive, default=NOMINAL_INITIAL_MEAN.m)
            s.add_argument("--prior-izz", type=_positive, default=NOMINAL_INITIAL_MEAN.izz)
            s.add_argument("--threshold", type=_positive, default=1e-8)
            s.add_argument("--max-iter", type=int, default=25)
        else:
            s.add_argument("--mass-psd", type=float, default=1e-4, help="mass process noise [kg^2/Hz]")
        if name == "estimate-seeded":
            s.add_argument("--seed-duration", type=_positive, default=20.0)
        s.set_defaults(func=func)

    s = sub.add_parser("montecarlo", help="Monte Carlo consistency campaign")
    s.add_argument("--config", help="campaign JSON")
    s.add_argument("--n-runs", dest="n_runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_montecarlo)

    s = sub.add_parser("swing-moi", help="yaw inertia from a bifilar swing test")
    s.add_argument("--m", type=_positive, default=0.720, help="mass [kg]")
    s.add_argument("--D", type=_positive, required=True, help="string separation [m]")
    s.add_argument("--h", type=_positive, required=True, help="string length [m]")
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--T", type=_positive, help="oscillation period [s]")
    grp.add_argument("--cycles", type=_positive, nargs="+", help="timings of repeated multi-swing runs [s]")
    s.add_argument("--cycles-per-timing", type=int, default=10)
    s.add_argument("--g", type=_positive, default=9.80665)
    s.add_argument("--m-uncertainty", type=float, default=0.0025)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_swing_moi)

    s = sub.add_parser("replicate", help="run a named reference experiment")
    s.add_argument("preset", choices=replicate.PRESETS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="also write the JSON here")
    s.set_defaults(func=cmd_replicate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (InertialIdError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
