import filecmp
import math
import warnings
from pathlib import Path

import numpy as np
import pytest

from inertial_id.datasets import (
    PoseFormat,
    ScenarioConfig,
    SwingTestConfig,
    dataset_from_pose_log,
    generate_synthetic,
    ingest_pose_log,
    load_dataset,
    period_from_cycles,
    pseudo_experimental_scenario,
    save_dataset,
    swing_test_moi,
    swing_test_moi_uncertainty,
    write_pose_log,
)
from inertial_id.dynamics import Plant
from inertial_id.errors import ConfigurationError, InvalidArgumentError, ParseError, ValidationError
from inertial_id.estimators import PriorInfo, batch_least_squares
from inertial_id.thrust_model import preset

DATA = Path(__file__).parent / "data"
BUNDLE_FILES = ("measurements.csv", "input.csv", "truth.csv", "dataset.json")


def _same_files(a, b, names=BUNDLE_FILES):
    return all(filecmp.cmp(Path(a) / n, Path(b) / n, shallow=False) for n in names)


# ---------------------------------------------------------------------------
# synthesis


def test_zero_noise_measurements_equal_truth():
    ds = generate_synthetic(ScenarioConfig(duration=10.0, noise_std=(0, 0, 0)))
    np.testing.assert_array_equal(ds.measurements.z, ds.truth.states[:, :3])


def test_default_noise_statistics():
    ds = generate_synthetic(ScenarioConfig(seed=3))
    assert len(ds.measurements) == 6001
    err = ds.measurements.z - ds.truth.states[:, :3]
    np.testing.assert_allclose(err.std(axis=0), [0.01, 0.01, math.radians(1.0)], rtol=0.05)


def test_rate_sets_sample_count():
    ds = generate_synthetic(ScenarioConfig(duration=14.0, rate_hz=120.0, input="translation-rotation"))
    assert len(ds.measurements) == 1681
    np.testing.assert_allclose(np.diff(ds.measurements.times), 1 / 120.0, rtol=1e-9)


def test_same_seed_same_bytes(tmp_path):
    sc = ScenarioConfig(duration=20.0, seed=8)
    generate_synthetic(sc, tmp_path / "a")
    generate_synthetic(sc, tmp_path / "b")
    assert _same_files(tmp_path / "a", tmp_path / "b")
    generate_synthetic(ScenarioConfig(duration=20.0, seed=9), tmp_path / "c")
    assert not filecmp.cmp(tmp_path / "a" / "measurements.csv", tmp_path / "c" / "measurements.csv",
                           shallow=False)


def test_round_trip_is_byte_identical(tmp_path):
    ds = generate_synthetic(ScenarioConfig(duration=20.0, seed=2), tmp_path / "first")
    back = load_dataset(tmp_path / "first")
    save_dataset(back, tmp_path / "second")
    assert _same_files(tmp_path / "first", tmp_path / "second")
    np.testing.assert_array_equal(back.measurements.times, ds.measurements.times)
    np.testing.assert_array_equal(back.measurements.z, ds.measurements.z)
    np.testing.assert_array_equal(back.truth.states, ds.truth.states)
    np.testing.assert_array_equal(back.input.commands, ds.input.commands)
    assert back.true_params == ds.true_params
    assert back.measurements.records()[5].z == ds.measurements.records()[5].z


def test_round_trip_keeps_friction_and_curves(tmp_path):
    sc = pseudo_experimental_scenario()
    ds = generate_synthetic(sc)
    ds.plant = Plant(ds.plant.geometry, ds.plant.friction, "rotated", preset())
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.plant.friction == sc.friction
    assert back.plant.kinematics == "rotated"
    assert back.plant.curves[3].coefficients == preset()[3].coefficients


def test_headers_declare_units(tmp_path):
    generate_synthetic(ScenarioConfig(duration=5.0), tmp_path)
    assert (tmp_path / "measurements.csv").read_text().splitlines()[0] == "time_s,x_m,y_m,psi_rad"
    assert (tmp_path / "truth.csv").read_text().splitlines()[0].endswith("m_kg,izz_kgm2")


def test_load_dataset_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path)
    generate_synthetic(ScenarioConfig(duration=5.0), tmp_path)
    path = tmp_path / "measurements.csv"
    lines = path.read_text().splitlines()
    lines[4] = "0.06,abc,0.0,0.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="line 5"):
        load_dataset(tmp_path)


def test_scenario_validation():
    with pytest.raises(InvalidArgumentError):
        ScenarioConfig(noise_std=(-1, 0, 0))
    with pytest.raises(InvalidArgumentError):
        ScenarioConfig(rate_hz=0)
    with pytest.raises(ConfigurationError):
        ScenarioConfig(input="chirp")


def test_heading_not_wrapped():
    ds = generate_synthetic(ScenarioConfig(input="rotation", duration=60.0, noise_std=(0, 0, 0)))
    assert np.ptp(ds.measurements.z[:, 2]) > 0
    np.testing.assert_array_equal(ds.measurements.z[:, 2], ds.truth.states[:, 2])


# ---------------------------------------------------------------------------
# pseudo-experimental regression bundle


def test_pseudo_experimental_bundle_regenerates(tmp_path):
    generate_synthetic(pseudo_experimental_scenario(), tmp_path)
    assert _same_files(tmp_path, DATA / "pseudo_experimental")


def test_pseudo_experimental_friction_replay():
    ds = load_dataset(DATA / "pseudo_experimental")
    assert ds.plant.friction.enabled
    m, izz = ds.true_params
    aware = batch_least_squares(ds.measurements, ds.input, PriorInfo.nominal(), plant=ds.plant)
    blind = batch_least_squares(ds.measurements, ds.input, PriorInfo.nominal(), plant=Plant())
    # regression values for this bundle
    assert aware.x0_hat.m == pytest.approx(2.243699789272277, rel=1e-6)
    assert aware.x0_hat.izz == pytest.approx(0.003780663764890365, rel=1e-6)
    assert abs(aware.x0_hat.m - m) < 3 * aware.sigma[6]
    assert abs(aware.x0_hat.izz - izz) < 3 * aware.sigma[7]
    # leaving the friction out of the model wrecks the inertia estimate
    assert abs(blind.x0_hat.izz - izz) > 10 * abs(aware.x0_hat.izz - izz)


# ---------------------------------------------------------------------------
# pose logs


def _write(path, text):
    path.write_text(text)
    return path


def test_ingest_three_rows(tmp_path):
    p = _write(tmp_path / "log.csv", "time_s,x_m,y_m,psi,unit_psi\n0.0,0,0,0,rad\n0.5,1,0,0.1,rad\n1.0,2,0,0.2,rad\n")
    log = ingest_pose_log(p, rate_hz=2.0)
    assert len(log) == 3 and len(log.records()) == 3
    assert log.records()[1].z == (1.0, 0.0, 0.1)


def test_ingest_degrees(tmp_path):
    p = _write(tmp_path / "log.csv", "time_s,x_m,y_m,psi,unit_psi\n0.0,0,0,90,deg\n1.0,0,0,90,deg\n")
    log = ingest_pose_log(p, rate_hz=1.0)
    assert log.poses[0, 2] == pytest.approx(math.pi / 2)


def test_ingest_unwraps_heading(tmp_path):
    t = np.arange(0, 2, 1 / 120)
    psi = np.mod(3.0 * t + math.pi, 2 * math.pi) - math.pi
    write_pose_log(tmp_path / "log.csv", t, np.column_stack([t, t, psi]))
    log = ingest_pose_log(tmp_path / "log.csv")
    np.testing.assert_allclose(log.poses[:, 2], 3.0 * t, atol=1e-12)


def test_fourteen_seconds_at_120_hz(tmp_path):
    t = np.arange(0, 14, 1 / 120)
    write_pose_log(tmp_path / "log.csv", t, np.zeros((t.size, 3)), unit="deg")
    log = ingest_pose_log(tmp_path / "log.csv")
    assert abs(len(log) - 1680) <= 1
    assert log.rate_hz == 120.0


@pytest.mark.parametrize("rows, error", [
    ("0.0,0,0,0,rad\n0.0,0,0,0,rad\n", ValidationError),
    ("0.0,0,0,0,rad\n1.0,0,0,0,rad\n0.5,0,0,0,rad\n", ValidationError),
    ("0.0,0,0,0,rad\n1.0,zero,0,0,rad\n", ParseError),
    ("0.0,0,0,0,rad\n1.0,0,0,0,grad\n", ParseError),
    ("0.0,0,0,0\n", ParseError),
])
def test_ingest_rejects_bad_logs(tmp_path, rows, error):
    p = _write(tmp_path / "log.csv", "time_s,x_m,y_m,psi,unit_psi\n" + rows)
    with pytest.raises(error):
        ingest_pose_log(p, rate_hz=None)


def test_parse_error_has_line_number(tmp_path):
    p = _write(tmp_path / "log.csv", "time_s,x_m,y_m,psi,unit_psi\n0.0,0,0,0,rad\n1.0,0,0,x,rad\n")
    with pytest.raises(ParseError, match="line 3"):
        ingest_pose_log(p, rate_hz=1.0)


def test_rate_mismatch(tmp_path):
    t = np.arange(0, 1, 1 / 100)
    write_pose_log(tmp_path / "log.csv", t, np.zeros((t.size, 3)))
    with pytest.raises(ValidationError):
        ingest_pose_log(tmp_path / "log.csv", rate_hz=120.0)
    assert ingest_pose_log(tmp_path / "log.csv", rate_hz=95.0).rate_hz == 95.0


def test_gap_is_a_warning(tmp_path):
    t = np.concatenate([np.arange(0, 1, 0.01), np.arange(1.2, 2, 0.01)])
    write_pose_log(tmp_path / "log.csv", t, np.zeros((t.size, 3)))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        log = ingest_pose_log(tmp_path / "log.csv", rate_hz=100.0)
    assert len(log.warnings) == 1 and len(caught) == 1


def test_custom_column_mapping(tmp_path):
    p = _write(tmp_path / "vicon.csv", "Frame,TX,TY,RZ\n0,0,1000,0\n10,0,2000,180\n")
    fmt = PoseFormat(time="Frame", x="TX", y="TY", psi="RZ", unit=None, default_unit="deg", time_scale=0.001,
                     length_scale=0.001)
    log = ingest_pose_log(p, fmt, rate_hz=100.0)
    np.testing.assert_allclose(log.poses, [[0, 1, 0], [0, 2, math.pi]])
    ds = dataset_from_pose_log(log, None, true_params=(0.72, 1e-3))
    assert ds.truth is None and ds.truth_ref == (0.72, 1e-3)


# ---------------------------------------------------------------------------
# swing test


def test_swing_moi_hand_value():
    val = swing_test_moi(SwingTestConfig(d_sep=0.1, h=0.5, period_T=1.0, m=0.720))
    assert val == pytest.approx(0.720 * 9.80665 * 0.01 / (16 * math.pi**2 * 0.5), rel=1e-14)
    assert val == pytest.approx(8.944e-4, rel=5e-4)


def test_swing_moi_quadratic_in_separation():
    a = swing_test_moi(SwingTestConfig(d_sep=0.1, h=0.5, period_T=1.3))
    b = swing_test_moi(SwingTestConfig(d_sep=0.2, h=0.5, period_T=1.3))
    assert b == pytest.approx(4 * a, rel=1e-14)


def test_swing_defaults_and_uncertainty():
    cfg = SwingTestConfig(d_sep=0.1, h=0.5, period_T=1.0)
    assert cfg.m == 0.720 and cfg.m_uncertainty == 0.0025
    assert swing_test_moi_uncertainty(cfg) == pytest.approx(swing_test_moi(cfg) * 0.0025 / 0.720)


@pytest.mark.parametrize("kw", [dict(d_sep=0), dict(h=-1), dict(period_T=0), dict(m=0)])
def test_swing_config_rejects_non_positive(kw):
    base = dict(d_sep=0.1, h=0.5, period_T=1.0)
    base.update(kw)
    with pytest.raises(InvalidArgumentError):
        SwingTestConfig(**base)


def test_period_from_ten_timings():
    timings = [10.1, 9.9, 10.0, 10.2, 9.8, 10.0, 10.05, 9.95, 10.0, 10.0]
    assert period_from_cycles(timings) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        period_from_cycles([])
