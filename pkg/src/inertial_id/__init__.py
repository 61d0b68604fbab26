"""Identify the mass and yaw inertia of a planar thruster-driven body from pose data."""

from .datasets import (
    Dataset,
    PoseLog,
    ScenarioConfig,
    SwingTestConfig,
    generate_synthetic,
    ingest_pose_log,
    load_dataset,
    period_from_cycles,
    save_dataset,
    swing_test_moi,
)
from .dynamics import (
    AugmentedState,
    FrictionModel,
    ModuleGeometry,
    Plant,
    Trajectory,
    dynamics_jacobian,
    propagate,
    propagate_stm,
    resolve_thrust,
    state_derivative,
)
from .errors import (
    InertialIdError,
    InvalidArgumentError,
    DomainError,
    ConfigurationError,
    SingularSystemError,
    UnobservableError,
    NonConvergenceError,
    NumericalFailureError,
    DivergenceError,
    ParseError,
    ValidationError,
)
from .estimators import (
    BatchResult,
    EkfConfig,
    EkfResult,
    MeasurementRecord,
    MeasurementSet,
    PriorInfo,
    batch_least_squares,
    ekf_run,
    ls_seeded_ekf,
    residual_analysis,
    rmse,
)
from .excitation import (
    observability_score,
    pd_orbit_follower,
    phase_shifted_sine,
    propagate_sensitivity,
    pure_rotation,
    pure_translation,
    translation_then_rotation,
)
from .inputs import InputSequence
from .montecarlo import McConfig, McReport, consistency_stats, run_monte_carlo
from .thrust_model import (
    ThrustCurve,
    ThrustSample,
    compare_fit_orders,
    duty_to_force,
    eval_thrust,
    fit_thrust_curve,
    preset,
)

__version__ = "0.1.0"
