import numpy as np
import pytest

from inertial_id.datasets import ScenarioConfig, generate_synthetic
from inertial_id.excitation import phase_shifted_sine


@pytest.fixture(scope="session")
def sine_30s():
    return phase_shifted_sine(duration=30.0)


@pytest.fixture(scope="session")
def sine_dataset():
    """30 s phase-shifted sine, default noise, seed 5."""
    return generate_synthetic(ScenarioConfig(duration=30.0, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
