import numpy as np
import pytest

from srmid.control import pid_design
from srmid.estimator import DisturbancePrior, FourierBasis, identify
from srmid.experiment import CampaignConfig, run_campaign
from srmid.plant import MotorGeometry, Plant, RotorDynamics, default_true_gain, study_disturbance


@pytest.fixture(scope="session")
def geometry():
    return MotorGeometry(131, 3)


@pytest.fixture(scope="session")
def truth(geometry):
    return default_true_gain(geometry, seed=0)


@pytest.fixture(scope="session")
def dynamics():
    return RotorDynamics(1.0, 1e-3)


@pytest.fixture(scope="session")
def plant(truth, dynamics):
    return Plant(truth, study_disturbance(131, 0), dynamics)


@pytest.fixture
def controller(dynamics):
    return pid_design(20.0, dynamics)


@pytest.fixture(scope="session")
def campaign(plant, dynamics):
    """Default four-experiment dataset, seed 0."""
    return run_campaign(CampaignConfig(), plant, pid_design(20.0, dynamics), seed=0)


@pytest.fixture(scope="session")
def posterior(campaign):
    return identify(campaign, FourierBasis(131, 5), DisturbancePrior())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
