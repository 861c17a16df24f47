"""Torque-current-angle identification for switched reluctance motors.

Closed-loop experiments with deliberately imperfect commutation expose the
motor gain; Bayesian linear regression turns the recorded currents into a
Fourier model of the gain, from which an inverting commutation is designed.
"""
from .commutation import (CommutationFunction, InfeasibleCommutationError, SaturationLimits,
                          TorqueSharingFunction, design_commutation, imperfect_commutation)
from .control import PidController, RampReference, pid_design, simulate_closed_loop
from .estimator import (DisturbancePrior, FourierBasis, PosteriorModel, SingularSystemError,
                        excitation_rank, identify, posterior)
from .experiment import CampaignConfig, CampaignError, ExperimentDataset, run_campaign
from .plant import (DisturbanceModel, MotorGeometry, Plant, RotorDynamics, TorqueGainModel,
                    default_true_gain)

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig", "CampaignError", "CommutationFunction", "DisturbanceModel",
    "DisturbancePrior", "ExperimentDataset", "FourierBasis", "InfeasibleCommutationError",
    "MotorGeometry", "PidController", "Plant", "PosteriorModel", "RampReference",
    "RotorDynamics", "SaturationLimits", "SingularSystemError", "TorqueGainModel",
    "TorqueSharingFunction", "default_true_gain", "design_commutation", "excitation_rank",
    "identify", "imperfect_commutation", "pid_design", "posterior", "run_campaign",
    "simulate_closed_loop",
]
