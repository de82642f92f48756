"""Differentially private federated learning with secure aggregation.

A single-process simulator and library: noisy local SGD with per-example
clipping, pairwise-mask secure aggregation, a zCDP privacy accountant with
(epsilon, delta) conversion and noise calibration, FedAvg and one-step DP-SGD
baselines, and calculators for the scheme's convergence bounds.
"""

from .accounting import (
    DpGuarantee,
    PrivacyParams,
    ZcdpBudget,
    calibrate_sigma,
    compose,
    dpsgd_calibrate_sigma,
    dpsgd_epsilon,
    expected_participation,
    gaussian_rho,
    gradient_sensitivity,
    local_model_sensitivity,
    round_rho_closed_form,
    round_rho_per_device,
    total_epsilon,
    zcdp_to_dp,
)
from .bounds import BoundInputs, bound_convex, bound_nonconvex, lr_condition
from .data import DatasetSpec, EncodedDataset, load_adult, partition, synthetic
from .errors import DivergedRunError, ParseError, ProtocolError
from .experiments import ExperimentConfig, run_experiment
from .models import Example, ModelParams, accuracy, clip, gradient, loss
from .orchestrator import RoundRecord, RunResult, TrainConfig, run_training
from .secagg import FixedPointCodec, MaskedVector, SeedTable, compute_mask, init_seeds, prf_stream

__version__ = "0.1.0"
