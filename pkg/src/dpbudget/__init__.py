"""dpbudget: zCDP privacy accounting, dynamic noise-scale budget allocation,
and a small differentially private SGD trainer."""

__version__ = "0.1.0"

from .accounting import (
    EpsDelta,
    GaussianMech,
    PrivacyLedger,
    SubsampledMech,
    amplified_strong_composition,
    basic_composition,
    budget_rho_for_dp,
    classic_gaussian_dp,
    gaussian_rho,
    rs_eps,
    rs_order_cap,
    zcdp_to_dp,
)
from .renyi import (
    divergence_changepoint,
    moments_accountant_eps,
    subsampled_renyi_divergence,
    validate_moment_bound,
)
from .schedules import (
    NoiseSchedule,
    ValidationController,
    epochs_until_exhaustion,
    sigma_at,
    solve_decay_rate,
    uniform_sigma_for_epochs,
)
from .nn import MlpModel
from .data import Dataset, load_cancer_csv, rf_batches, rs_batch, synth_blobs
from .dpsgd import TrainConfig, TrainReport, clip_gradient, noisy_mean_gradient, train
from .selection import exp_mechanism_select, partition_tune, selection_rho

__all__ = [
    "EpsDelta",
    "GaussianMech",
    "PrivacyLedger",
    "SubsampledMech",
    "amplified_strong_composition",
    "basic_composition",
    "budget_rho_for_dp",
    "classic_gaussian_dp",
    "gaussian_rho",
    "rs_eps",
    "rs_order_cap",
    "zcdp_to_dp",
    "divergence_changepoint",
    "moments_accountant_eps",
    "subsampled_renyi_divergence",
    "validate_moment_bound",
    "NoiseSchedule",
    "ValidationController",
    "epochs_until_exhaustion",
    "sigma_at",
    "solve_decay_rate",
    "uniform_sigma_for_epochs",
    "MlpModel",
    "Dataset",
    "load_cancer_csv",
    "rf_batches",
    "rs_batch",
    "synth_blobs",
    "TrainConfig",
    "TrainReport",
    "clip_gradient",
    "noisy_mean_gradient",
    "train",
    "exp_mechanism_select",
    "partition_tune",
    "selection_rho",
]
