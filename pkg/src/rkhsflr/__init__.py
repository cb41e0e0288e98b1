"""RKHS-regularized functional linear regression on a shared unit-interval grid.

The package fits the scalar-on-function model y = alpha + <x, beta> + noise
with a Sobolev RKHS roughness penalty, exposes the kernel/covariance
eigenanalysis behind its error theory, and ships a Monte Carlo benchmark
harness plus a command line front end (`rkhsflr`).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DatasetParseError,
    DegenerateDesignError,
    DerivativeOrderError,
    FactorizationError,
    GcvUndefinedError,
    GridMismatchError,
    InvalidKernelError,
    LambdaSelectionError,
    TruncationError,
)
from .estimator import (
    FLRConfig,
    FittedFLR,
    LambdaPath,
    LambdaSearch,
    SolverWorkspace,
    evaluate_beta,
    evaluate_beta_derivative,
    gcv_score,
    hat_matrix,
    predict,
    select_lambda_gcv,
    solve,
)
from .grid import (
    Curve,
    Dataset,
    Grid,
    center_dataset,
    dataset_from_matrix,
    grid_from_points,
    inner_product,
    load_dataset_csv,
    make_uniform_grid,
    save_dataset_csv,
)
from .kernels import (
    BernoulliTable,
    SobolevKernel,
    brownian_covariance_matrix,
    kernel_apply,
    kernel_eval,
    kernel_matrix,
    kernel_partial_t,
    null_space_basis,
    ou_covariance_matrix,
    sobolev_gram_matrix,
    space_kernel_matrix,
)
from .modelio import SavedModel, load_model, saved_beta_values, saved_predict, write_model
from .operators import (
    DiagonalizedPair,
    MercerSystem,
    coefficients_in_omega,
    deterministic_error,
    loglog_slope,
    mercer,
    norm_a_squared,
    simultaneous_diagonalize,
)
from .simulation import (
    RateFit,
    ReplicateBatch,
    ReplicateResult,
    SimScenario,
    TruthModel,
    beta0_on_grid,
    cosine_basis,
    estimation_error,
    fit_rate,
    prediction_error,
    run_replicates,
    simulate_dataset,
    zeta_sequence,
)

__all__ = [
    "__version__",
    "BernoulliTable",
    "ConfigError",
    "Curve",
    "Dataset",
    "DatasetParseError",
    "DegenerateDesignError",
    "DerivativeOrderError",
    "DiagonalizedPair",
    "FLRConfig",
    "FactorizationError",
    "FittedFLR",
    "GcvUndefinedError",
    "Grid",
    "GridMismatchError",
    "InvalidKernelError",
    "LambdaPath",
    "LambdaSearch",
    "LambdaSelectionError",
    "MercerSystem",
    "RateFit",
    "ReplicateBatch",
    "ReplicateResult",
    "SavedModel",
    "SimScenario",
    "SobolevKernel",
    "SolverWorkspace",
    "TruncationError",
    "TruthModel",
    "beta0_on_grid",
    "brownian_covariance_matrix",
    "center_dataset",
    "coefficients_in_omega",
    "cosine_basis",
    "dataset_from_matrix",
    "deterministic_error",
    "estimation_error",
    "evaluate_beta",
    "evaluate_beta_derivative",
    "fit_rate",
    "gcv_score",
    "grid_from_points",
    "hat_matrix",
    "inner_product",
    "kernel_apply",
    "kernel_eval",
    "kernel_matrix",
    "kernel_partial_t",
    "load_dataset_csv",
    "load_model",
    "loglog_slope",
    "make_uniform_grid",
    "mercer",
    "norm_a_squared",
    "null_space_basis",
    "ou_covariance_matrix",
    "predict",
    "prediction_error",
    "run_replicates",
    "save_dataset_csv",
    "saved_beta_values",
    "saved_predict",
    "select_lambda_gcv",
    "simulate_dataset",
    "simultaneous_diagonalize",
    "sobolev_gram_matrix",
    "space_kernel_matrix",
    "solve",
    "write_model",
    "zeta_sequence",
]
