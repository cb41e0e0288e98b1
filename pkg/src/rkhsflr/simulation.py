"""Synthetic scalar-on-function benchmark with known ground truth.

Curves are random cosine series X = sum_k zeta_k Z_k phi_k with phi_1 = 1,
phi_(k+1) = sqrt(2) cos(k pi t), and Z_k uniform on [-sqrt(3), sqrt(3)]
(unit variance), so the covariance eigenvalues are zeta_k^2. The truth is
beta_0 = sum_k b_k phi_k with b_k = 4 (-1)^(k+1) k^-decay, and responses add
centered Gaussian noise. Because the basis coefficients of the truth are
known, both the estimation error |beta_hat - beta_0|^2 and the prediction
error sum_k zeta_k^2 (beta_hat_k - b_k)^2 are computable exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDesignError,
    FactorizationError,
    GcvUndefinedError,
    LambdaSelectionError,
)
from .estimator import LambdaSearch, SolverWorkspace, _argmin_last
from .grid import Dataset, Grid, dataset_from_matrix, make_uniform_grid
from .kernels import SobolevKernel

SPACINGS = ("well", "close")
METHODS = ("gcv", "oracle_pred", "oracle_est")


@dataclass(frozen=True, eq=False)
class TruthModel:
    """Cosine-series truth with coefficients 4 (-1)^(k+1) k^-decay."""

    decay: float = 2.0
    num_terms: int = 50
    coefficients: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.decay > 0:
            raise ValueError("decay must be positive")
        if int(self.num_terms) != self.num_terms or self.num_terms < 1:
            raise ValueError("num_terms must be a positive integer")
        object.__setattr__(self, "num_terms", int(self.num_terms))
        k = np.arange(1, self.num_terms + 1, dtype=float)
        coeffs = 4.0 * (-1.0) ** (k + 1.0) * k ** (-self.decay)
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)


@dataclass(frozen=True, eq=False)
class SimScenario:
    """One benchmark cell: design spacing, decay index nu, noise, and size."""

    spacing: str
    nu: float
    sigma: float
    n: int
    num_replicates: int
    seed: int = 0
    grid_points: int = 201
    series_terms: int = 50
    truth_decay: float = 2.0
    order: int = 2
    # The bench floors its lambda grid at 1e-8, above the estimator default:
    # the GCV score has a spurious small-lambda minimum once n*lambda drops
    # into the near-null tail of Sigma's spectrum, and at small n the global
    # argmin occasionally lands there, inflating mean errors far past the
    # oracle. No sensible fit in this design wants lambda below 1e-8 (oracle
    # picks stay above it at every canonical cell). refine stays off so the
    # oracle and GCV share the same finite grid.
    search: LambdaSearch = LambdaSearch(lambda_min=1e-8, refine=False)

    def __post_init__(self):
        if self.spacing not in SPACINGS:
            raise ValueError(f"spacing must be one of {SPACINGS}")
        if not self.nu > 1:
            raise ValueError("nu must exceed 1")
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        for name, minimum in (
            ("n", 2),
            ("num_replicates", 1),
            ("seed", 0),
            ("grid_points", 2),
            ("series_terms", 1),
        ):
            value = getattr(self, name)
            if int(value) != value or value < minimum:
                raise ValueError(f"{name} must be an integer >= {minimum}")
            object.__setattr__(self, name, int(value))
        if not self.truth_decay > 0:
            raise ValueError("truth_decay must be positive")
        if int(self.order) != self.order or not 1 <= self.order <= 4:
            raise ValueError("order must be an integer in [1, 4]")

    def truth(self) -> TruthModel:
        return TruthModel(decay=self.truth_decay, num_terms=self.series_terms)


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    """Errors of one tuning method on one simulated replicate."""

    replicate_index: int
    method: str
    lam: float
    est_error: float
    pred_error: float


@dataclass(frozen=True, eq=False)
class ReplicateBatch:
    """All replicate results for a scenario plus per-replicate failures."""

    scenario: SimScenario
    results: tuple
    failures: tuple

    @property
    def num_failures(self) -> int:
        return len(self.failures)


def cosine_basis(num_terms: int, grid: Grid) -> np.ndarray:
    """Rows phi_1 = 1 and phi_(k+1) = sqrt(2) cos(k pi t), shape (K, P)."""
    if int(num_terms) != num_terms or num_terms < 1:
        raise ValueError("num_terms must be a positive integer")
    num_terms = int(num_terms)
    rows = np.empty((num_terms, grid.num_points))
    rows[0] = 1.0
    for k in range(1, num_terms):
        rows[k] = math.sqrt(2.0) * np.cos(k * math.pi * grid.points)
    return rows


def zeta_sequence(spacing: str, nu: float, num_terms: int) -> np.ndarray:
    """Curve score scales: covariance eigenvalues are zeta_k^2.

    "well" gives zeta_k = (-1)^(k+1) k^(-nu/2). "close" keeps zeta_1 = 1 and
    packs the rest into tight blocks of five: 0.2 (-1)^(k+1) (1 - 0.0001 k)
    for k in 2..4 and 0.2 (-1)^(k+1) ((5 floor(k/5))^(-nu/2) - 0.0001 (k mod
    5)) from k = 5 on.
    """
    if spacing not in SPACINGS:
        raise ValueError(f"spacing must be one of {SPACINGS}")
    if not nu > 1:
        raise ValueError("nu must exceed 1")
    if int(num_terms) != num_terms or num_terms < 1:
        raise ValueError("num_terms must be a positive integer")
    num_terms = int(num_terms)
    k = np.arange(1, num_terms + 1, dtype=float)
    signs = (-1.0) ** (k + 1.0)
    if spacing == "well":
        return signs * k ** (-nu / 2.0)
    zeta = np.empty(num_terms)
    zeta[0] = 1.0
    for idx in range(1, num_terms):
        term = idx + 1
        if term <= 4:
            zeta[idx] = 0.2 * signs[idx] * (1.0 - 0.0001 * term)
        else:
            block = 5.0 * (term // 5)
            zeta[idx] = 0.2 * signs[idx] * (block ** (-nu / 2.0) - 0.0001 * (term % 5))
    return zeta


def beta0_on_grid(truth: TruthModel, grid: Grid) -> np.ndarray:
    return truth.coefficients @ cosine_basis(truth.num_terms, grid)


def simulate_dataset(scenario: SimScenario, replicate_index: int) -> Dataset:
    """Draw one replicate's dataset.

    Substreams are derived from (seed, replicate_index) through numpy's
    SeedSequence, whose fixed hashing constants make every replicate an
    independent, order-free, reproducible stream. Scores are drawn first,
    noise second.
    """
    if int(replicate_index) != replicate_index or replicate_index < 0:
        raise ValueError("replicate_index must be a nonnegative integer")
    grid = make_uniform_grid(scenario.grid_points)
    truth = scenario.truth()
    zeta = zeta_sequence(scenario.spacing, scenario.nu, scenario.series_terms)
    basis = cosine_basis(scenario.series_terms, grid)
    rng = np.random.default_rng([scenario.seed, int(replicate_index)])
    half_width = math.sqrt(3.0)
    scores = rng.uniform(-half_width, half_width, size=(scenario.n, scenario.series_terms))
    noise = rng.normal(0.0, scenario.sigma, size=scenario.n)
    loadings = scores * zeta[None, :]
    curve_values = loadings @ basis
    responses = loadings @ truth.coefficients + noise
    return dataset_from_matrix(grid, curve_values, responses)


def estimation_error(beta_values, truth_values, grid: Grid) -> float:
    """Quadrature squared distance between an estimate and the truth."""
    diff = np.asarray(beta_values, dtype=float) - np.asarray(truth_values, dtype=float)
    return float(np.dot(grid.weights, diff**2))


def prediction_error(beta_values, grid: Grid, zeta, truth: TruthModel, basis=None) -> float:
    """Excess squared prediction risk sum_k zeta_k^2 (beta_hat_k - b_k)^2."""
    zeta_arr = np.asarray(zeta, dtype=float)
    if zeta_arr.shape != (truth.num_terms,):
        raise ValueError("zeta must have one entry per truth term")
    if basis is None:
        basis = cosine_basis(truth.num_terms, grid)
    coeffs = (basis * grid.weights[None, :]) @ np.asarray(beta_values, dtype=float)
    return float(np.sum(zeta_arr**2 * (coeffs - truth.coefficients) ** 2))


def run_replicates(scenario: SimScenario) -> ReplicateBatch:
    """Run the scenario end to end.

    Each replicate is simulated, solved across the scenario's lam grid, and
    scored three ways: the GCV pick, the lam minimizing the true prediction
    error over the same grid, and the lam minimizing the true estimation
    error. Grid ties go to the larger lam for every method. Solver failures
    are recorded per replicate without aborting the batch. Output is a pure
    function of (scenario, seed).
    """
    grid = make_uniform_grid(scenario.grid_points)
    kern = SobolevKernel.of_order(scenario.order)
    truth = scenario.truth()
    zeta = zeta_sequence(scenario.spacing, scenario.nu, scenario.series_terms)
    basis = cosine_basis(scenario.series_terms, grid)
    beta0 = truth.coefficients @ basis
    weighted_basis = basis * grid.weights[None, :]
    zeta_sq = zeta**2
    lams = scenario.search.lambda_grid()
    results = []
    failures = []
    for index in range(scenario.num_replicates):
        dataset = simulate_dataset(scenario, index)
        try:
            path = SolverWorkspace(dataset, kern).batch(lams)
            if not path.valid.any():
                raise LambdaSelectionError("no solvable point on the lam grid")
            if not np.isfinite(path.gcv).any():
                raise LambdaSelectionError("GCV is undefined on the whole lam grid")
            diffs = path.beta - beta0[None, :]
            est = diffs**2 @ grid.weights
            coeff_err = path.beta @ weighted_basis.T - truth.coefficients[None, :]
            pred = coeff_err**2 @ zeta_sq
            est = np.where(path.valid, est, math.inf)
            pred = np.where(path.valid, pred, math.inf)
            picks = (
                ("gcv", _argmin_last(path.gcv)),
                ("oracle_pred", _argmin_last(pred)),
                ("oracle_est", _argmin_last(est)),
            )
            for method, idx in picks:
                results.append(
                    ReplicateResult(
                        replicate_index=index,
                        method=method,
                        lam=float(lams[idx]),
                        est_error=float(est[idx]),
                        pred_error=float(pred[idx]),
                    )
                )
        except (
            DegenerateDesignError,
            FactorizationError,
            GcvUndefinedError,
            LambdaSelectionError,
        ) as exc:
            failures.append((index, f"{type(exc).__name__}: {exc}"))
    return ReplicateBatch(scenario=scenario, results=tuple(results), failures=tuple(failures))


@dataclass(frozen=True, eq=False)
class RateFit:
    """Least squares fit of log(mean error) against log(n)."""

    sample_sizes: tuple
    mean_errors: tuple
    slope: float
    intercept: float
    stderr: float


def fit_rate(sample_sizes, mean_errors) -> RateFit:
    """Fit the log-log convergence slope over at least three sample sizes."""
    ns = np.asarray(sample_sizes, dtype=float)
    errs = np.asarray(mean_errors, dtype=float)
    if ns.ndim != 1 or ns.shape != errs.shape:
        raise ValueError("sample_sizes and mean_errors must be 1-dimensional, equal length")
    if np.unique(ns).size < 3:
        raise ValueError("need at least three distinct sample sizes")
    if np.any(ns <= 0) or np.any(errs <= 0) or not np.isfinite(errs).all():
        raise ValueError("sample sizes and mean errors must be positive and finite")
    x = np.log(ns)
    y = np.log(errs)
    x_centered = x - x.mean()
    sxx = float(np.dot(x_centered, x_centered))
    slope = float(np.dot(x_centered, y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    dof = ns.size - 2
    variance = float(resid @ resid) / dof if dof > 0 else 0.0
    return RateFit(
        sample_sizes=tuple(float(v) for v in ns),
        mean_errors=tuple(float(v) for v in errs),
        slope=slope,
        intercept=intercept,
        stderr=math.sqrt(variance / sxx),
    )
