"""Closed-form kernel-regularized estimator for scalar-on-function regression.

The model is Y = alpha + integral X(t) beta(t) dt + noise, with beta
penalized by the squared kernel norm. After centering, the minimizer lives
in the span of the polynomial null space and the kernel images of the
centered curves, so with

    Sigma_ij = <x_i - xbar, K (x_j - xbar)>   (double quadrature)
    T_ij     = <x_i - xbar, t^(j-1)>
    W        = Sigma + n lam I

the coefficients are

    d = (T' W^-1 T)^-1 T' W^-1 y_tilde
    c = W^-1 (y_tilde - T d)

and alpha = ybar - <xbar, beta>. Two routes are implemented: solve() uses a
positive definite factorization of W at one lam, and SolverWorkspace
diagonalizes Sigma once to sweep many lam values cheaply (tuning, search
profiles, simulation batches). They agree to solver tolerance and are
cross-checked in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .errors import (
    DegenerateDesignError,
    DerivativeOrderError,
    FactorizationError,
    GcvUndefinedError,
    GridMismatchError,
    LambdaSelectionError,
)
from .grid import Curve, Dataset, Grid, center_dataset
from .kernels import (
    SobolevKernel,
    _poly_eval,
    kernel_matrix,
    kernel_partial_t,
    null_space_basis,
)

CONDITION_LIMIT = 1e12
GRADIENT_TOL = 1e-8
GCV_DENOM_FLOOR = 1e-9
JITTER_SCALE = 1e-10


@dataclass(frozen=True, eq=False)
class LambdaSearch:
    """Log-spaced grid search for the regularization level.

    The grid has num_points values from lambda_min to lambda_max, equally
    spaced in log10. With refine=True the winning grid cell is polished by a
    golden-section pass on log lambda. Ties on the grid go to the larger
    lambda. The search is deterministic.
    """

    lambda_min: float = 1e-12
    lambda_max: float = 1e2
    num_points: int = 60
    refine: bool = True

    def __post_init__(self):
        if not (0 < self.lambda_min < self.lambda_max < math.inf):
            raise ValueError("need 0 < lambda_min < lambda_max < inf")
        if int(self.num_points) != self.num_points or self.num_points < 2:
            raise ValueError("num_points must be an integer >= 2")
        object.__setattr__(self, "num_points", int(self.num_points))

    def lambda_grid(self) -> np.ndarray:
        return np.logspace(
            math.log10(self.lambda_min), math.log10(self.lambda_max), self.num_points
        )


@dataclass(frozen=True, eq=False)
class FLRConfig:
    """Fit configuration: kernel order plus either a fixed lam or a search."""

    order: int = 2
    lam: float | None = None
    search: LambdaSearch | None = None

    def __post_init__(self):
        if int(self.order) != self.order or not 1 <= self.order <= 4:
            raise ValueError("order must be an integer in [1, 4]")
        object.__setattr__(self, "order", int(self.order))
        if self.lam is not None and self.search is not None:
            raise ValueError("specify either lam or search, not both")
        if self.lam is None and self.search is None:
            object.__setattr__(self, "search", LambdaSearch())
        if self.lam is not None and not (0 < self.lam < math.inf):
            raise ValueError("lam must be positive and finite")


@dataclass(frozen=True, eq=False)
class FittedFLR:
    """A fitted model. All arrays are read-only; see solve()."""

    alpha_hat: float
    d: np.ndarray
    c: np.ndarray
    lam: float
    kernel: SobolevKernel
    grid: Grid
    mean_curve: Curve
    mean_response: float
    centered_curves: np.ndarray
    representer_values: np.ndarray
    beta_values: np.ndarray
    hat_trace: float
    gcv_value: float
    grad_max: float

    def __post_init__(self):
        n = self.c.size
        for name in ("d", "c", "centered_curves", "representer_values", "beta_values"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.d.size != self.kernel.order:
            raise ValueError("d must have one entry per null space dimension")
        if self.centered_curves.shape != (n, self.grid.num_points):
            raise ValueError("centered_curves must be (n, num_points)")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not 0.0 < self.hat_trace < n:
            raise ValueError("hat_trace must lie in (0, n)")
        if not math.isfinite(self.gcv_value):
            raise ValueError("gcv_value must be finite")


def assemble_sigma(dataset: Dataset, kern: SobolevKernel) -> np.ndarray:
    """Double-quadrature kernel Gram matrix of the dataset curves.

    Entry (i, j) is sum_pq w_p w_q x_i(t_p) K(t_p, t_q) x_j(t_q). Curves are
    used as given; the solver passes centered curves. The result is made
    exactly symmetric by mirroring the upper triangle.
    """
    grid = dataset.grid
    xw = dataset.curve_matrix * grid.weights[None, :]
    kmat = kernel_matrix(kern, grid.points, grid.points)
    raw = xw @ kmat @ xw.T
    upper = np.triu(raw)
    return upper + np.triu(raw, 1).T


def assemble_t_matrix(dataset: Dataset, order: int) -> np.ndarray:
    """Quadrature moments <x_i, t^(j-1)>, shape (n, order)."""
    grid = dataset.grid
    basis = null_space_basis(order, grid)
    return (dataset.curve_matrix * grid.weights[None, :]) @ basis


def _cholesky_with_jitter(w_matrix: np.ndarray):
    """Factor W, retrying once with a scaled diagonal jitter."""
    try:
        return cho_factor(w_matrix, lower=True), w_matrix
    except LinAlgError:
        n = w_matrix.shape[0]
        jitter = JITTER_SCALE * float(np.trace(w_matrix)) / n
        bumped = w_matrix + jitter * np.eye(n)
        try:
            return cho_factor(bumped, lower=True), bumped
        except LinAlgError:
            raise FactorizationError(
                "system matrix is not positive definite even after jitter"
            )


def _argmin_last(values: np.ndarray) -> int:
    """Index of the minimum; ties resolve to the last occurrence."""
    arr = np.asarray(values)
    return int(arr.size - 1 - np.argmin(arr[::-1]))


def _check_design(n: int, order: int, design_block: np.ndarray) -> None:
    if n < order or np.linalg.cond(design_block) > CONDITION_LIMIT:
        raise DegenerateDesignError(
            "polynomial design block is rank deficient "
            f"(condition above {CONDITION_LIMIT:.0e})"
        )


def solve(dataset: Dataset, config: FLRConfig) -> FittedFLR:
    """Fit the model, tuning lam by GCV when the config carries a search."""
    kern = SobolevKernel.of_order(config.order)
    if config.search is not None:
        lam, _ = select_lambda_gcv(dataset, kern, config.search)
    else:
        lam = float(config.lam)
    return _solve_fixed(dataset, kern, lam)


def _solve_fixed(dataset: Dataset, kern: SobolevKernel, lam: float) -> FittedFLR:
    if not lam > 0:
        raise ValueError("lam must be positive")
    n = dataset.num_curves
    grid = dataset.grid
    w = grid.weights
    mean_curve, mean_response, centered = center_dataset(dataset)
    sigma = assemble_sigma(centered, kern)
    tmat = assemble_t_matrix(centered, kern.order)
    y_tilde = centered.responses

    factor, w_used = _cholesky_with_jitter(sigma + (n * lam) * np.eye(n))
    winv_t = cho_solve(factor, tmat)
    winv_y = cho_solve(factor, y_tilde)
    m_block = tmat.T @ winv_t
    _check_design(n, kern.order, m_block)
    d = np.linalg.solve(m_block, tmat.T @ winv_y)
    c = winv_y - winv_t @ d

    resid = y_tilde - tmat @ d - sigma @ c
    grad_d = (-2.0 / n) * (tmat.T @ resid)
    grad_c = (-2.0 / n) * (sigma @ resid) + 2.0 * lam * (sigma @ c)
    grad_max = float(max(np.abs(grad_d).max(), np.abs(grad_c).max()))
    grad_tol = GRADIENT_TOL * (1.0 + float(np.abs(y_tilde).max()))
    if grad_max > grad_tol:
        raise FactorizationError(
            f"solution failed the first-order optimality check "
            f"({grad_max:.3e} > {grad_tol:.3e}); the system is too ill conditioned"
        )

    trace = _hat_trace_from_factor(kern.order, sigma, factor, winv_t, m_block)
    denom = 1.0 - trace / n
    if denom < GCV_DENOM_FLOOR:
        raise GcvUndefinedError(
            "effective degrees of freedom reached n; GCV is undefined here"
        )
    gcv_value = (float(resid @ resid) / n) / denom**2

    representer = centered.curve_matrix.T @ c
    kmat = kernel_matrix(kern, grid.points, grid.points)
    basis = null_space_basis(kern.order, grid)
    beta_values = basis @ d + (kmat * w[None, :]) @ representer
    alpha_hat = mean_response - float(np.dot(w * mean_curve.values, beta_values))

    return FittedFLR(
        alpha_hat=alpha_hat,
        d=d,
        c=c,
        lam=float(lam),
        kernel=kern,
        grid=grid,
        mean_curve=mean_curve,
        mean_response=mean_response,
        centered_curves=centered.curve_matrix,
        representer_values=representer,
        beta_values=beta_values,
        hat_trace=float(trace),
        gcv_value=float(gcv_value),
        grad_max=grad_max,
    )


def _hat_trace_from_factor(order, sigma, factor, winv_t, m_block) -> float:
    # trace(H) = m + trace(Sigma W^-1) - trace(M^-1 T' W^-1 Sigma W^-1 T)
    winv_sigma_trace = float(np.trace(cho_solve(factor, sigma)))
    cross = winv_t.T @ sigma @ winv_t
    correction = float(np.trace(np.linalg.solve(m_block, cross)))
    return order + winv_sigma_trace - correction


def hat_matrix(dataset: Dataset, kern: SobolevKernel, lam: float) -> np.ndarray:
    """Explicit n x n map from centered responses to centered fitted values."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    n = dataset.num_curves
    _, _, centered = center_dataset(dataset)
    sigma = assemble_sigma(centered, kern)
    tmat = assemble_t_matrix(centered, kern.order)
    factor, _ = _cholesky_with_jitter(sigma + (n * lam) * np.eye(n))
    winv_t = cho_solve(factor, tmat)
    m_block = tmat.T @ winv_t
    _check_design(n, kern.order, m_block)
    a_block = np.linalg.solve(m_block, winv_t.T)
    winv = cho_solve(factor, np.eye(n))
    b_block = winv - winv_t @ a_block
    return tmat @ a_block + sigma @ b_block


def gcv_score(dataset: Dataset, kern: SobolevKernel, lam: float) -> float:
    """GCV on the centered system: (1/n)||r||^2 / (1 - trace(H)/n)^2."""
    n = dataset.num_curves
    _, _, centered = center_dataset(dataset)
    h = hat_matrix(dataset, kern, lam)
    y_tilde = centered.responses
    resid = y_tilde - h @ y_tilde
    trace = float(np.trace(h))
    denom = 1.0 - trace / n
    if denom < GCV_DENOM_FLOOR:
        raise GcvUndefinedError(
            "effective degrees of freedom reached n; GCV is undefined here"
        )
    return (float(resid @ resid) / n) / denom**2


class SolverWorkspace:
    """Shared precomputation for solving one dataset at many lam values.

    Diagonalizing Sigma once turns each additional lam into O(n^2) work, so
    grid searches and simulation sweeps stay cheap. Results agree with the
    factorization route in solve() to numerical tolerance.
    """

    def __init__(self, dataset: Dataset, kern: SobolevKernel):
        self.kern = kern
        self.grid = dataset.grid
        self.n = dataset.num_curves
        w = self.grid.weights
        self.mean_curve, self.mean_response, centered = center_dataset(dataset)
        self.centered_matrix = centered.curve_matrix
        self.y_tilde = centered.responses
        self.sigma = assemble_sigma(centered, kern)
        self.tmat = assemble_t_matrix(centered, kern.order)
        self.basis = null_space_basis(kern.order, self.grid)
        kmat = kernel_matrix(kern, self.grid.points, self.grid.points)
        self.kernel_weighted = kmat * w[None, :]
        # Sigma is symmetric positive semidefinite; clip the tiny negative
        # eigenvalues eigh can return so every shift stays positive.
        vals, vecs = eigh(self.sigma)
        self.spectrum = np.clip(vals, 0.0, None)
        self.modes = vecs
        self.t_in_modes = vecs.T @ self.tmat
        self.y_in_modes = vecs.T @ self.y_tilde

    def _coefficients_at(self, lam: float):
        """d, mode-basis c, hat trace, and design condition flag at one lam."""
        n = self.n
        shifted = self.spectrum + n * lam
        g = self.t_in_modes
        m_block = g.T @ (g / shifted[:, None])
        if self.n < self.kern.order or np.linalg.cond(m_block) > CONDITION_LIMIT:
            return None
        d = np.linalg.solve(m_block, g.T @ (self.y_in_modes / shifted))
        c_modes = (self.y_in_modes - g @ d) / shifted
        ratios = self.spectrum / shifted
        cross = g.T @ (g * (ratios / shifted)[:, None])
        trace = self.kern.order + float(ratios.sum())
        trace -= float(np.trace(np.linalg.solve(m_block, cross)))
        return d, c_modes, trace

    def gcv_at(self, lam: float) -> float:
        """GCV at one lam; +inf where the score or the design is unusable."""
        parts = self._coefficients_at(lam)
        if parts is None:
            return math.inf
        _, c_modes, trace = parts
        denom = 1.0 - trace / self.n
        if denom < GCV_DENOM_FLOOR:
            return math.inf
        resid_sq = (self.n * lam) ** 2 * float(c_modes @ c_modes)
        return (resid_sq / self.n) / denom**2

    def batch(self, lambdas) -> "LambdaPath":
        """Solve along a lam grid; invalid points are flagged, not raised."""
        lams = np.asarray(lambdas, dtype=float)
        if lams.ndim != 1 or lams.size == 0 or np.any(lams <= 0):
            raise ValueError("lambdas must be a 1-dimensional positive array")
        count = lams.size
        order = self.kern.order
        d_all = np.full((count, order), np.nan)
        c_modes_all = np.full((count, self.n), np.nan)
        trace_all = np.full(count, np.nan)
        gcv_all = np.full(count, math.inf)
        valid = np.zeros(count, dtype=bool)
        for i, lam in enumerate(lams):
            parts = self._coefficients_at(float(lam))
            if parts is None:
                continue
            d, c_modes, trace = parts
            valid[i] = True
            d_all[i] = d
            c_modes_all[i] = c_modes
            trace_all[i] = trace
            denom = 1.0 - trace / self.n
            if denom >= GCV_DENOM_FLOOR:
                resid_sq = (self.n * lam) ** 2 * float(c_modes @ c_modes)
                gcv_all[i] = (resid_sq / self.n) / denom**2
        c_all = np.full((count, self.n), np.nan)
        beta_all = np.full((count, self.grid.num_points), np.nan)
        if valid.any():
            rows = np.nonzero(valid)[0]
            c_all[rows] = (self.modes @ c_modes_all[rows].T).T
            representer = c_all[rows] @ self.centered_matrix
            beta_all[rows] = d_all[rows] @ self.basis.T
            beta_all[rows] += representer @ self.kernel_weighted.T
        return LambdaPath(
            lambdas=lams.copy(),
            valid=valid,
            d=d_all,
            c=c_all,
            hat_trace=trace_all,
            gcv=gcv_all,
            beta=beta_all,
        )


@dataclass(frozen=True, eq=False)
class LambdaPath:
    """Per-lam solver output from SolverWorkspace.batch.

    Rows where valid is False hold NaN coefficients and +inf GCV; a GCV
    entry can also be +inf on a valid row when its denominator vanished.
    """

    lambdas: np.ndarray
    valid: np.ndarray
    d: np.ndarray
    c: np.ndarray
    hat_trace: np.ndarray
    gcv: np.ndarray
    beta: np.ndarray


def _golden_minimize(func, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Deterministic golden-section minimizer on [lo, hi]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = func(d)
    return (a + b) / 2.0


def select_lambda_gcv(dataset: Dataset, kern: SobolevKernel, search: LambdaSearch):
    """Minimize GCV over the search grid, optionally golden-refined.

    Returns (lam_hat, profile) where profile is the ascending tuple of
    (lam, gcv) pairs over the grid, with +inf marking undefined points. Grid
    ties go to the larger lam, and a refined point only replaces the grid
    winner when its GCV is strictly smaller.
    """
    workspace = SolverWorkspace(dataset, kern)
    lams = search.lambda_grid()
    scores = np.array([workspace.gcv_at(float(lam)) for lam in lams])
    if not np.isfinite(scores).any():
        raise LambdaSelectionError("GCV is undefined on the whole search grid")
    idx = _argmin_last(scores)
    lam_hat = float(lams[idx])
    best = float(scores[idx])
    if search.refine and 0 < idx < lams.size - 1 and np.isfinite(scores[[idx - 1, idx + 1]]).all():
        log_best = _golden_minimize(
            lambda x: workspace.gcv_at(10.0**x),
            math.log10(lams[idx - 1]),
            math.log10(lams[idx + 1]),
        )
        candidate = 10.0**log_best
        if workspace.gcv_at(candidate) < best:
            lam_hat = float(candidate)
    profile = tuple((float(lam), float(score)) for lam, score in zip(lams, scores))
    return lam_hat, profile


def beta_on_grid(fit: FittedFLR) -> np.ndarray:
    """Coefficient function values on the fit grid."""
    return fit.beta_values


def evaluate_beta(fit: FittedFLR, t):
    """Coefficient function at arbitrary points of [0, 1]."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    poly = _poly_eval(tuple(fit.d), t_arr)
    kmat = kernel_matrix(fit.kernel, t_arr, fit.grid.points)
    values = poly + kmat @ (fit.grid.weights * fit.representer_values)
    if np.ndim(t) == 0:
        return float(values[0])
    return values


def evaluate_beta_derivative(fit: FittedFLR, t: float, q: int) -> float:
    """q-th derivative of the coefficient function, 1 <= q <= order - 1."""
    m = fit.kernel.order
    if int(q) != q or not 1 <= q <= m - 1:
        raise DerivativeOrderError(
            f"derivative order must be an integer in [1, {m - 1}] for kernel order {m}"
        )
    q = int(q)
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    poly = 0.0
    for power in range(q, m):
        scale = math.factorial(power) / math.factorial(power - q)
        poly += fit.d[power] * scale * t ** (power - q)
    weighted = fit.grid.weights * fit.representer_values
    kernel_part = sum(
        float(weighted[p]) * kernel_partial_t(fit.kernel, float(s_p), t, q)
        for p, s_p in enumerate(fit.grid.points)
    )
    return float(poly + kernel_part)


def predict(fit: FittedFLR, curves):
    """Predicted responses alpha + <x, beta> for new curves.

    Accepts a single Curve (returns float), a sequence of Curves, or a
    Dataset (responses ignored). Curves must live on the fit grid.
    """
    single = isinstance(curves, Curve)
    if single:
        curve_list = [curves]
    elif isinstance(curves, Dataset):
        curve_list = list(curves.curves)
    else:
        curve_list = list(curves)
    for curve in curve_list:
        if curve.grid is not fit.grid and not curve.grid.matches(fit.grid):
            raise GridMismatchError("prediction curves must live on the fit grid")
    matrix = np.vstack([curve.values for curve in curve_list])
    values = fit.alpha_hat + matrix @ (fit.grid.weights * fit.beta_values)
    if single:
        return float(values[0])
    return values
