"""Spectral tools: quadrature eigensystems and simultaneous diagonalization.

mercer() turns a kernel matrix on a grid into an orthonormal eigensystem by
symmetrizing with the square roots of the quadrature weights. With a
reproducing kernel system (eigenvalues rho, eigenfunctions psi) and a second
covariance matrix C, simultaneous_diagonalize() produces the coupled basis:
gamma_k are the eigenvalues of diag(sqrt(rho)) Ctilde diag(sqrt(rho)) with
Ctilde_jk = <C psi_j, psi_k>, the omega_k are rescaled so <C omega_k,
omega_k> = 1, and nu_k = gamma_k / (1 + gamma_k). In this basis the squared
a-norm of a function with coefficients f_k = <C f, omega_k> is
sum_k (1 + gamma_k^-a) f_k^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import InvalidKernelError, TruncationError
from .grid import Grid

SYMMETRY_TOL = 1e-12
EIGENVALUE_CLIP_RATIO = 1e-12
SIGN_EPS = 1e-8


def _check_square_symmetric(matrix: np.ndarray, grid: Grid, name: str) -> np.ndarray:
    arr = np.asarray(matrix, dtype=float)
    p = grid.num_points
    if arr.shape != (p, p):
        raise InvalidKernelError(f"{name} must be {p} x {p} to match the grid")
    if not np.isfinite(arr).all():
        raise InvalidKernelError(f"{name} must be finite")
    if np.abs(arr - arr.T).max() > SYMMETRY_TOL:
        raise InvalidKernelError(f"{name} must be symmetric within {SYMMETRY_TOL}")
    return arr


def _fix_signs(columns: np.ndarray) -> np.ndarray:
    # Deterministic orientation: the first coordinate with magnitude above
    # SIGN_EPS is made positive. Columns below the threshold everywhere are
    # left alone (they correspond to clipped eigenvalues).
    out = columns.copy()
    for k in range(out.shape[1]):
        column = out[:, k]
        big = np.nonzero(np.abs(column) > SIGN_EPS)[0]
        if big.size and column[big[0]] < 0:
            out[:, k] = -column
    return out


@dataclass(frozen=True, eq=False)
class MercerSystem:
    """Leading eigenpairs of a kernel matrix under the grid inner product.

    eigenvalues is descending with entries below EIGENVALUE_CLIP_RATIO times
    the largest clipped to zero; eigenfunctions has one column per term and
    is orthonormal in the quadrature inner product.
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray

    def __post_init__(self):
        vals = np.array(self.eigenvalues, dtype=float)
        funcs = np.array(self.eigenfunctions, dtype=float)
        vals.flags.writeable = False
        funcs.flags.writeable = False
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenfunctions", funcs)

    @property
    def num_terms(self) -> int:
        return int(self.eigenvalues.size)


def mercer(kernel_matrix: np.ndarray, grid: Grid, num_terms: int) -> MercerSystem:
    """Leading num_terms eigenpairs of a symmetric kernel matrix on a grid.

    Solves the weight-symmetrized problem: with D = diag(sqrt(w)), the
    symmetric eigenvectors u of D K D give eigenfunctions u / sqrt(w), which
    are orthonormal under sum_p w_p f_p g_p.
    """
    arr = _check_square_symmetric(kernel_matrix, grid, "kernel matrix")
    p = grid.num_points
    if int(num_terms) != num_terms or not 1 <= num_terms <= p:
        raise ValueError(f"num_terms must be an integer in [1, {p}]")
    num_terms = int(num_terms)
    sqrt_w = np.sqrt(grid.weights)
    sym = sqrt_w[:, None] * arr * sqrt_w[None, :]
    sym = (sym + sym.T) / 2.0
    vals, vecs = eigh(sym)
    order = np.argsort(vals)[::-1][:num_terms]
    vals = vals[order]
    vecs = vecs[:, order]
    top = vals.max() if vals.size else 0.0
    if top > 0:
        vals = np.where(vals < EIGENVALUE_CLIP_RATIO * top, 0.0, vals)
    else:
        vals = np.zeros_like(vals)
    functions = _fix_signs(vecs / sqrt_w[:, None])
    return MercerSystem(grid=grid, eigenvalues=vals, eigenfunctions=functions)


@dataclass(frozen=True, eq=False)
class DiagonalizedPair:
    """Simultaneous diagonalization of a kernel system and a covariance.

    gamma is strictly positive descending; nu_k = gamma_k / (1 + gamma_k)
    lies in (0, 1). omega_values holds the omega_k on the grid (one column
    per term), normalized to <C omega_k, omega_k> = 1; omega_in_psi holds
    their coefficients in the kernel eigenfunction basis; rho is the kernel
    eigenvalue truncation that was used.
    """

    grid: Grid
    gamma: np.ndarray
    nu: np.ndarray
    omega_values: np.ndarray
    omega_in_psi: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        for name in ("gamma", "nu", "omega_values", "omega_in_psi", "rho"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_terms(self) -> int:
        return int(self.gamma.size)


def simultaneous_diagonalize(
    system: MercerSystem, covariance: np.ndarray, num_terms: int
) -> DiagonalizedPair:
    """Couple a kernel eigensystem with a covariance matrix on the same grid."""
    grid = system.grid
    cov = _check_square_symmetric(covariance, grid, "covariance matrix")
    if int(num_terms) != num_terms or not 1 <= num_terms <= system.num_terms:
        raise ValueError(
            f"num_terms must be an integer in [1, {system.num_terms}]"
        )
    num_terms = int(num_terms)
    rho = system.eigenvalues[:num_terms].copy()
    if np.any(rho <= 0):
        raise TruncationError(
            "kernel eigenvalue truncation contains nonpositive entries; "
            "reduce num_terms"
        )
    psi = system.eigenfunctions[:, :num_terms]
    w = grid.weights
    weighted_cov = w[:, None] * cov * w[None, :]
    ctilde = psi.T @ weighted_cov @ psi
    ctilde = (ctilde + ctilde.T) / 2.0
    sqrt_rho = np.sqrt(rho)
    coupled = sqrt_rho[:, None] * ctilde * sqrt_rho[None, :]
    coupled = (coupled + coupled.T) / 2.0
    gamma, vectors = eigh(coupled)
    order = np.argsort(gamma)[::-1]
    gamma = gamma[order]
    vectors = vectors[:, order]
    if np.any(gamma <= 0):
        raise TruncationError(
            "covariance is not positive definite on the truncated kernel span; "
            "reduce num_terms"
        )
    # v_k = diag(sqrt(rho)) u_k / sqrt(gamma_k) gives <C omega_j, omega_k> =
    # delta_jk and penalty form J(omega_j, omega_k) = delta_jk / gamma_k.
    coeffs = sqrt_rho[:, None] * vectors / np.sqrt(gamma)[None, :]
    coeffs = _fix_signs(coeffs)
    omega = psi @ coeffs
    nu = gamma / (1.0 + gamma)
    return DiagonalizedPair(
        grid=grid,
        gamma=gamma,
        nu=nu,
        omega_values=omega,
        omega_in_psi=coeffs,
        rho=rho,
    )


def coefficients_in_omega(
    pair: DiagonalizedPair, covariance: np.ndarray, values
) -> np.ndarray:
    """Coefficients f_k = <C f, omega_k> of a grid function by quadrature."""
    cov = _check_square_symmetric(covariance, pair.grid, "covariance matrix")
    f = np.asarray(values, dtype=float)
    if f.shape != (pair.grid.num_points,):
        raise ValueError("values must be sampled on the pair's grid")
    w = pair.grid.weights
    image = cov @ (w * f)
    return pair.omega_values.T @ (w * image)


def _check_gamma_coeffs(gamma, coefficients):
    g = np.asarray(gamma, dtype=float)
    f = np.asarray(coefficients, dtype=float)
    if g.ndim != 1 or f.shape != g.shape:
        raise ValueError("gamma and coefficients must be 1-dimensional, equal length")
    if np.any(g <= 0) or not np.isfinite(g).all():
        raise ValueError("gamma entries must be positive and finite")
    if not np.isfinite(f).all():
        raise ValueError("coefficients must be finite")
    return g, f


def norm_a_squared(gamma, coefficients, a: float) -> float:
    """Squared interpolation norm sum_k (1 + gamma_k^-a) f_k^2, a in [0, 1]."""
    g, f = _check_gamma_coeffs(gamma, coefficients)
    if not 0.0 <= a <= 1.0:
        raise ValueError("a must lie in [0, 1]")
    return float(np.sum((1.0 + g ** (-a)) * f**2))


def deterministic_error(gamma, coefficients, lam: float, a: float) -> float:
    """Squared a-norm bias of shrinking coefficients by 1 / (1 + lam/gamma_k).

    Exact finite sum: sum_k (1 + gamma_k^-a) (lam/gamma_k / (1 +
    lam/gamma_k))^2 f_k^2.
    """
    g, f = _check_gamma_coeffs(gamma, coefficients)
    if not 0.0 <= a <= 1.0:
        raise ValueError("a must lie in [0, 1]")
    if not lam > 0:
        raise ValueError("lam must be positive")
    shrink = (lam / g) / (1.0 + lam / g)
    return float(np.sum((1.0 + g ** (-a)) * shrink**2 * f**2))


def loglog_slope(values, first_index: int, last_index: int) -> float:
    """Least squares slope of log(values_k) against log(k).

    Indices are 1-based and inclusive, so first_index=5, last_index=30 fits
    over k = 5..30. Values in the window must be strictly positive.
    """
    arr = np.asarray(values, dtype=float)
    if not 1 <= first_index < last_index <= arr.size:
        raise ValueError("need 1 <= first_index < last_index <= len(values)")
    window = arr[first_index - 1 : last_index]
    if np.any(window <= 0):
        raise ValueError("values in the window must be positive")
    x = np.log(np.arange(first_index, last_index + 1, dtype=float))
    y = np.log(window)
    x_centered = x - x.mean()
    return float(np.dot(x_centered, y - y.mean()) / np.dot(x_centered, x_centered))
