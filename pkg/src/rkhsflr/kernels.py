"""Sobolev reproducing kernels assembled from Bernoulli polynomials.

The order-m kernel on [0, 1] is

    K(s, t) = B_m(s) B_m(t) / (m!)^2 + (-1)^(m-1) B_2m(|s - t|) / (2m)!

where B_j is the j-th Bernoulli polynomial. Its null space is the polynomial
span {1, t, ..., t^(m-1)}. Coefficients are generated exactly over rationals
from B_0 = 1 with the recurrence B_j' = j B_(j-1) and the zero-mean
constraint on [0, 1], then frozen to floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .errors import DerivativeOrderError
from .grid import Curve, Grid

MIN_ORDER = 1
MAX_ORDER = 4


def bernoulli_coefficient_rows(max_degree: int):
    """Exact rational coefficient rows for B_0 ... B_max_degree.

    Row j lists coefficients of B_j in ascending powers of x.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    rows = [(Fraction(1),)]
    for degree in range(1, max_degree + 1):
        previous = rows[degree - 1]
        integrated = [Fraction(0)]
        integrated += [degree * coef / (power + 1) for power, coef in enumerate(previous)]
        constant = -sum(coef / (power + 1) for power, coef in enumerate(integrated))
        integrated[0] = constant
        rows.append(tuple(integrated))
    return tuple(rows)


def _poly_eval(coefficients, x):
    """Horner evaluation of an ascending-power coefficient tuple."""
    arr = np.asarray(x, dtype=float)
    acc = np.full(arr.shape, coefficients[-1], dtype=float)
    for coef in coefficients[-2::-1]:
        acc = acc * arr + coef
    return acc


@dataclass(frozen=True, eq=False)
class BernoulliTable:
    """Float coefficient rows for B_0 ... B_max_degree, ascending powers."""

    max_degree: int
    coefficients: tuple

    @classmethod
    def build(cls, max_degree: int) -> "BernoulliTable":
        exact = bernoulli_coefficient_rows(max_degree)
        rows = tuple(tuple(float(c) for c in row) for row in exact)
        return cls(max_degree=max_degree, coefficients=rows)

    def values(self, degree: int, x):
        if not 0 <= degree <= self.max_degree:
            raise ValueError(f"degree must lie in [0, {self.max_degree}]")
        return _poly_eval(self.coefficients[degree], x)


@dataclass(frozen=True, eq=False)
class SobolevKernel:
    """Order-m Sobolev kernel with an m-dimensional polynomial null space."""

    order: int
    table: BernoulliTable

    @classmethod
    def of_order(cls, order: int) -> "SobolevKernel":
        if int(order) != order or not MIN_ORDER <= order <= MAX_ORDER:
            raise ValueError(f"kernel order must be an integer in [{MIN_ORDER}, {MAX_ORDER}]")
        order = int(order)
        return cls(order=order, table=BernoulliTable.build(2 * order))

    @property
    def null_space_dim(self) -> int:
        return self.order


def _check_unit_interval(arr: np.ndarray, name: str) -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")


def kernel_matrix(kern: SobolevKernel, s, t) -> np.ndarray:
    """Kernel values on a product of point sets, shape (len(s), len(t)).

    Symmetric in the bit-exact sense: swapping arguments transposes the
    result because every elementwise expression is itself symmetric.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    _check_unit_interval(s_arr, "s")
    _check_unit_interval(t_arr, "t")
    m = kern.order
    smooth_scale = 1.0 / float(factorial(m)) ** 2
    rough_sign = 1.0 if m % 2 == 1 else -1.0
    rough_scale = rough_sign / float(factorial(2 * m))
    bm_s = kern.table.values(m, s_arr)
    bm_t = kern.table.values(m, t_arr)
    gaps = np.abs(s_arr[:, None] - t_arr[None, :])
    rough = kern.table.values(2 * m, gaps)
    return (bm_s[:, None] * bm_t[None, :]) * smooth_scale + rough * rough_scale


def kernel_eval(kern: SobolevKernel, s: float, t: float) -> float:
    return float(kernel_matrix(kern, [s], [t])[0, 0])


def kernel_partial_t(kern: SobolevKernel, s: float, t: float, q: int) -> float:
    """q-th partial derivative of K(s, t) in the second argument.

    Supported for 0 <= q <= m - 1. Away from s = t the rough term
    differentiates to sign(t - s)^q (2m)!/(2m-q)! B_(2m-q)(|s - t|); on the
    diagonal the two one-sided limits coincide because odd-index Bernoulli
    numbers B_(2m-q)(0) vanish for odd q when q <= m - 1, so the convention
    sign = +1 at s = t returns the common limit.
    """
    m = kern.order
    if int(q) != q or q < 0 or q > m - 1:
        raise DerivativeOrderError(
            f"derivative order must be an integer in [0, {m - 1}] for kernel order {m}"
        )
    q = int(q)
    s_arr = np.asarray(float(s))
    t_arr = np.asarray(float(t))
    _check_unit_interval(np.atleast_1d(s_arr), "s")
    _check_unit_interval(np.atleast_1d(t_arr), "t")
    smooth = (
        float(kern.table.values(m, s_arr))
        * (factorial(m) / factorial(m - q))
        * float(kern.table.values(m - q, t_arr))
        / float(factorial(m)) ** 2
    )
    rough_sign = 1.0 if m % 2 == 1 else -1.0
    side = 1.0 if t >= s else -1.0
    rough = (
        rough_sign
        * side**q
        * float(kern.table.values(2 * m - q, abs(s - t)))
        / float(factorial(2 * m - q))
    )
    return smooth + rough


def kernel_apply(kern: SobolevKernel, f: Curve, t: float) -> float:
    """Quadrature image (Kf)(t) = sum_p w_p K(t, s_p) f(s_p)."""
    row = kernel_matrix(kern, [t], f.grid.points)[0]
    return float(np.dot(f.grid.weights, row * f.values))


def null_space_basis(order: int, grid: Grid) -> np.ndarray:
    """Columns t^0, ..., t^(order-1) sampled on the grid, shape (P, order)."""
    if int(order) != order or not MIN_ORDER <= order <= MAX_ORDER:
        raise ValueError(f"order must be an integer in [{MIN_ORDER}, {MAX_ORDER}]")
    return np.vander(grid.points, int(order), increasing=True).astype(float)


def sobolev_gram_matrix(kern: SobolevKernel, grid: Grid) -> np.ndarray:
    return kernel_matrix(kern, grid.points, grid.points)


def space_kernel_matrix(kern: SobolevKernel, grid: Grid) -> np.ndarray:
    """Kernel of the whole order-m space, polynomial block included.

    The penalty kernel reproduces only functions with zero derivative means;
    the m polynomial directions it leaves free are added back here as
    sum_q B_q(s) B_q(t) / (q!)^2 over q < m, the block that reproduces them
    under the derivative-mean inner product. Couple covariances against this
    matrix: a joint eigensystem built on the penalty kernel alone would
    exclude the unpenalized directions from every candidate function, which
    badly distorts the leading eigenvalues.
    """
    out = sobolev_gram_matrix(kern, grid)
    for degree in range(kern.order):
        column = kern.table.values(degree, grid.points) / float(factorial(degree))
        out = out + np.outer(column, column)
    return out


def brownian_covariance_matrix(grid: Grid) -> np.ndarray:
    """Brownian motion covariance min(s, t) on the grid."""
    return np.minimum.outer(grid.points, grid.points)


def ou_covariance_matrix(grid: Grid) -> np.ndarray:
    """Ornstein-Uhlenbeck covariance exp(-|s - t|) on the grid."""
    return np.exp(-np.abs(grid.points[:, None] - grid.points[None, :]))
