"""Quadrature grids, sampled curves, and scalar-on-function datasets.

Every integral downstream means a composite trapezoid sum over a shared grid
on [0, 1]. Containers are immutable: arrays are copied on construction and
frozen, so instances are safe to share across threads and cache freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatasetParseError, GridMismatchError
from .fsio import atomic_write_text

WEIGHT_SUM_TOL = 1e-12


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing quadrature points on [0, 1] with positive weights.

    Weights must sum to the domain length 1 within 1e-12. Use
    make_uniform_grid or grid_from_points instead of constructing directly.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = _readonly(self.points)
        weights = _readonly(self.weights)
        if points.ndim != 1 or weights.ndim != 1:
            raise ValueError("grid points and weights must be 1-dimensional")
        if points.size != weights.size:
            raise ValueError("grid points and weights must have equal length")
        if points.size < 2:
            raise ValueError("a grid needs at least two points")
        if not np.isfinite(points).all() or not np.isfinite(weights).all():
            raise ValueError("grid points and weights must be finite")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if points[0] != 0.0 or points[-1] != 1.0:
            raise ValueError("grid must start at 0.0 and end at 1.0")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(float(weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("quadrature weights must sum to 1 within 1e-12")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def num_points(self) -> int:
        return int(self.points.size)

    def matches(self, other: "Grid") -> bool:
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )


def make_uniform_grid(num_points: int) -> Grid:
    """Uniform grid with composite trapezoid weights h*(1/2, 1, ..., 1, 1/2)."""
    if int(num_points) != num_points or num_points < 2:
        raise ValueError("num_points must be an integer >= 2")
    num_points = int(num_points)
    points = np.linspace(0.0, 1.0, num_points)
    h = 1.0 / (num_points - 1)
    weights = np.full(num_points, h)
    weights[0] = h / 2.0
    weights[-1] = h / 2.0
    return Grid(points, weights)


def grid_from_points(points) -> Grid:
    """Grid over arbitrary strictly increasing points, trapezoid weights."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 2:
        raise ValueError("need at least two 1-dimensional grid points")
    gaps = np.diff(pts)
    weights = np.empty(pts.size)
    weights[0] = gaps[0] / 2.0
    weights[-1] = gaps[-1] / 2.0
    weights[1:-1] = (gaps[:-1] + gaps[1:]) / 2.0
    return Grid(pts, weights)


@dataclass(frozen=True, eq=False)
class Curve:
    """A function sampled on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 1:
            raise ValueError("curve values must be 1-dimensional")
        if values.size != self.grid.num_points:
            raise ValueError("curve values must match the grid length")
        if not np.isfinite(values).all():
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class Dataset:
    """n curves on one shared grid plus n scalar responses."""

    grid: Grid
    curves: tuple
    responses: np.ndarray

    def __post_init__(self):
        curves = tuple(self.curves)
        if len(curves) < 1:
            raise ValueError("a dataset needs at least one curve")
        responses = _readonly(self.responses)
        if responses.ndim != 1 or responses.size != len(curves):
            raise ValueError("responses must be 1-dimensional with one entry per curve")
        if not np.isfinite(responses).all():
            raise ValueError("responses must be finite")
        for curve in curves:
            if curve.grid is not self.grid and not curve.grid.matches(self.grid):
                raise GridMismatchError("all curves must share the dataset grid")
        matrix = _readonly(np.vstack([curve.values for curve in curves]))
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "_matrix", matrix)

    @property
    def num_curves(self) -> int:
        return len(self.curves)

    @property
    def curve_matrix(self) -> np.ndarray:
        """Read-only (n, num_points) matrix with one curve per row."""
        return self._matrix


def dataset_from_matrix(grid: Grid, matrix, responses) -> Dataset:
    """Build a Dataset from an (n, num_points) value matrix."""
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2:
        raise ValueError("matrix must be 2-dimensional")
    curves = tuple(Curve(grid, row) for row in arr)
    return Dataset(grid, curves, responses)


def inner_product(f: Curve, g: Curve) -> float:
    """Quadrature inner product sum_p w_p f(t_p) g(t_p)."""
    if f.grid is not g.grid and not f.grid.matches(g.grid):
        raise GridMismatchError("inner product requires curves on the same grid")
    return float(np.dot(f.grid.weights, f.values * g.values))


def center_dataset(dataset: Dataset):
    """Split a dataset into (mean curve, mean response, centered dataset)."""
    mean_values = dataset.curve_matrix.mean(axis=0)
    mean_response = float(dataset.responses.mean())
    centered = dataset_from_matrix(
        dataset.grid,
        dataset.curve_matrix - mean_values[None, :],
        dataset.responses - mean_response,
    )
    return Curve(dataset.grid, mean_values), mean_response, centered


def _fmt(value: float) -> str:
    # repr round-trips float64 exactly, which carries the byte-identical
    # reload guarantee for saved files.
    return repr(float(value))


def save_dataset_csv(dataset: Dataset, path: str) -> None:
    """Write the dataset layout: header `t,<t_1>,...` then rows `y_i,<x_i>,...`."""
    lines = ["t," + ",".join(_fmt(p) for p in dataset.grid.points)]
    for curve, y in zip(dataset.curves, dataset.responses):
        lines.append(_fmt(y) + "," + ",".join(_fmt(v) for v in curve.values))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_cell(cell: str, row: int, column: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DatasetParseError(f"cell {cell!r} is not a number", row=row, column=column)
    if not np.isfinite(value):
        raise DatasetParseError(f"cell {cell!r} is not finite", row=row, column=column)
    return value


def load_dataset_csv(path: str) -> Dataset:
    """Parse the dataset layout written by save_dataset_csv.

    Raises DatasetParseError with a 1-based row and column for ragged rows,
    non numeric cells, and grid headers that are not strictly increasing
    from 0 to 1. Blank lines are ignored.
    """
    with open(path, "r", encoding="utf-8") as handle:
        raw_lines = handle.read().splitlines()
    rows = [
        (line_no, line.split(","))
        for line_no, line in enumerate(raw_lines, start=1)
        if line.strip() != ""
    ]
    if not rows:
        raise DatasetParseError("file is empty", row=1)
    header_no, header = rows[0]
    if header[0].strip() != "t":
        raise DatasetParseError(
            f"header must start with 't', got {header[0]!r}", row=header_no, column=1
        )
    if len(header) < 3:
        raise DatasetParseError("grid header needs at least two points", row=header_no)
    points = np.array(
        [_parse_cell(cell, header_no, col) for col, cell in enumerate(header[1:], start=2)]
    )
    for col in range(1, points.size):
        if points[col] <= points[col - 1]:
            raise DatasetParseError(
                "grid header must be strictly increasing", row=header_no, column=col + 2
            )
    if points[0] != 0.0:
        raise DatasetParseError("grid must start at 0.0", row=header_no, column=2)
    if points[-1] != 1.0:
        raise DatasetParseError(
            "grid must end at 1.0", row=header_no, column=points.size + 1
        )
    grid = grid_from_points(points)

    if len(rows) == 1:
        raise DatasetParseError("no curve rows after the header", row=header_no)
    responses = []
    values = []
    expected = points.size + 1
    for line_no, cells in rows[1:]:
        if len(cells) != expected:
            raise DatasetParseError(
                f"row has {len(cells)} cells, expected {expected}",
                row=line_no,
                column=min(len(cells), expected) + (0 if len(cells) >= expected else 1),
            )
        parsed = [_parse_cell(cell, line_no, col) for col, cell in enumerate(cells, start=1)]
        responses.append(parsed[0])
        values.append(parsed[1:])
    return dataset_from_matrix(grid, np.array(values), np.array(responses))
