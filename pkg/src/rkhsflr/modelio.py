"""Model serialization: fitted models as self-contained JSON documents.

The file keeps the closed-form coefficients (alpha_hat, d, c), the grid and
mean curve needed for centering, and the combined representer curve sum_i
c_i (x_i - xbar) sampled on the grid. The representer curve is what makes
the file self-contained for prediction: beta can be rebuilt anywhere on
[0, 1] without shipping the training curves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .fsio import atomic_write_json
from .grid import Dataset, Grid, grid_from_points
from .kernels import SobolevKernel, kernel_matrix, null_space_basis

MODEL_FORMAT = "rkhsflr-model"
MODEL_VERSION = 1


@dataclass(frozen=True, eq=False)
class SavedModel:
    """A fitted model reloaded from JSON; enough to evaluate and predict."""

    order: int
    lam: float
    alpha_hat: float
    d: np.ndarray
    c: np.ndarray
    grid: Grid
    mean_values: np.ndarray
    mean_response: float
    representer_values: np.ndarray
    hat_trace: float
    gcv_value: float
    provenance: dict

    def __post_init__(self):
        for name in ("d", "c", "mean_values", "representer_values"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.d.size != self.order:
            raise ValueError("model d length must equal the kernel order")
        for name in ("mean_values", "representer_values"):
            if getattr(self, name).size != self.grid.num_points:
                raise ValueError(f"model {name} must match the grid length")
        if not self.lam > 0 or not math.isfinite(self.lam):
            raise ValueError("model lambda must be positive and finite")
        for name in ("alpha_hat", "mean_response", "hat_trace", "gcv_value"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"model {name} must be finite")


def model_payload(fit, provenance: dict) -> dict:
    """JSON-serializable document for a FittedFLR."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "order": fit.kernel.order,
        "lambda": fit.lam,
        "alpha_hat": fit.alpha_hat,
        "d": [float(v) for v in fit.d],
        "c": [float(v) for v in fit.c],
        "grid_points": [float(v) for v in fit.grid.points],
        "mean_curve": [float(v) for v in fit.mean_curve.values],
        "mean_response": fit.mean_response,
        "representer_curve": [float(v) for v in fit.representer_values],
        "hat_trace": fit.hat_trace,
        "gcv_value": fit.gcv_value,
        "provenance": provenance,
    }


def write_model(fit, path: str, provenance: dict) -> None:
    atomic_write_json(path, model_payload(fit, provenance))


def load_model(path: str) -> SavedModel:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"model file {path!r} is not valid JSON: {exc}")
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path!r} is not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {payload.get('version')!r}")
    try:
        grid = grid_from_points(np.asarray(payload["grid_points"], dtype=float))
        model = SavedModel(
            order=int(payload["order"]),
            lam=float(payload["lambda"]),
            alpha_hat=float(payload["alpha_hat"]),
            d=payload["d"],
            c=payload["c"],
            grid=grid,
            mean_values=payload["mean_curve"],
            mean_response=float(payload["mean_response"]),
            representer_values=payload["representer_curve"],
            hat_trace=float(payload["hat_trace"]),
            gcv_value=float(payload["gcv_value"]),
            provenance=dict(payload.get("provenance", {})),
        )
    except KeyError as exc:
        raise ValueError(f"model file {path!r} is missing field {exc}")
    return model


def saved_beta_values(model: SavedModel) -> np.ndarray:
    """Coefficient function of a saved model on its own grid."""
    kern = SobolevKernel.of_order(model.order)
    kmat = kernel_matrix(kern, model.grid.points, model.grid.points)
    basis = null_space_basis(model.order, model.grid)
    weighted = model.grid.weights * model.representer_values
    return basis @ model.d + kmat @ weighted


def saved_predict(model: SavedModel, dataset: Dataset) -> np.ndarray:
    """Predictions alpha + <x, beta> for curves on the model grid."""
    if not dataset.grid.matches(model.grid):
        raise GridMismatchError("prediction curves must live on the model grid")
    beta = saved_beta_values(model)
    return model.alpha_hat + dataset.curve_matrix @ (model.grid.weights * beta)
