"""
Polynomial chaos surrogate: coefficient solve, evaluation and leave-one-out error.

Coefficients of every output coordinate are fitted against one shared design
matrix Psi (P x (D+1)). A square system is solved directly; an overdetermined
one in the least-squares sense through a QR decomposition of Psi.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from src.core.observations import OutputGrid
from src.core.poly_basis import CollocationSet, MultivariateBasis
from src.utils.exceptions import LoocvError, RankDeficientDesignError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Surrogate:
    """
    Expansion coefficients (N_out x (D+1)) plus the collocation records they came from.

    ``model_outputs`` caches the original model at the collocation points, shape (N_out x P).
    """
    basis: MultivariateBasis
    grid: OutputGrid
    coefficients: np.ndarray
    collocation: CollocationSet
    model_outputs: np.ndarray

    @property
    def parameter_names(self):
        return self.basis.parameter_names

    @property
    def n_outputs(self):
        return self.coefficients.shape[0]

    @property
    def prior_mean(self):
        """Mean of the surrogate output under the prior (coefficient of the constant term)."""
        return self.coefficients[:, 0].copy()

    @property
    def prior_variance(self):
        return np.sum(self.coefficients[:, 1:] ** 2, axis=1)

    def evaluate(self, points):
        """Surrogate predictions at each row of ``points``, shape (n, N_out)."""
        return self.basis.design_matrix(points) @ self.coefficients.T

    def with_coefficients(self, coefficients):
        return replace(self, coefficients=np.asarray(coefficients, dtype=float))

    def to_dict(self):
        return {
            "basis": self.basis.to_dict(),
            "grid": self.grid.to_dict(),
            "coefficients": self.coefficients.tolist(),
            "collocation": self.collocation.to_dict(),
            "model_outputs": self.model_outputs.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            basis=MultivariateBasis.from_dict(data["basis"]),
            grid=OutputGrid.from_dict(data["grid"]),
            coefficients=np.asarray(data["coefficients"], dtype=float),
            collocation=CollocationSet.from_dict(data["collocation"]),
            model_outputs=np.asarray(data["model_outputs"], dtype=float),
        )


def _as_output_matrix(model_outputs, n_points):
    outputs = np.asarray(model_outputs, dtype=float)
    if outputs.ndim == 1:
        outputs = outputs.reshape(1, -1)
    if outputs.shape[1] != n_points:
        raise ValueError(f"Model outputs have {outputs.shape[1]} columns, {n_points} collocation points given.")
    return outputs


def _closest_pairs(basis, points, count=3):
    standardized = np.column_stack(
        [f.standardize(points[:, i]) for i, f in enumerate(basis.families)]
    )
    pairs = []
    for i in range(points.shape[0]):
        for j in range(i):
            pairs.append((float(np.linalg.norm(standardized[i] - standardized[j])), j, i))
    pairs.sort()
    return [(j, i, round(d, 12)) for d, j, i in pairs[:count]]


def _fit(design, targets):
    """Coefficients (D+1 x N_out) of ``targets`` (P x N_out) on ``design`` (P x (D+1))."""
    if design.shape[0] == design.shape[1]:
        return np.linalg.solve(design, targets)
    q, r = linalg.qr(design, mode="economic")
    return linalg.solve_triangular(r, q.T @ targets)


def solve_coefficients(basis, collocation, model_outputs, grid=None):
    """
    Fit a surrogate to model outputs at the collocation points.

    Args:
        basis: MultivariateBasis with D + 1 terms.
        collocation: CollocationSet with P >= D + 1 points.
        model_outputs: array (N_out x P) of original-model outputs.
        grid: OutputGrid labelling the N_out rows (unlabeled when omitted).

    Returns:
        Surrogate
    """
    outputs = _as_output_matrix(model_outputs, collocation.size)
    grid = grid if grid is not None else OutputGrid.unlabeled(outputs.shape[0])
    if grid.size != outputs.shape[0]:
        raise ValueError(f"Grid has {grid.size} coordinates, model outputs have {outputs.shape[0]} rows.")
    if collocation.size < basis.n_terms:
        raise RankDeficientDesignError(collocation.size, basis.n_terms, [])

    design = basis.design_matrix(collocation.points)
    rank = np.linalg.matrix_rank(design)
    if rank < basis.n_terms:
        raise RankDeficientDesignError(rank, basis.n_terms, _closest_pairs(basis, collocation.points))

    coefficients = _fit(design, outputs.T).T
    if not np.all(np.isfinite(coefficients)):
        raise RankDeficientDesignError(rank, basis.n_terms, _closest_pairs(basis, collocation.points))
    kind = "square" if collocation.size == basis.n_terms else "least-squares"
    logger.debug(f"Solved {kind} system: P={collocation.size}, D+1={basis.n_terms}, N_out={outputs.shape[0]}")
    return Surrogate(basis=basis, grid=grid, coefficients=coefficients, collocation=collocation, model_outputs=outputs)


@dataclass(frozen=True, eq=False)
class LoocvReport:
    """
    Leave-one-out errors.

    ``fold_squared_errors[i, s]`` is the squared prediction error at coordinate s
    of the surrogate refitted without collocation point i.
    """
    grid: OutputGrid
    fold_squared_errors: np.ndarray
    per_coordinate: np.ndarray
    relative: np.ndarray
    relative_is_absolute: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.per_coordinate))

    @property
    def mean_relative(self):
        return float(np.mean(self.relative))

    def per_quantity(self):
        """Mean MSE and mean relative error over space and time, per quantity."""
        summary = {}
        for quantity in self.grid.quantities:
            idx = list(self.grid.indices_for(quantity))
            summary[quantity] = {
                "mean_mse": float(np.mean(self.per_coordinate[idx])),
                "mean_relative": float(np.mean(self.relative[idx])),
            }
        return summary

    def to_dict(self):
        return {
            "mean": self.mean,
            "mean_relative": self.mean_relative,
            "per_coordinate": self.per_coordinate.tolist(),
            "relative": self.relative.tolist(),
            "relative_is_absolute": self.relative_is_absolute.tolist(),
            "per_quantity": self.per_quantity(),
        }


def loocv_error(basis, collocation, model_outputs, grid=None):
    """
    Leave-one-out cross-validation error by explicit refits.

    Needs P >= D + 2. The relative error divides the root error by the absolute
    mean of the model outputs at that coordinate; where that mean is zero the
    absolute root error is reported and flagged.
    """
    outputs = _as_output_matrix(model_outputs, collocation.size)
    grid = grid if grid is not None else OutputGrid.unlabeled(outputs.shape[0])
    n_points = collocation.size
    if n_points < basis.n_terms + 1:
        raise LoocvError(f"LOOCV needs at least D+2 = {basis.n_terms + 1} collocation points, got {n_points}.")

    design = basis.design_matrix(collocation.points)
    targets = outputs.T
    squared = np.empty_like(targets)
    for i in range(n_points):
        keep = np.arange(n_points) != i
        try:
            coefficients = _fit(design[keep], targets[keep])
        except np.linalg.LinAlgError as e:
            raise LoocvError(f"Fold without collocation point {i} is not solvable: {e}") from e
        squared[i] = (targets[i] - design[i] @ coefficients) ** 2

    per_coordinate = squared.mean(axis=0)
    mean_abs = np.abs(targets.mean(axis=0))
    is_absolute = mean_abs == 0.0
    root = np.sqrt(per_coordinate)
    relative = np.where(is_absolute, root, root / np.where(is_absolute, 1.0, mean_abs))
    if np.any(is_absolute):
        logger.warning(f"{int(is_absolute.sum())} coordinate(s) have zero mean output; relative LOOCV reported as absolute there")
    return LoocvReport(
        grid=grid,
        fold_squared_errors=squared,
        per_coordinate=per_coordinate,
        relative=relative,
        relative_is_absolute=is_absolute,
    )
