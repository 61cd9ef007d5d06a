"""
Output coordinates, data subsets and measurement data.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from src.utils.exceptions import ObservationError


class OutputCoordinate(NamedTuple):
    space: str
    time: str
    quantity: str

    @property
    def label(self):
        return f"{self.quantity}@{self.space}@{self.time}"


@dataclass(frozen=True)
class DataSubset:
    """Coordinates of the grid used in one likelihood evaluation."""
    label: str
    indices: tuple

    @property
    def size(self):
        return len(self.indices)

    def to_dict(self):
        return {"label": self.label, "indices": list(self.indices)}


@dataclass(frozen=True)
class OutputGrid:
    """Ordered (space, time, quantity) coordinates a model produces."""
    coordinates: tuple

    def __post_init__(self):
        coords = tuple(OutputCoordinate(*c) for c in self.coordinates)
        object.__setattr__(self, "coordinates", coords)
        if len(set(coords)) != len(coords):
            raise ObservationError("Output grid labels must be unique.")

    @classmethod
    def unlabeled(cls, size, quantity="output"):
        return cls(tuple(OutputCoordinate("", str(i), quantity) for i in range(size)))

    @property
    def size(self):
        return len(self.coordinates)

    def __len__(self):
        return self.size

    @property
    def quantities(self):
        return tuple(dict.fromkeys(c.quantity for c in self.coordinates))

    @property
    def labels(self):
        return [c.label for c in self.coordinates]

    def indices_for(self, quantity):
        return tuple(i for i, c in enumerate(self.coordinates) if c.quantity == quantity)

    def spatial_labels(self, quantity):
        """Distinct space labels of a quantity, in grid order."""
        return tuple(dict.fromkeys(c.space for c in self.coordinates if c.quantity == quantity))

    def full_subset(self):
        return DataSubset("all", tuple(range(self.size)))

    def data_subset(self, quantity, n_spatial):
        """All coordinates of ``quantity`` at its first ``n_spatial`` spatial locations."""
        locations = self.spatial_labels(quantity)
        if not locations:
            raise ObservationError(f"Quantity '{quantity}' is not part of the output grid.")
        if not 1 <= n_spatial <= len(locations):
            raise ObservationError(
                f"Subset of {n_spatial} spatial points requested for '{quantity}', {len(locations)} available."
            )
        keep = set(locations[:n_spatial])
        indices = tuple(i for i, c in enumerate(self.coordinates) if c.quantity == quantity and c.space in keep)
        return DataSubset(f"{quantity}_{n_spatial}", indices)

    def concat(self, other):
        return OutputGrid(self.coordinates + other.coordinates)

    def to_dict(self):
        return {"coordinates": [list(c) for c in self.coordinates]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(OutputCoordinate(*c) for c in data["coordinates"]))


def subset_indices(data_subset, size):
    """Index array for ``data_subset``, or every coordinate when it is None."""
    if data_subset is None:
        return np.arange(size)
    indices = np.asarray(data_subset.indices, dtype=int)
    if indices.size == 0 or indices.min() < 0 or indices.max() >= size:
        raise ObservationError(f"Data subset '{data_subset.label}' does not fit a grid of size {size}.")
    return indices


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Measurement vector y0 with per-coordinate standard deviations (diagonal R)."""
    grid: OutputGrid
    values: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sigma", sigma)
        if values.shape != (self.grid.size,) or sigma.shape != (self.grid.size,):
            raise ObservationError(
                f"Observation vectors must have length {self.grid.size}, got {values.shape} and {sigma.shape}."
            )
        if not np.all(np.isfinite(values)):
            raise ObservationError("Observation values must be finite.")
        if not np.all(np.isfinite(sigma) & (sigma > 0)):
            raise ObservationError("Measurement standard deviations must be strictly positive.")

    @property
    def size(self):
        return self.grid.size

    @property
    def variances(self):
        return self.sigma ** 2

    @property
    def covariance(self):
        return np.diag(self.variances)

    def concat(self, other):
        return ObservationSet(
            self.grid.concat(other.grid),
            np.concatenate([self.values, other.values]),
            np.concatenate([self.sigma, other.sigma]),
        )

    def to_dict(self):
        return {"grid": self.grid.to_dict(), "values": self.values.tolist(), "sigma": self.sigma.tolist()}
