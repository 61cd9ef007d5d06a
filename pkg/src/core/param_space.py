"""
Joint prior over independent model parameters.

Each parameter has a one-dimensional prior (uniform interval or a user-supplied
sample set). The joint density is the product of the marginals.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats

from src.utils.exceptions import PriorError

logger = logging.getLogger(__name__)

UNIFORM = "uniform"
SAMPLES = "samples"
PRIOR_KINDS = (UNIFORM, SAMPLES)


def min_samples_for_degree(degree):
    """Sample count needed so that moments up to order 2(d+1) are estimable."""
    return 2 * (degree + 1) + 2


def derive_seed(seed, *keys):
    """Seed of an independent sub-stream, e.g. derive_seed(seed, stage, model_index)."""
    base = [int(s) for s in seed] if isinstance(seed, (list, tuple)) else [int(seed)]
    return base + [int(k) for k in keys]


@dataclass(frozen=True, eq=False)
class Prior1D:
    """
    One-dimensional prior of a single parameter.

    For ``kind == "samples"`` the support bounds are the sample minimum and maximum
    and ``samples`` holds the data the moments are computed from.
    """
    name: str
    kind: str
    lower: float
    upper: float
    samples: np.ndarray = None
    unit: str = ""

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise PriorError(f"Parameter '{self.name}': unknown prior kind '{self.kind}'. Expected one of {PRIOR_KINDS}.")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise PriorError(f"Parameter '{self.name}': bounds must be finite, got [{self.lower}, {self.upper}].")
        if self.kind == UNIFORM and not self.lower < self.upper:
            raise PriorError(f"Parameter '{self.name}': uniform prior needs lower < upper, got [{self.lower}, {self.upper}].")
        if self.kind == SAMPLES:
            if self.samples is None or self.samples.ndim != 1:
                raise PriorError(f"Parameter '{self.name}': sample-set prior needs a one-dimensional sample array.")
            if self.samples.size < min_samples_for_degree(1):
                raise PriorError(
                    f"Parameter '{self.name}': sample-set prior needs at least {min_samples_for_degree(1)} samples, "
                    f"got {self.samples.size}."
                )
            if not np.all(np.isfinite(self.samples)):
                raise PriorError(f"Parameter '{self.name}': samples contain non-finite values.")
            if not self.lower < self.upper:
                raise PriorError(f"Parameter '{self.name}': samples are all identical ({self.lower}).")

    @classmethod
    def uniform(cls, name, lower, upper, unit=""):
        return cls(name=name, kind=UNIFORM, lower=float(lower), upper=float(upper), unit=unit)

    @classmethod
    def from_samples(cls, name, samples, unit=""):
        data = np.asarray(samples, dtype=float).ravel()
        if data.size == 0:
            raise PriorError(f"Parameter '{name}': sample set is empty.")
        data.setflags(write=False)
        return cls(name=name, kind=SAMPLES, lower=float(data.min()), upper=float(data.max()), samples=data, unit=unit)

    @classmethod
    def from_samples_file(cls, name, samples_file, unit=""):
        """Read one real per line (ASCII decimal)."""
        try:
            data = np.loadtxt(samples_file, dtype=float, ndmin=1)
        except (OSError, ValueError) as e:
            raise PriorError(f"Parameter '{name}': cannot read samples file '{samples_file}': {e}") from e
        logger.debug(f"Loaded {data.size} samples for parameter '{name}' from {samples_file}")
        return cls.from_samples(name, data, unit=unit)

    @property
    def max_moment_order(self):
        """Highest raw moment order that can be estimated (unbounded for uniform priors)."""
        if self.kind == SAMPLES:
            return self.samples.size - 2
        return None

    def supports_degree(self, degree):
        return self.kind == UNIFORM or self.samples.size >= min_samples_for_degree(degree)

    def raw_moment(self, k):
        """E[X^k] under this prior."""
        return self.affine_moment(k, 0.0, 1.0)

    def affine_moment(self, k, shift, scale):
        """E[((X - shift) / scale)^k], the raw moment of the standardized variable."""
        if int(k) != k or k < 0:
            raise ValueError(f"Moment order must be a non-negative integer, got {k}.")
        k = int(k)
        if k == 0:
            return 1.0
        if self.kind == SAMPLES:
            if k > self.max_moment_order:
                raise PriorError(
                    f"Parameter '{self.name}': moment order {k} exceeds the estimable range "
                    f"({self.max_moment_order}) of {self.samples.size} samples."
                )
            return float(np.mean(((self.samples - shift) / scale) ** k))
        a = (self.lower - shift) / scale
        b = (self.upper - shift) / scale
        return float((b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a)))

    def mean(self):
        if self.kind == UNIFORM:
            return 0.5 * (self.lower + self.upper)
        return float(np.mean(self.samples))

    def std(self):
        if self.kind == UNIFORM:
            return (self.upper - self.lower) / np.sqrt(12.0)
        return float(np.std(self.samples))

    @cached_property
    def _kde(self):
        return stats.gaussian_kde(self.samples)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == UNIFORM:
            inside = (x >= self.lower) & (x <= self.upper)
            return np.where(inside, 1.0 / (self.upper - self.lower), 0.0)
        return self._kde(np.atleast_1d(x)).reshape(x.shape)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def sample(self, n, rng):
        if self.kind == UNIFORM:
            return rng.uniform(self.lower, self.upper, size=n)
        # Bootstrap keeps the empirical moments the basis was built from
        return rng.choice(self.samples, size=n, replace=True)

    def to_dict(self):
        data = {"name": self.name, "kind": self.kind, "lower": self.lower, "upper": self.upper, "unit": self.unit}
        if self.kind == SAMPLES:
            data["samples"] = self.samples.tolist()
        return data


@dataclass(frozen=True, eq=False)
class ParameterSpace:
    """Ordered, independent priors of N_p parameters."""
    priors: tuple

    def __post_init__(self):
        object.__setattr__(self, "priors", tuple(self.priors))
        if len(self.priors) < 1:
            raise PriorError("A parameter space needs at least one parameter.")
        names = [p.name for p in self.priors]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise PriorError(f"Parameter names must be unique, duplicated: {duplicates}")

    @property
    def names(self):
        return tuple(p.name for p in self.priors)

    @property
    def n_params(self):
        return len(self.priors)

    def __len__(self):
        return len(self.priors)

    def index_of(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise PriorError(f"Unknown parameter '{name}'. Known parameters: {list(self.names)}") from None

    def column_indices(self, names):
        return [self.index_of(n) for n in names]

    def subspace(self, names):
        """Parameter space restricted to ``names``, in the given order."""
        return ParameterSpace(tuple(self.priors[i] for i in self.column_indices(names)))

    def sample(self, n, seed):
        """
        Draw n i.i.d. realizations, column i from prior i.

        Args:
            n: number of realizations (>= 1).
            seed: anything numpy.random.default_rng accepts; fixes the result.

        Returns:
            array of shape (n, N_p).
        """
        if n < 1:
            raise ValueError(f"Sample count must be >= 1, got {n}.")
        rng = np.random.default_rng(seed)
        return np.column_stack([prior.sample(n, rng) for prior in self.priors])

    def log_density(self, points):
        """Log of the joint prior density for each row of ``points`` (-inf outside support)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.n_params:
            raise ValueError(f"Points have {points.shape[1]} columns, parameter space has {self.n_params}.")
        total = np.zeros(points.shape[0])
        for i, prior in enumerate(self.priors):
            total = total + prior.logpdf(points[:, i])
        return total

    def density(self, point):
        """Joint prior density at a single point of length N_p."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.n_params,):
            raise ValueError(f"Point must have length {self.n_params}, got shape {point.shape}.")
        return float(np.prod([prior.pdf(point[i]) for i, prior in enumerate(self.priors)]))

    def mean(self):
        return np.array([p.mean() for p in self.priors])

    def std(self):
        return np.array([p.std() for p in self.priors])

    def normalized(self, points):
        """Per-parameter standardized coordinates (x - mean) / std."""
        return (np.asarray(points, dtype=float) - self.mean()) / self.std()

    def to_dict(self):
        return {"parameters": [p.to_dict() for p in self.priors]}
