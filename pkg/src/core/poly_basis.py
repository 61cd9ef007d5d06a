"""
Arbitrary polynomial chaos basis.

Univariate orthonormal families are built from raw moments of each prior by
solving the moment (Hankel) system for the monic orthogonal polynomial and then
normalizing. Families work in the standardized variable z = (x - mean) / std so
parameters living on 1e-10..1e-7 stay well-conditioned. The multivariate basis
is the total-degree tensorization of the families.
"""
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly
from scipy import linalg

from src.utils.exceptions import BasisConstructionError, CollocationError, RootFindingError

logger = logging.getLogger(__name__)

# Hankel systems with a larger condition number are treated as singular
MAX_HANKEL_CONDITION = 1e12
ROOT_RESIDUAL_TOLERANCE = 1e-10
DISTINCT_POINT_RTOL = 1e-12

INITIAL = "initial"
BAPC_UPDATE = "bapc-update"


@dataclass(frozen=True, eq=False)
class UnivariateFamily:
    """
    Orthonormal polynomials psi_0..psi_m of one parameter.

    ``coefficients[k]`` holds the ascending power coefficients of psi_k in the
    standardized variable z = (x - shift) / scale.
    """
    name: str
    shift: float
    scale: float
    coefficients: np.ndarray

    @property
    def max_degree(self):
        return self.coefficients.shape[0] - 1

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def evaluate(self, x, degree):
        return npoly.polyval(self.standardize(x), self.coefficients[degree])

    def vandermonde(self, x, max_degree=None):
        """Values of psi_0..psi_max_degree at x, shape (len(x), max_degree + 1)."""
        max_degree = self.max_degree if max_degree is None else max_degree
        z = self.standardize(np.atleast_1d(x))
        return np.column_stack([npoly.polyval(z, self.coefficients[k]) for k in range(max_degree + 1)])

    def monomial_coefficients(self, degree):
        """Ascending power coefficients of psi_degree in the original variable x."""
        in_z = Polynomial(self.coefficients[degree, :degree + 1])
        z_of_x = Polynomial([-self.shift / self.scale, 1.0 / self.scale])
        coef = in_z(z_of_x).coef
        return np.pad(coef, (0, degree + 1 - coef.size))

    def roots(self, degree):
        """
        Real roots of psi_degree, sorted ascending, in the original variable.

        Eigenvalues of the companion matrix of the monic polynomial, then one
        Newton step per root.
        """
        if not 1 <= degree <= self.max_degree:
            raise ValueError(f"Root degree must be in [1, {self.max_degree}], got {degree}.")
        coef = self.coefficients[degree, :degree + 1]
        monic = coef / coef[-1]
        z = npoly.polyroots(monic)
        if np.iscomplexobj(z):
            if np.any(np.abs(z.imag) > 1e-8 * np.maximum(1.0, np.abs(z))):
                raise RootFindingError(coef, f"Degree-{degree} polynomial of '{self.name}' has complex roots")
            z = z.real
        p = Polynomial(monic)
        dp = p.deriv()
        slope = dp(z)
        z = np.where(slope != 0.0, z - p(z) / np.where(slope != 0.0, slope, 1.0), z)
        residual = np.abs(npoly.polyval(z, coef))
        tolerance = ROOT_RESIDUAL_TOLERANCE * np.max(np.abs(coef))
        if np.any(residual > tolerance):
            raise RootFindingError(
                coef, f"Root finding for degree-{degree} polynomial of '{self.name}' did not converge "
                      f"(max residual {residual.max():.3e})"
            )
        return np.sort(self.shift + self.scale * z)

    def to_dict(self):
        return {
            "name": self.name,
            "shift": self.shift,
            "scale": self.scale,
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            name=data["name"],
            shift=float(data["shift"]),
            scale=float(data["scale"]),
            coefficients=np.asarray(data["coefficients"], dtype=float),
        )


def build_family(prior, max_degree):
    """
    Orthonormal family of ``prior`` up to ``max_degree`` from its raw moments.

    Needs moments up to order 2 * max_degree. Leading coefficients are positive.
    """
    if max_degree < 0:
        raise ValueError(f"max_degree must be >= 0, got {max_degree}.")
    shift, scale = prior.mean(), prior.std()
    if not scale > 0:
        raise BasisConstructionError(prior.name, 1, "prior has zero variance")
    moments = np.array([prior.affine_moment(k, shift, scale) for k in range(2 * max_degree + 1)])

    coefficients = np.zeros((max_degree + 1, max_degree + 1))
    coefficients[0, 0] = 1.0
    for k in range(1, max_degree + 1):
        hankel = linalg.hankel(moments[:k], moments[k - 1:2 * k - 1])
        condition = np.linalg.cond(hankel)
        if not np.isfinite(condition) or condition > MAX_HANKEL_CONDITION:
            raise BasisConstructionError(
                prior.name, k, f"moment (Hankel) matrix is numerically singular (condition number {condition:.3e})"
            )
        monic = np.append(np.linalg.solve(hankel, -moments[k:2 * k]), 1.0)
        gram = linalg.hankel(moments[:k + 1], moments[k:2 * k + 1])
        norm_sq = float(monic @ gram @ monic)
        if not np.isfinite(norm_sq) or norm_sq <= 0.0:
            raise BasisConstructionError(prior.name, k, f"non-positive squared norm {norm_sq:.3e}")
        coefficients[k, :k + 1] = monic / math.sqrt(norm_sq)

    logger.debug(f"Built orthonormal family for '{prior.name}' up to degree {max_degree}")
    return UnivariateFamily(name=prior.name, shift=float(shift), scale=float(scale), coefficients=coefficients)


def total_degree_indices(n_params, degree):
    """Multi-indices with total degree <= degree, graded order, zero index first."""
    indices = [a for a in itertools.product(range(degree + 1), repeat=n_params) if sum(a) <= degree]
    indices.sort(key=lambda a: (sum(a), tuple(-v for v in a)))
    return np.array(indices, dtype=int).reshape(len(indices), n_params)


def expansion_size(n_params, degree):
    """D = (N_p + d)! / (N_p! d!) - 1."""
    return math.comb(n_params + degree, degree) - 1


@dataclass(frozen=True, eq=False)
class MultivariateBasis:
    """Total-degree tensor basis Psi_alpha(w) = prod_i psi_{alpha_i}(w_i) with D + 1 terms."""
    families: tuple
    degree: int
    multi_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        expected = expansion_size(len(self.families), self.degree) + 1
        if self.multi_indices.shape != (expected, len(self.families)):
            raise ValueError(f"Multi-index set has shape {self.multi_indices.shape}, expected ({expected}, {len(self.families)}).")

    @classmethod
    def build(cls, space, degree):
        """Families up to degree d+1 (their roots seed the collocation grid), terms up to degree d."""
        if degree < 1:
            raise ValueError(f"Expansion degree must be >= 1, got {degree}.")
        families = tuple(build_family(prior, degree + 1) for prior in space.priors)
        basis = cls(families=families, degree=degree, multi_indices=total_degree_indices(len(families), degree))
        logger.info(f"Built basis over {list(basis.parameter_names)}: d={degree}, D={basis.expansion_size}, {basis.n_terms} terms")
        return basis

    @property
    def parameter_names(self):
        return tuple(f.name for f in self.families)

    @property
    def n_params(self):
        return len(self.families)

    @property
    def n_terms(self):
        return self.multi_indices.shape[0]

    @property
    def expansion_size(self):
        return self.n_terms - 1

    def design_matrix(self, points):
        """Psi evaluated at each row of ``points``, shape (n, D + 1)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.n_params:
            raise ValueError(f"Points have {points.shape[1]} columns, basis has {self.n_params} parameters.")
        psi = np.ones((points.shape[0], self.n_terms))
        for i, family in enumerate(self.families):
            values = family.vandermonde(points[:, i], self.degree)
            psi *= values[:, self.multi_indices[:, i]]
        return psi

    def to_dict(self):
        return {
            "degree": self.degree,
            "parameter_names": list(self.parameter_names),
            "multi_indices": self.multi_indices.tolist(),
            "families": [f.to_dict() for f in self.families],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            families=tuple(UnivariateFamily.from_dict(f) for f in data["families"]),
            degree=int(data["degree"]),
            multi_indices=np.asarray(data["multi_indices"], dtype=int).reshape(-1, len(data["families"])),
        )


def points_near(a, b, rtol):
    """True when every coordinate of a and b agrees within relative tolerance rtol."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b))))


@dataclass(frozen=True, eq=False)
class CollocationSet:
    """Ordered collocation points with a provenance tag per point."""
    points: np.ndarray
    provenance: tuple

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if len(self.provenance) != points.shape[0]:
            raise CollocationError(f"{points.shape[0]} points but {len(self.provenance)} provenance tags.")
        for i in range(points.shape[0]):
            for j in range(i):
                if points_near(points[i], points[j], DISTINCT_POINT_RTOL):
                    raise CollocationError(f"Collocation points {j} and {i} are identical: {points[i].tolist()}")

    @property
    def size(self):
        return self.points.shape[0]

    def __len__(self):
        return self.size

    def contains_near(self, point, rtol):
        return any(points_near(point, p, rtol) for p in self.points)

    def append(self, point, provenance=BAPC_UPDATE):
        point = np.asarray(point, dtype=float).reshape(1, -1)
        return CollocationSet(np.vstack([self.points, point]), self.provenance + (provenance,))

    def to_dict(self):
        return {"points": self.points.tolist(), "provenance": list(self.provenance)}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["points"], dtype=float), tuple(data["provenance"]))


def initial_collocation(basis, space, count):
    """
    Pick ``count`` points from the tensor grid of degree-(d+1) roots.

    Ranking: descending joint prior density, then ascending distance to the prior
    mean in standardized coordinates, then lexicographic order. Candidates are
    taken in ranked order, passing over any that does not raise the rank of the
    design matrix, until it reaches D + 1; the remaining picks follow the ranking.
    """
    space = space.subspace(basis.parameter_names)
    root_sets = [family.roots(basis.degree + 1) for family in basis.families]
    candidates = np.array(list(itertools.product(*root_sets)), dtype=float)
    n_candidates = candidates.shape[0]
    if count < basis.n_terms:
        raise CollocationError(f"Need at least D+1 = {basis.n_terms} collocation points, {count} requested.")
    if count > n_candidates:
        raise CollocationError(f"{count} collocation points requested but only {n_candidates} root-grid candidates exist.")

    log_density = np.round(space.log_density(candidates), 10)
    distance = np.round(np.linalg.norm(space.normalized(candidates), axis=1), 10)
    keys = [candidates[:, j] for j in reversed(range(candidates.shape[1]))] + [distance, -log_density]
    order = np.lexsort(keys)

    design = basis.design_matrix(candidates)
    picked, rank = [], 0
    for i in order:
        if rank == basis.n_terms:
            break
        new_rank = np.linalg.matrix_rank(design[picked + [int(i)]])
        if new_rank > rank:
            picked.append(int(i))
            rank = new_rank
    if rank < basis.n_terms:
        raise CollocationError(f"Root grid spans only rank {rank} of the {basis.n_terms}-term basis.")
    rest = [int(i) for i in order if int(i) not in picked]
    picked += rest[:count - len(picked)]
    chosen = candidates[picked]
    logger.info(f"Selected {count} of {n_candidates} root-grid candidates as initial collocation points")
    return CollocationSet(chosen, (INITIAL,) * count)
