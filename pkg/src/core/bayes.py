"""
Gaussian likelihoods, Bayesian model evidence and model weights.

Everything is computed in log space; linear values are derived at the end and
may under- or overflow, the log values are authoritative.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from src.core.observations import subset_indices
from src.utils.exceptions import CollocationError, LikelihoodUnderflowError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
MIN_APPROXIMATION_VARIANCE = 1e-12
MIN_MC_SAMPLES = 1000


@dataclass(frozen=True, eq=False)
class LikelihoodSpec:
    """Zero-mean Gaussian with diagonal covariance, as a vector of variances."""
    variances: np.ndarray

    def __post_init__(self):
        variances = np.atleast_1d(np.asarray(self.variances, dtype=float))
        object.__setattr__(self, "variances", variances)
        if variances.ndim != 1 or variances.size == 0:
            raise ValueError("Variances must be a non-empty vector.")
        if not np.all(np.isfinite(variances) & (variances > 0)):
            raise ValueError("Covariance must be positive definite (all variances > 0).")

    @classmethod
    def from_covariance(cls, covariance):
        covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        if covariance.shape[0] != covariance.shape[1]:
            raise ValueError(f"Covariance must be square, got {covariance.shape}.")
        if np.any(covariance - np.diag(np.diag(covariance))):
            raise ValueError("Only diagonal covariance matrices are supported.")
        return cls(np.diag(covariance).copy())

    @classmethod
    def for_observations(cls, observations, data_subset=None):
        idx = subset_indices(data_subset, observations.size)
        return cls(observations.variances[idx])

    @property
    def size(self):
        return self.variances.size

    @property
    def covariance(self):
        return np.diag(self.variances)

    @property
    def log_normalizer(self):
        return -0.5 * (self.size * LOG_2PI + float(np.sum(np.log(self.variances))))

    def subset(self, indices):
        return LikelihoodSpec(self.variances[np.asarray(indices, dtype=int)])

    def restrict(self, indices, full_size):
        """This spec on ``indices`` when it covers the full grid, unchanged when it already matches."""
        if self.size == len(indices):
            return self
        if self.size == full_size:
            return self.subset(indices)
        raise ValueError(f"Covariance of size {self.size} fits neither the subset ({len(indices)}) nor the grid ({full_size}).")

    def log_density(self, residuals):
        """Log Gaussian density of residual vectors along the last axis."""
        residuals = np.asarray(residuals, dtype=float)
        if residuals.shape[-1] != self.size:
            raise ValueError(f"Residual length {residuals.shape[-1]} does not match covariance size {self.size}.")
        return self.log_normalizer - 0.5 * np.sum(residuals ** 2 / self.variances, axis=-1)


def _as_spec(covariance):
    if isinstance(covariance, LikelihoodSpec):
        return covariance
    covariance = np.asarray(covariance, dtype=float)
    if covariance.ndim <= 1:
        return LikelihoodSpec(covariance)
    return LikelihoodSpec.from_covariance(covariance)


def log_gaussian_likelihood(residual, covariance):
    """
    Log of (2 pi)^(-N/2) |C|^(-1/2) exp(-1/2 r^T C^-1 r).

    ``covariance`` may be a LikelihoodSpec, a vector of variances or a diagonal matrix.
    """
    result = _as_spec(covariance).log_density(residual)
    return float(result) if np.ndim(result) == 0 else result


def gaussian_likelihood(residual, covariance):
    with np.errstate(under="ignore"):
        return np.exp(log_gaussian_likelihood(residual, covariance))


def approximation_error_spec(loocv_report):
    """Approximation-error covariance S from per-coordinate LOOCV MSE, floored at 1e-12."""
    return LikelihoodSpec(np.maximum(loocv_report.per_coordinate, MIN_APPROXIMATION_VARIANCE))


@dataclass(frozen=True, eq=False)
class BmeEstimate:
    log_bme: float
    log_likelihoods: np.ndarray
    samples: np.ndarray
    n_mc: int
    subset_label: str

    @property
    def bme(self):
        return math.exp(self.log_bme) if self.log_bme > -745.0 else 0.0

    @property
    def standard_error(self):
        """Monte-Carlo standard error of the linear BME estimate."""
        with np.errstate(under="ignore"):
            values = np.exp(self.log_likelihoods)
        return float(np.std(values, ddof=1) / math.sqrt(self.n_mc))


def bme_monte_carlo(surrogate, space, observations, n_mc, seed, data_subset=None, log_space=True):
    """
    Prior-sampling Monte-Carlo estimate of the Bayesian model evidence of a surrogate.

    log BME = logsumexp(log L_i) - log N_MC with L_i the Gaussian likelihood of
    y0 given the surrogate prediction at the i-th prior sample.

    Raises:
        LikelihoodUnderflowError: only when ``log_space`` is False and every
            linear likelihood underflows to zero.
    """
    if n_mc < MIN_MC_SAMPLES:
        raise ValueError(f"Monte-Carlo sample size must be >= {MIN_MC_SAMPLES}, got {n_mc}.")
    idx = subset_indices(data_subset, observations.size)
    likelihood = LikelihoodSpec.for_observations(observations, data_subset)

    samples = space.subspace(surrogate.parameter_names).sample(n_mc, seed)
    predictions = surrogate.evaluate(samples)[:, idx]
    log_likelihoods = likelihood.log_density(observations.values[idx] - predictions)

    if not log_space:
        with np.errstate(under="ignore"):
            if not np.any(np.exp(log_likelihoods) > 0.0):
                raise LikelihoodUnderflowError(
                    f"All {n_mc} likelihood values underflow in linear space "
                    f"(max log-likelihood {np.max(log_likelihoods):.2f})"
                )
    log_bme = float(logsumexp(log_likelihoods) - math.log(n_mc))
    label = data_subset.label if data_subset is not None else "all"
    logger.debug(f"log BME over subset '{label}' with {n_mc} samples: {log_bme:.6g}")
    return BmeEstimate(log_bme=log_bme, log_likelihoods=log_likelihoods, samples=samples, n_mc=n_mc, subset_label=label)


def posterior_model_weights(log_bmes, priors=None):
    """P(M_k | y0) proportional to BME_k P(M_k); uniform priors when omitted."""
    log_bmes = np.asarray(log_bmes, dtype=float)
    if priors is None:
        log_priors = np.full(log_bmes.shape, -math.log(log_bmes.size))
    else:
        priors = np.asarray(priors, dtype=float)
        if priors.shape != log_bmes.shape or np.any(priors <= 0):
            raise ValueError("Model prior probabilities must be positive, one per model.")
        log_priors = np.log(priors / priors.sum())
    log_posterior = log_bmes + log_priors
    if not np.any(np.isfinite(log_posterior)):
        raise ValueError("No model has a finite evidence; posterior weights are undefined.")
    weights = np.exp(log_posterior - logsumexp(log_posterior))
    return weights / weights.sum()


def log_collocation_weight(surrogate, colloc_outputs, approximation_cov, reference_values, measurement_cov, indices):
    """
    log sum_l N(y_l - y~_l; S) * P(w_l | reference), summed over the collocation points.

    The point masses are the Gaussian likelihoods of ``reference_values`` given the
    surrogate prediction at each collocation point, normalized over the set.
    """
    collocation = surrogate.collocation
    outputs = np.atleast_2d(np.asarray(colloc_outputs, dtype=float))
    if collocation.size == 0:
        raise CollocationError("Collocation set is empty.")
    if outputs.shape != (surrogate.n_outputs, collocation.size):
        raise CollocationError(
            f"Collocation outputs have shape {outputs.shape}, expected ({surrogate.n_outputs}, {collocation.size})."
        )
    approximation = approximation_cov.restrict(indices, surrogate.n_outputs)
    measurement = measurement_cov.restrict(indices, surrogate.n_outputs)

    surrogate_at = surrogate.evaluate(collocation.points)[:, indices]
    log_fidelity = approximation.log_density(outputs.T[:, indices] - surrogate_at)
    log_mass = measurement.log_density(np.asarray(reference_values, dtype=float) - surrogate_at)
    log_mass = log_mass - logsumexp(log_mass)
    return float(logsumexp(log_fidelity + log_mass))


def log_weight_sm(surrogate, colloc_outputs, observations, approximation_cov, data_subset=None):
    """log Weight_SM: agreement of surrogate and original model at the collocation points."""
    idx = subset_indices(data_subset, observations.size)
    return log_collocation_weight(
        surrogate,
        colloc_outputs,
        _as_spec(approximation_cov),
        observations.values[idx],
        LikelihoodSpec.for_observations(observations),
        idx,
    )


def weight_sm(surrogate, colloc_outputs, observations, approximation_cov, data_subset=None):
    with np.errstate(over="ignore", under="ignore"):
        return float(np.exp(log_weight_sm(surrogate, colloc_outputs, observations, approximation_cov, data_subset)))


@dataclass(frozen=True)
class SurrogateCandidate:
    """A model's surrogate together with its collocation outputs and approximation error S."""
    model_id: str
    surrogate: object
    colloc_outputs: np.ndarray
    approximation_cov: LikelihoodSpec


@dataclass(frozen=True)
class ModelEvidence:
    model_id: str
    prior_probability: float
    log_bme_sm: float
    log_weight_sm: float
    bme_sm: float
    weight_sm: float
    bme_om: float
    weight_uncorrected: float
    weight_corrected: float

    @property
    def log_bme_om(self):
        return self.log_bme_sm + self.log_weight_sm


@dataclass(frozen=True)
class BmeReport:
    entries: tuple
    n_mc: int
    subset_label: str

    def entry(self, model_id):
        for e in self.entries:
            if e.model_id == model_id:
                return e
        raise KeyError(model_id)

    def to_frame(self):
        rows = []
        for e in self.entries:
            rows.append({
                "subset": self.subset_label,
                "model": e.model_id,
                "prior_probability": e.prior_probability,
                "log_bme_sm": e.log_bme_sm,
                "log_weight_sm": e.log_weight_sm,
                "log_bme_om": e.log_bme_om,
                "bme_sm": e.bme_sm,
                "weight_sm": e.weight_sm,
                "bme_om": e.bme_om,
                "weight_uncorrected": e.weight_uncorrected,
                "weight_corrected": e.weight_corrected,
            })
        return pd.DataFrame(rows)

    def to_dict(self):
        return {
            "subset": self.subset_label,
            "n_mc": self.n_mc,
            "models": self.to_frame().to_dict(orient="records"),
        }


def compute_bme_report(candidates, space, observations, n_mc, seed, data_subset=None, prior_probabilities=None):
    """
    BME of each surrogate, its Weight_SM correction and the posterior model weights.

    BME_OM = BME_SM * Weight_SM, formed in log space so that an underflowing
    BME_SM and an overflowing Weight_SM still give a finite product. The
    corrected weights use BME_OM, the uncorrected ones BME_SM.
    """
    if not candidates:
        raise ValueError("At least one model is needed for a BME report.")
    priors = np.asarray(
        prior_probabilities if prior_probabilities is not None else [1.0] * len(candidates), dtype=float
    )
    priors = priors / priors.sum()

    log_bmes, log_weights = [], []
    for candidate in candidates:
        estimate = bme_monte_carlo(candidate.surrogate, space, observations, n_mc, seed, data_subset)
        log_bmes.append(estimate.log_bme)
        log_weights.append(
            log_weight_sm(candidate.surrogate, candidate.colloc_outputs, observations,
                          candidate.approximation_cov, data_subset)
        )
    log_bmes = np.array(log_bmes)
    log_weights = np.array(log_weights)
    uncorrected = posterior_model_weights(log_bmes, priors)
    corrected = posterior_model_weights(log_bmes + log_weights, priors)

    entries = []
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        for k, candidate in enumerate(candidates):
            bme_sm = float(np.exp(log_bmes[k]))
            weight = float(np.exp(log_weights[k]))
            entries.append(ModelEvidence(
                model_id=candidate.model_id,
                prior_probability=float(priors[k]),
                log_bme_sm=float(log_bmes[k]),
                log_weight_sm=float(log_weights[k]),
                bme_sm=bme_sm,
                weight_sm=weight,
                bme_om=float(np.exp(log_bmes[k] + log_weights[k])),
                weight_uncorrected=float(uncorrected[k]),
                weight_corrected=float(corrected[k]),
            ))
    label = data_subset.label if data_subset is not None else "all"
    for e in entries:
        logger.info(
            f"[{label}] {e.model_id}: log BME_SM={e.log_bme_sm:.4f}, log Weight_SM={e.log_weight_sm:.4f}, "
            f"P(M|y0)={e.weight_uncorrected:.4f} -> corrected {e.weight_corrected:.4f}"
        )
    return BmeReport(entries=tuple(entries), n_mc=n_mc, subset_label=label)
