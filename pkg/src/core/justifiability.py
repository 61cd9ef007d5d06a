"""
Model confusion matrix, cross-surrogate correction and RMSE against data.

Column c of the confusion matrix treats model c as the data-generating truth:
every prior realization of model c is used as synthetic data once, every
competing model (and the measurement data MD) gets a Monte-Carlo BME against
it, and the posterior weights are averaged over the realizations.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from src.core.bayes import LikelihoodSpec, log_collocation_weight
from src.core.observations import subset_indices
from src.core.param_space import derive_seed
from src.utils.exceptions import ConfusionMatrixError

logger = logging.getLogger(__name__)

MEASUREMENT_LABEL = "MD"
TRUTH_CHUNK = 512


@dataclass(frozen=True)
class CrossWeights:
    """Cross-surrogate correction factors for one (reference, candidate) pair."""
    reference_id: str
    candidate_id: str
    log_weight_sm1: float
    log_weight_sm2: float

    @property
    def log_factor(self):
        return self.log_weight_sm1 + self.log_weight_sm2

    @property
    def weight_sm1(self):
        return math.exp(self.log_weight_sm1) if self.log_weight_sm1 < 709.0 else math.inf

    @property
    def weight_sm2(self):
        return math.exp(self.log_weight_sm2) if self.log_weight_sm2 < 709.0 else math.inf


def cross_correction(reference, candidate, measurement_cov, data_subset=None):
    """
    Weight_SM1 and Weight_SM2 for candidate model ``candidate`` judged against ``reference``.

    SM1 sums the candidate's surrogate fidelity over its own collocation points,
    weighted by how well each point reproduces the reference prediction.
    SM2 does the same over the reference's collocation points against the
    candidate prediction. Predictions are the surrogates' prior means.
    """
    n_out = reference.surrogate.n_outputs
    if candidate.surrogate.n_outputs != n_out:
        raise ConfusionMatrixError(
            f"Models '{reference.model_id}' and '{candidate.model_id}' do not share an output grid."
        )
    idx = subset_indices(data_subset, n_out)
    log_sm1 = log_collocation_weight(
        candidate.surrogate, candidate.colloc_outputs, candidate.approximation_cov,
        reference.surrogate.prior_mean[idx], measurement_cov, idx,
    )
    log_sm2 = log_collocation_weight(
        reference.surrogate, reference.colloc_outputs, reference.approximation_cov,
        candidate.surrogate.prior_mean[idx], measurement_cov, idx,
    )
    return CrossWeights(reference.model_id, candidate.model_id, log_sm1, log_sm2)


def _log_mean_likelihood(truths, predictions, likelihood):
    """
    For each truth row j: log (1/I) sum_i N(truth_j - prediction_i; R).

    Quadratic forms are expanded into matrix products and processed in chunks of truths.
    """
    inverse = 1.0 / likelihood.variances
    prediction_norm = np.sum(predictions ** 2 * inverse, axis=1)
    weighted_predictions = (predictions * inverse).T
    log_count = math.log(predictions.shape[0])
    out = np.empty(truths.shape[0])
    for start in range(0, truths.shape[0], TRUTH_CHUNK):
        chunk = truths[start:start + TRUTH_CHUNK]
        quad = np.sum(chunk ** 2 * inverse, axis=1)[:, None] - 2.0 * chunk @ weighted_predictions + prediction_norm[None, :]
        quad = np.maximum(quad, 0.0)
        out[start:start + TRUTH_CHUNK] = logsumexp(likelihood.log_normalizer - 0.5 * quad, axis=1) - log_count
    return out


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """
    Averaged posterior weights; columns are the assumed truths, rows the candidates.

    ``uncorrected`` holds the plain surrogate-based weights, ``corrected`` the
    column-renormalized weights after cross-surrogate correction (each model
    factor taken relative to its column's self cell), and ``log_corrected_raw``
    the log weights times the plain correction factors, before any rescaling.
    """
    labels: tuple
    uncorrected: np.ndarray
    standard_errors: np.ndarray
    log_corrected_raw: np.ndarray
    corrected: np.ndarray
    cross_weights: tuple
    n_mc: int
    subset_label: str

    @property
    def weights(self):
        return self.corrected if self.corrected is not None else self.uncorrected

    def index_of(self, label):
        return self.labels.index(label)

    def to_frame(self, kind="corrected"):
        matrix = {"corrected": self.weights, "uncorrected": self.uncorrected,
                  "standard_error": self.standard_errors}[kind]
        frame = pd.DataFrame(matrix, index=list(self.labels), columns=list(self.labels))
        frame.index.name = "candidate"
        return frame

    def to_dict(self):
        data = {
            "subset": self.subset_label,
            "n_mc": self.n_mc,
            "labels": list(self.labels),
            "uncorrected": self.uncorrected.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "cross_weights": [
                {"reference": w.reference_id, "candidate": w.candidate_id,
                 "log_weight_sm1": w.log_weight_sm1, "log_weight_sm2": w.log_weight_sm2}
                for w in self.cross_weights
            ],
        }
        if self.corrected is not None:
            data["log_corrected_raw"] = np.where(np.isfinite(self.log_corrected_raw), self.log_corrected_raw, None).tolist()
            data["corrected"] = self.corrected.tolist()
        return data


def _prior_ensembles(candidates, space, observations, n_mc, seed, idx, include_measurement):
    # One shared set of prior realizations, stored as offsets from y0; each model reads its own columns
    samples = space.sample(n_mc, derive_seed(seed, 0))
    center = observations.values[idx]
    ensembles = []
    for candidate in candidates:
        columns = space.column_indices(candidate.surrogate.parameter_names)
        ensembles.append(candidate.surrogate.evaluate(samples[:, columns])[:, idx] - center)
    if include_measurement:
        rng = np.random.default_rng(derive_seed(seed, 1))
        sigma = observations.sigma[idx]
        ensembles.append(rng.standard_normal((n_mc, idx.size)) * sigma)
    return ensembles


def confusion_matrix(candidates, space, observations, n_mc, seed, data_subset=None,
                     include_measurement=True, apply_correction=True, parallelism=1):
    """
    Model confusion matrix over ``candidates`` (SurrogateCandidate) and optionally MD.

    Returns:
        ConfusionMatrix with rows and columns ordered as the candidates, MD last.
    """
    if not candidates:
        raise ConfusionMatrixError("At least one model is needed for a confusion matrix.")
    if n_mc < 2:
        raise ValueError(f"Monte-Carlo sample size must be >= 2, got {n_mc}.")
    idx = subset_indices(data_subset, observations.size)
    likelihood = LikelihoodSpec.for_observations(observations, data_subset)
    labels = tuple(c.model_id for c in candidates) + ((MEASUREMENT_LABEL,) if include_measurement else ())
    if len(set(labels)) != len(labels):
        raise ConfusionMatrixError(f"Model identifiers must be unique and differ from '{MEASUREMENT_LABEL}': {labels}")
    ensembles = _prior_ensembles(candidates, space, observations, n_mc, seed, idx, include_measurement)
    n = len(ensembles)
    subset_label = data_subset.label if data_subset is not None else "all"

    def column(c):
        log_bme = np.column_stack([_log_mean_likelihood(ensembles[c], ensembles[r], likelihood) for r in range(n)])
        if not np.all(np.isfinite(logsumexp(log_bme, axis=1))):
            raise ConfusionMatrixError(
                f"Every candidate has zero evidence for some realization of '{labels[c]}' ({subset_label})."
            )
        weights = np.exp(log_bme - logsumexp(log_bme, axis=1, keepdims=True))
        return weights.mean(axis=0), weights.std(axis=0, ddof=1) / math.sqrt(n_mc)

    with ThreadPoolExecutor(max_workers=max(1, parallelism), thread_name_prefix="Confusion") as pool:
        columns = list(pool.map(column, range(n)))
    uncorrected = np.column_stack([c[0] for c in columns])
    standard_errors = np.column_stack([c[1] for c in columns])

    log_raw, corrected, cross = None, None, []
    if apply_correction:
        with np.errstate(divide="ignore"):
            log_raw = np.log(uncorrected)
        measurement = LikelihoodSpec(observations.variances)
        n_models = len(candidates)
        log_factors = np.zeros((n_models, n_models))
        for c, reference in enumerate(candidates):
            for r, candidate in enumerate(candidates):
                weights = cross_correction(reference, candidate, measurement, data_subset)
                cross.append(weights)
                log_factors[r, c] = weights.log_factor
        self_factors = np.diag(log_factors)
        if not np.all(np.isfinite(self_factors)):
            raise ConfusionMatrixError(f"Self-correction factor is not finite ({subset_label}).")
        log_raw[:n_models, :n_models] += log_factors
        # Model factors relative to the column's self cell; the MD row carries none
        log_scaled = log_raw.copy()
        log_scaled[:n_models, :n_models] -= self_factors[None, :]
        if not np.all(np.isfinite(logsumexp(log_scaled, axis=0))):
            raise ConfusionMatrixError(f"Corrected confusion matrix has an all-zero column ({subset_label}).")
        corrected = np.exp(log_scaled - logsumexp(log_scaled, axis=0, keepdims=True))

    logger.info(f"Confusion matrix [{subset_label}] diagonal: "
                + ", ".join(f"{label}={v:.3f}" for label, v in zip(labels, np.diag(uncorrected))))
    return ConfusionMatrix(
        labels=labels,
        uncorrected=uncorrected,
        standard_errors=standard_errors,
        log_corrected_raw=log_raw,
        corrected=corrected,
        cross_weights=tuple(cross),
        n_mc=n_mc,
        subset_label=subset_label,
    )


def rmse_table(model_outputs, observations, data_subset=None):
    """
    Mean over collocation points of the root summed squared misfit between model output and y0, per quantity.

    Args:
        model_outputs: mapping model id -> original-model outputs (N_out x P).
        observations: ObservationSet on the same grid.
    """
    idx = set(subset_indices(data_subset, observations.size).tolist())
    rows = []
    for model_id, outputs in model_outputs.items():
        outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
        for quantity in observations.grid.quantities:
            q_idx = [i for i in observations.grid.indices_for(quantity) if i in idx]
            if not q_idx:
                continue
            residual = outputs[q_idx, :] - observations.values[q_idx, None]
            # Root of the summed squared misfit over the quantity's coordinates
            rmse = np.sqrt(np.sum(residual ** 2, axis=0))
            rows.append({"model": model_id, "quantity": quantity, "mean_rmse": float(rmse.mean()),
                         "n_collocation": outputs.shape[1]})
    return pd.DataFrame(rows, columns=["model", "quantity", "mean_rmse", "n_collocation"])
