"""
Bayesian updating of the collocation set.

Each iteration proposes the maximum a-posteriori point of the current
surrogate among a fresh batch of prior samples, runs the original model there,
appends the point and refits.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.core.bayes import LikelihoodSpec
from src.core.observations import subset_indices
from src.core.param_space import derive_seed
from src.core.poly_basis import BAPC_UPDATE
from src.core.surrogate import loocv_error, solve_coefficients
from src.utils.exceptions import LoocvError

logger = logging.getLogger(__name__)

# Proposals closer than this (relative, per coordinate) to a collocation point are skipped
DUPLICATE_RTOL = 1e-6
DEFAULT_MAX_PROPOSALS = 10


@dataclass(frozen=True)
class UpdateRecord:
    iteration: int
    point: tuple
    log_posterior_score: float
    n_collocation: int
    loocv_mean: float
    loocv_per_quantity: dict
    skipped: tuple = ()


@dataclass(frozen=True)
class UpdateTrace:
    """Per-iteration history of one model's collocation updates."""
    model_id: str
    parameter_names: tuple
    records: tuple = field(default_factory=tuple)
    aborted: bool = False

    @property
    def n_updates(self):
        return len(self.records)

    def to_frame(self):
        rows = []
        for r in self.records:
            row = {"iteration": r.iteration, "n_collocation": r.n_collocation,
                   "log_posterior_score": r.log_posterior_score, "loocv_mean": r.loocv_mean,
                   "skipped_proposals": len(r.skipped)}
            row.update({name: value for name, value in zip(self.parameter_names, r.point)})
            for quantity, summary in r.loocv_per_quantity.items():
                row[f"loocv_relative_{quantity}"] = summary["mean_relative"]
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "parameter_names": list(self.parameter_names),
            "aborted": self.aborted,
            "records": [
                {
                    "iteration": r.iteration,
                    "point": list(r.point),
                    "log_posterior_score": r.log_posterior_score,
                    "n_collocation": r.n_collocation,
                    "loocv_mean": r.loocv_mean,
                    "loocv_per_quantity": r.loocv_per_quantity,
                    "skipped": [list(p) for p in r.skipped],
                }
                for r in self.records
            ],
        }


def _loocv_summary(surrogate):
    try:
        report = loocv_error(surrogate.basis, surrogate.collocation, surrogate.model_outputs, surrogate.grid)
    except LoocvError:
        return float("nan"), {}
    return report.mean, report.per_quantity()


def bapc_update(surrogate, model, space, observations, n_updates, n_mc, seed, runner,
                max_proposals=DEFAULT_MAX_PROPOSALS, data_subset=None):
    """
    Grow the collocation set of ``surrogate`` by ``n_updates`` points.

    Args:
        surrogate: current Surrogate of ``model``.
        model: ModelSpec run by ``runner`` at each accepted proposal.
        space: ParameterSpace containing the surrogate's parameters.
        observations: ObservationSet with y0 and R.
        n_updates: number of points to add (>= 0).
        n_mc: prior samples scored per iteration.
        seed: base seed; iteration i uses derive_seed(seed, i).
        runner: object with ``evaluate_batch(model, points, parallelism)``.
        max_proposals: failed model runs tolerated per iteration before aborting.
        data_subset: coordinates entering the likelihood (all when omitted).

    Returns:
        (Surrogate, UpdateTrace). An aborted update returns the last good surrogate
        and a partial trace flagged ``aborted``.
    """
    if n_updates < 0:
        raise ValueError(f"n_updates must be >= 0, got {n_updates}.")
    names = surrogate.parameter_names
    subspace = space.subspace(names)
    idx = subset_indices(data_subset, observations.size)
    likelihood = LikelihoodSpec.for_observations(observations, data_subset)
    y0 = observations.values[idx]

    current = surrogate
    records = []
    for iteration in range(1, n_updates + 1):
        samples = subspace.sample(n_mc, derive_seed(seed, iteration))
        scores = likelihood.log_density(y0 - current.evaluate(samples)[:, idx]) + subspace.log_density(samples)
        order = np.argsort(-scores, kind="stable")

        accepted = None
        skipped = []
        for j in order:
            candidate = samples[j]
            if current.collocation.contains_near(candidate, DUPLICATE_RTOL):
                continue
            if len(skipped) >= max_proposals:
                break
            record = runner.evaluate_batch(model, candidate.reshape(1, -1), parallelism=1)[0]
            if not record.ok:
                logger.warning(f"{model.model_id}: proposal {candidate.tolist()} failed ({record.error}), trying next-best")
                skipped.append(tuple(candidate.tolist()))
                continue
            accepted = (j, record)
            break

        if accepted is None:
            logger.error(f"{model.model_id}: no usable proposal in iteration {iteration} after {len(skipped)} failure(s); aborting update")
            return current, UpdateTrace(model.model_id, names, tuple(records), aborted=True)

        j, record = accepted
        collocation = current.collocation.append(samples[j], BAPC_UPDATE)
        outputs = np.column_stack([current.model_outputs, record.outputs])
        current = solve_coefficients(current.basis, collocation, outputs, current.grid)
        loocv_mean, per_quantity = _loocv_summary(current)
        records.append(UpdateRecord(
            iteration=iteration,
            point=tuple(samples[j].tolist()),
            log_posterior_score=float(scores[j]),
            n_collocation=collocation.size,
            loocv_mean=loocv_mean,
            loocv_per_quantity=per_quantity,
            skipped=tuple(skipped),
        ))
        logger.info(f"{model.model_id}: update {iteration}/{n_updates}, P={collocation.size}, LOOCV={loocv_mean:.4g}")

    return current, UpdateTrace(model.model_id, names, tuple(records))
