import logging
import os

import numpy as np
import pandas as pd

from src.core.observations import ObservationSet, OutputCoordinate, OutputGrid
from src.utils.exceptions import ObservationError

logger = logging.getLogger(__name__)

DEFAULT_RELATIVE_ERROR = 0.2
REQUIRED_COLUMNS = ("space", "time", "value")
SIGMA_COLUMN = "sigma"


def read_observations(path, quantity, relative_error=DEFAULT_RELATIVE_ERROR):
    """
    Read one quantity's measurements from a CSV file with columns space, time, value[, sigma].

    sigma defaults to relative_error * |value| per row; a non-empty sigma cell overrides it.

    Raises:
        ObservationError: missing/empty file, missing columns, non-numeric entries,
            or a zero measurement without an explicit sigma.
    """
    if not os.path.isfile(path):
        raise ObservationError(f"Observation file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, comment="#")
    except pd.errors.EmptyDataError:
        raise ObservationError(f"Observation file is empty: {path}") from None
    except pd.errors.ParserError as e:
        raise ObservationError(f"Cannot parse observation file {path}: {e}") from e

    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise ObservationError(f"Observation file {path} lacks column(s) {missing}")
    if frame.empty:
        raise ObservationError(f"Observation file has no data rows: {path}")

    values = _numeric_column(frame, "value", path)
    if values.isna().any():
        rows = (values[values.isna()].index + 2).tolist()
        raise ObservationError(f"Missing measurement value in {path}, line(s) {rows}")

    sigma = (relative_error * values.abs()).to_numpy(dtype=float)
    if SIGMA_COLUMN in frame.columns:
        explicit = _numeric_column(frame, SIGMA_COLUMN, path)
        sigma = np.where(explicit.notna(), explicit.to_numpy(dtype=float), sigma)
        if np.any(explicit.notna() & (explicit <= 0)):
            raise ObservationError(f"Explicit sigma must be > 0 in {path}")
    zero = sigma <= 0
    if np.any(zero):
        rows = (np.flatnonzero(zero) + 2).tolist()
        raise ObservationError(
            f"Zero measurement with the default {relative_error:.0%} relative error in {path}, line(s) {rows}: "
            f"give an explicit '{SIGMA_COLUMN}' for these rows"
        )

    grid = OutputGrid(tuple(
        OutputCoordinate(str(s).strip(), str(t).strip(), quantity) for s, t in zip(frame["space"], frame["time"])
    ))
    logger.info(f"Read {grid.size} '{quantity}' observations from {path}")
    return ObservationSet(grid, values.to_numpy(dtype=float), sigma)


def _numeric_column(frame, column, path):
    raw = frame[column].str.strip()
    numeric = pd.to_numeric(raw, errors="coerce")
    bad = numeric.isna() & raw.notna() & (raw != "")
    if bad.any():
        rows = (numeric[bad].index + 2).tolist()
        raise ObservationError(f"Non-numeric '{column}' entries in {path}, line(s) {rows}: {raw[bad].tolist()}")
    return numeric


def read_observation_files(files, relative_error=DEFAULT_RELATIVE_ERROR):
    """Merge per-quantity files ({quantity: path}) into one ObservationSet, in the given order."""
    merged = None
    for quantity, path in files.items():
        observations = read_observations(path, quantity, relative_error)
        merged = observations if merged is None else merged.concat(observations)
    if merged is None:
        raise ObservationError("No observation files given.")
    return merged
