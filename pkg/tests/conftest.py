import configparser
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Make 'src' importable the same way main.py does
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from src.core.observations import ObservationSet, OutputCoordinate, OutputGrid  # noqa: E402
from src.core.param_space import ParameterSpace, Prior1D  # noqa: E402
from src.infrastructure.simulation.toy_models import CALCITE, CALCIUM, evaluate_toy  # noqa: E402

SHIPPED_OBSERVATIONS_DIR = os.path.join(PROJECT_ROOT, "config", "observations")

PARAMETER_BOUNDS = {
    "ca1": (1e-10, 1e-7),
    "ca2": (1e-10, 1e-6),
    "rho_f": (1.0, 15.0),
    "k_ub": (1e-5, 5e-4),
}
SC_REFERENCE_POINT = {"ca1": 5e-8, "ca2": 5e-7, "rho_f": 8.0, "k_ub": 2.5e-4}

CALCITE_SPACES = ("3.81", "19.05", "34.29")
CALCIUM_SPACES = ("10.16", "30.48")
CALCIUM_TIMES = ("151.35", "866.85")


@pytest.fixture
def reference_point():
    return dict(SC_REFERENCE_POINT)


@pytest.fixture(scope="session")
def shipped_observations_dir():
    return SHIPPED_OBSERVATIONS_DIR


@pytest.fixture
def unit_space():
    return ParameterSpace((Prior1D.uniform("w", -1.0, 1.0),))


@pytest.fixture
def square_space():
    return ParameterSpace((Prior1D.uniform("x", -1.0, 1.0), Prior1D.uniform("y", -1.0, 1.0)))


@pytest.fixture
def column_space():
    return ParameterSpace(tuple(Prior1D.uniform(name, lo, hi) for name, (lo, hi) in PARAMETER_BOUNDS.items()))


@pytest.fixture
def toy_grid():
    calcite = [OutputCoordinate(x, "890", CALCITE) for x in CALCITE_SPACES]
    calcium = [OutputCoordinate(x, t, CALCIUM) for x in CALCIUM_SPACES for t in CALCIUM_TIMES]
    return OutputGrid(tuple(calcite + calcium))


@pytest.fixture
def toy_observations(toy_grid):
    values = evaluate_toy("toy-sc", SC_REFERENCE_POINT, toy_grid) * 1.02
    return ObservationSet(toy_grid, values, 0.2 * np.abs(values))


def _write_observation_files(directory):
    os.makedirs(directory, exist_ok=True)
    calcite_grid = OutputGrid(tuple(OutputCoordinate(x, "890", CALCITE) for x in CALCITE_SPACES))
    calcium_grid = OutputGrid(tuple(
        OutputCoordinate(x, t, CALCIUM) for x in CALCIUM_SPACES for t in CALCIUM_TIMES
    ))
    for name, grid in (("calcite.csv", calcite_grid), ("calcium.csv", calcium_grid)):
        values = evaluate_toy("toy-sc", SC_REFERENCE_POINT, grid) * 1.02
        frame = pd.DataFrame({
            "space": [c.space for c in grid.coordinates],
            "time": [c.time for c in grid.coordinates],
            "value": np.round(values, 4),
        })
        frame.to_csv(os.path.join(directory, name), index=False, lineterminator="\n")


def _base_sections():
    sections = {
        "General": {"log_level": "INFO", "output_dir": "results", "cache_dir": "cache", "parallelism": "2"},
        "Analysis": {
            "degree": "2", "n_updates": "2", "n_mc_bms": "1000", "n_mc_justify": "300",
            "n_mc_bapc": "500", "seed": "7", "max_proposals": "5", "relative_error": "0.2",
        },
        "Observations": {"calcite_content": "obs/calcite.csv", "calcium_concentration": "obs/calcium.csv"},
        "DataSubsets": {"calcium_concentration": "1, 2", "calcite_content": "1, 3"},
    }
    for name, (lo, hi) in PARAMETER_BOUNDS.items():
        sections[f"Parameter {name}"] = {"kind": "uniform", "lower": repr(lo), "upper": repr(hi)}
    sections["Model FC"] = {"kind": "builtin", "builtin": "toy-fc", "parameters": "ca1, ca2, rho_f, k_ub"}
    sections["Model IB"] = {"kind": "builtin", "builtin": "toy-ib", "parameters": "rho_f, k_ub"}
    sections["Model SC"] = {"kind": "builtin", "builtin": "toy-sc", "parameters": "ca1, ca2, rho_f, k_ub"}
    return sections


@pytest.fixture(scope="session")
def config_factory(tmp_path_factory):
    """
    Builds an analysis config in a fresh directory and returns its path.

    ``overrides`` maps section names to dicts merged into the base section;
    a None section removes it, a None key removes that key.
    """
    def build(overrides=None):
        directory = tmp_path_factory.mktemp("analysis")
        _write_observation_files(os.path.join(directory, "obs"))
        sections = _base_sections()
        for name, values in (overrides or {}).items():
            if values is None:
                sections.pop(name, None)
                continue
            merged = sections.setdefault(name, {})
            for key, value in values.items():
                if value is None:
                    merged.pop(key, None)
                else:
                    merged[key] = str(value)
        parser = configparser.ConfigParser(interpolation=None)
        for name, values in sections.items():
            parser[name] = values
        path = os.path.join(directory, "analysis.ini")
        with open(path, "w", encoding="utf-8") as f:
            parser.write(f)
        return path

    return build
