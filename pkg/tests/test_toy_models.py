import numpy as np
import pytest

from src.core.observations import OutputCoordinate, OutputGrid
from src.infrastructure.simulation.toy_models import (
    CALCITE,
    CALCIUM,
    CAPACITY,
    INJECTED,
    TOY_MODELS,
    evaluate_toy,
    fc_activity,
    ib_activity,
    profiles,
    required_parameters,
    sc_activity,
)


def test_boundary_values_of_the_profiles():
    grid = OutputGrid((OutputCoordinate("20", "0", CALCITE), OutputCoordinate("0", "500", CALCIUM)))
    np.testing.assert_allclose(profiles(0.7, grid), [0.0, INJECTED])


def test_profiles_respond_to_activity(toy_grid):
    low = profiles(0.2, toy_grid)
    high = profiles(0.6, toy_grid)
    calcite = list(toy_grid.indices_for(CALCITE))
    calcium = list(toy_grid.indices_for(CALCIUM))
    assert np.all(high[calcite] > low[calcite])
    assert np.all(high[calcium] < low[calcium])
    assert np.all((high[calcite] > 0.0) & (high[calcite] < CAPACITY))


def test_unknown_quantity_is_rejected():
    grid = OutputGrid((OutputCoordinate("1", "1", "porosity"),))
    with pytest.raises(ValueError, match="porosity"):
        profiles(0.5, grid)


def test_initial_biofilm_is_full_complexity_without_attachment(reference_point):
    parameters = dict(reference_point, ca1=0.0, ca2=0.0)
    assert fc_activity(parameters) == pytest.approx(ib_activity(parameters))
    assert fc_activity(reference_point) > ib_activity(reference_point)


def test_simple_chemistry_activity_is_nearly_fixed():
    low = {"ca1": 1e-10, "ca2": 1e-10, "rho_f": 1.0, "k_ub": 1e-5}
    high = {"ca1": 1e-7, "ca2": 1e-6, "rho_f": 15.0, "k_ub": 5e-4}
    assert 0.35 <= sc_activity(low) < sc_activity(high) <= 0.40 + 1e-12


def test_evaluate_toy(toy_grid, reference_point):
    values = evaluate_toy("toy-ib", {"rho_f": 8.0, "k_ub": 2.5e-4, "unused": 1.0}, toy_grid)
    assert values.shape == (toy_grid.size,)
    assert set(required_parameters("toy-ib")) == {"rho_f", "k_ub"}
    assert sorted(TOY_MODELS) == ["toy-fc", "toy-ib", "toy-sc"]
    with pytest.raises(ValueError, match="needs parameters"):
        evaluate_toy("toy-fc", {"rho_f": 8.0, "k_ub": 2.5e-4}, toy_grid)
    with pytest.raises(ValueError, match="Unknown toy model"):
        evaluate_toy("toy-xx", reference_point, toy_grid)
