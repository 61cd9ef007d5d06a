import numpy as np
import pytest

from src.core.observations import DataSubset, ObservationSet, OutputCoordinate, OutputGrid, subset_indices
from src.infrastructure.simulation.observation_reader import read_observation_files, read_observations
from src.utils.exceptions import ObservationError


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_default_sigma_is_relative(tmp_path):
    path = _write(tmp_path, "calcium.csv", "space,time,value\n10.16,151.35,900\n10.16,218.85,-450\n")
    observations = read_observations(path, "calcium_concentration")
    np.testing.assert_allclose(observations.values, [900.0, -450.0])
    np.testing.assert_allclose(observations.sigma, [180.0, 90.0])
    assert observations.grid.coordinates[0] == OutputCoordinate("10.16", "151.35", "calcium_concentration")


def test_explicit_sigma_overrides_default(tmp_path):
    path = _write(tmp_path, "calcite.csv", "space,time,value,sigma\n3.81,890,0,0.05\n11.43,890,4.0,\n")
    observations = read_observations(path, "calcite_content", relative_error=0.1)
    np.testing.assert_allclose(observations.sigma, [0.05, 0.4])


def test_zero_value_without_sigma_is_rejected(tmp_path):
    path = _write(tmp_path, "calcite.csv", "space,time,value\n3.81,890,5.0\n11.43,890,0\n")
    with pytest.raises(ObservationError, match=r"line\(s\) \[3\]"):
        read_observations(path, "calcite_content")


@pytest.mark.parametrize("text, message", [
    ("space,time,value\n3.81,890,abc\n", "Non-numeric"),
    ("space,value\n3.81,5.0\n", "lacks column"),
    ("space,time,value\n", "no data rows"),
    ("", "empty"),
    ("space,time,value\n3.81,890,5.0\n3.81,890,6.0\n", "unique"),
])
def test_malformed_observation_files(tmp_path, text, message):
    path = _write(tmp_path, "bad.csv", text)
    with pytest.raises(ObservationError, match=message):
        read_observations(path, "calcite_content")


def test_missing_observation_file(tmp_path):
    with pytest.raises(ObservationError, match="not found"):
        read_observations(str(tmp_path / "nope.csv"), "calcite_content")


def test_files_are_merged_in_order(tmp_path):
    calcite = _write(tmp_path, "calcite.csv", "space,time,value\n3.81,890,5.0\n")
    calcium = _write(tmp_path, "calcium.csv", "space,time,value\n10.16,151.35,900\n20.32,151.35,800\n")
    observations = read_observation_files({"calcite_content": calcite, "calcium_concentration": calcium})
    assert observations.size == 3
    assert observations.grid.quantities == ("calcite_content", "calcium_concentration")
    with pytest.raises(ObservationError):
        read_observation_files({})


def test_data_subsets_take_leading_spatial_points(toy_grid):
    subset = toy_grid.data_subset("calcium_concentration", 1)
    assert subset.label == "calcium_concentration_1"
    assert [toy_grid.coordinates[i].space for i in subset.indices] == ["10.16", "10.16"]
    assert toy_grid.data_subset("calcite_content", 3).size == 3
    assert toy_grid.full_subset().indices == tuple(range(toy_grid.size))
    with pytest.raises(ObservationError):
        toy_grid.data_subset("calcium_concentration", 3)
    with pytest.raises(ObservationError):
        toy_grid.data_subset("porosity", 1)


def test_subset_indices_must_fit_the_grid():
    np.testing.assert_array_equal(subset_indices(None, 3), [0, 1, 2])
    np.testing.assert_array_equal(subset_indices(DataSubset("s", (2, 0)), 3), [2, 0])
    with pytest.raises(ObservationError):
        subset_indices(DataSubset("s", (3,)), 3)


def test_observation_set_validation():
    grid = OutputGrid.unlabeled(2)
    with pytest.raises(ObservationError, match="strictly positive"):
        ObservationSet(grid, [1.0, 2.0], [0.1, 0.0])
    with pytest.raises(ObservationError, match="length"):
        ObservationSet(grid, [1.0], [0.1])
    with pytest.raises(ObservationError, match="finite"):
        ObservationSet(grid, [1.0, np.nan], [0.1, 0.1])


def test_shipped_observations_cover_five_calcium_positions(shipped_observations_dir):
    observations = read_observation_files({
        "calcite_content": f"{shipped_observations_dir}/calcite_content.csv",
        "calcium_concentration": f"{shipped_observations_dir}/calcium_concentration.csv",
    })
    assert observations.size == 38
    assert len(observations.grid.spatial_labels("calcium_concentration")) == 5
    assert len(observations.grid.spatial_labels("calcite_content")) == 8
