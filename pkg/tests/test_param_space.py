import numpy as np
import pytest

from src.core.param_space import ParameterSpace, Prior1D, derive_seed, min_samples_for_degree
from src.utils.exceptions import PriorError


def test_sample_is_reproducible_and_inside_support():
    space = ParameterSpace((Prior1D.uniform("x", 0.0, 1.0),))
    first = space.sample(4, seed=7)
    assert first.shape == (4, 1)
    assert np.all((first >= 0.0) & (first <= 1.0))
    np.testing.assert_array_equal(first, space.sample(4, seed=7))
    assert not np.array_equal(first, space.sample(4, seed=8))


def test_samples_on_tiny_intervals_stay_inside(column_space):
    samples = column_space.sample(1000, seed=1)
    assert samples.shape == (1000, 4)
    for i, prior in enumerate(column_space.priors):
        assert samples[:, i].min() >= prior.lower
        assert samples[:, i].max() <= prior.upper


def test_sample_count_must_be_positive(unit_space):
    with pytest.raises(ValueError):
        unit_space.sample(0, seed=1)


@pytest.mark.parametrize("lower, upper", [(2.0, 2.0), (3.0, 1.0), (0.0, np.inf)])
def test_degenerate_uniform_interval_is_rejected(lower, upper):
    with pytest.raises(PriorError):
        Prior1D.uniform("x", lower, upper)


@pytest.mark.parametrize("lower, upper, order, expected", [
    (-1.0, 1.0, 0, 1.0),
    (-1.0, 1.0, 1, 0.0),
    (-1.0, 1.0, 2, 1.0 / 3.0),
    (0.0, 1.0, 3, 0.25),
])
def test_uniform_raw_moments(lower, upper, order, expected):
    assert Prior1D.uniform("x", lower, upper).raw_moment(order) == pytest.approx(expected, abs=1e-15)


def test_raw_moment_agrees_with_sampling():
    space = ParameterSpace((Prior1D.uniform("x", 0.0, 2.0),))
    squared = space.sample(10 ** 6, seed=3)[:, 0] ** 2
    standard_error = squared.std(ddof=1) / np.sqrt(squared.size)
    assert abs(squared.mean() - space.priors[0].raw_moment(2)) <= 4.0 * standard_error


def test_sample_set_moments_are_empirical():
    data = np.array([1.0, 2.0, 2.0, 3.0, 5.0, 8.0])
    prior = Prior1D.from_samples("x", data)
    assert (prior.lower, prior.upper) == (1.0, 8.0)
    assert prior.raw_moment(2) == pytest.approx(np.mean(data ** 2))
    assert prior.raw_moment(4) == pytest.approx(np.mean(data ** 4))
    with pytest.raises(PriorError, match="exceeds"):
        prior.raw_moment(5)


def test_sample_set_needs_enough_distinct_samples():
    with pytest.raises(PriorError):
        Prior1D.from_samples("x", [1.0, 2.0, 3.0, 4.0, 5.0])
    with pytest.raises(PriorError):
        Prior1D.from_samples("x", [1.0] * 8)
    assert min_samples_for_degree(2) == 8


def test_sample_set_prior_draws_members_and_has_density():
    data = np.linspace(0.0, 1.0, 20)
    space = ParameterSpace((Prior1D.from_samples("x", data),))
    draws = space.sample(100, seed=0)
    assert np.all(np.isin(draws, data))
    assert space.density([0.5]) > 0.0


def test_samples_file(tmp_path):
    path = tmp_path / "porosity.txt"
    path.write_text("0.31\n0.35\n0.36\n0.38\n0.40\n0.42\n0.44\n")
    prior = Prior1D.from_samples_file("porosity", str(path))
    assert prior.samples.size == 7
    assert prior.mean() == pytest.approx(np.mean([0.31, 0.35, 0.36, 0.38, 0.40, 0.42, 0.44]))
    with pytest.raises(PriorError, match="cannot read"):
        Prior1D.from_samples_file("porosity", str(tmp_path / "missing.txt"))


def test_joint_density_of_uniform_box():
    space = ParameterSpace((Prior1D.uniform("a", 0.0, 2.0), Prior1D.uniform("b", 0.0, 2.0)))
    assert space.density([1.0, 1.0]) == pytest.approx(0.25)
    assert space.density([3.0, 1.0]) == 0.0
    assert float(Prior1D.uniform("rho_f", 1.0, 15.0).pdf(8.0)) == pytest.approx(1.0 / 14.0)


def test_joint_density_integrates_to_one():
    space = ParameterSpace((Prior1D.uniform("a", 0.0, 2.0), Prior1D.uniform("b", 0.0, 2.0)))
    rng = np.random.default_rng(5)
    box = rng.uniform(-1.0, 3.0, size=(10 ** 6, 2))
    estimate = 16.0 * np.mean(np.exp(space.log_density(box)))
    assert estimate == pytest.approx(1.0, rel=0.01)


def test_log_density_outside_support_is_minus_infinity(square_space):
    values = square_space.log_density([[0.0, 0.0], [1.5, 0.0]])
    assert values[0] == pytest.approx(np.log(0.25))
    assert np.isneginf(values[1])


def test_subspace_keeps_requested_order(column_space):
    sub = column_space.subspace(["k_ub", "rho_f"])
    assert sub.names == ("k_ub", "rho_f")
    assert column_space.column_indices(["k_ub", "rho_f"]) == [3, 2]
    with pytest.raises(PriorError, match="Unknown parameter"):
        column_space.subspace(["porosity"])


def test_parameter_names_must_be_unique():
    with pytest.raises(PriorError, match="unique"):
        ParameterSpace((Prior1D.uniform("x", 0, 1), Prior1D.uniform("x", 0, 2)))


def test_derive_seed_gives_independent_streams():
    assert derive_seed(5, 1, 2) == [5, 1, 2]
    assert derive_seed([5, 1], 3) == [5, 1, 3]
    first = np.random.default_rng(derive_seed(5, 1)).random(3)
    second = np.random.default_rng(derive_seed(5, 2)).random(3)
    assert not np.allclose(first, second)
