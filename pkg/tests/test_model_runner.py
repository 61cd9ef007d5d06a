import sys
import textwrap

import numpy as np
import pytest

from src.core.observations import OutputGrid
from src.infrastructure.simulation.evaluation_cache import EvaluationCache
from src.infrastructure.simulation.external_command import parse_output_values, write_parameter_file
from src.infrastructure.simulation.model_runner import ModelRunner
from src.infrastructure.simulation.model_spec import BUILTIN, CACHE, EXTERNAL, FRESH, ModelSpec, canonical_key
from src.infrastructure.simulation.toy_models import evaluate_toy
from src.utils.exceptions import ModelEvaluationError

SIMULATOR = textwrap.dedent("""
    import sys
    import time

    params = dict(line.strip().split("=", 1) for line in open(sys.argv[1]) if line.strip())
    x = float(params["x"])
    if x < 0:
        sys.stderr.write("negative input\\n")
        sys.exit(3)
    if x > 100:
        time.sleep(5)
    values = [2 * x, x * x] if x != 7 else [2 * x]
    text = "\\n".join(repr(v) for v in values) + "\\n"
    if len(sys.argv) > 2:
        with open(sys.argv[2], "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
""")


@pytest.fixture
def simulator(tmp_path):
    path = tmp_path / "simulator.py"
    path.write_text(SIMULATOR)
    return str(path)


def _external(simulator, use_output_file=True, timeout_seconds=60.0):
    command = (sys.executable, simulator, "{params_file}") + (("{output_file}",) if use_output_file else ())
    return ModelSpec("ext", EXTERNAL, ("x",), OutputGrid.unlabeled(2), command=command, timeout_seconds=timeout_seconds)


@pytest.fixture
def toy_model(toy_grid):
    return ModelSpec("SC", BUILTIN, ("ca1", "ca2", "rho_f", "k_ub"), toy_grid, builtin="toy-sc")


def test_canonical_key_round_trips_floats():
    assert canonical_key(np.array([0.1, 1e-7])) == "0.1,1e-07"
    assert canonical_key([1, 2.5]) == "1.0,2.5"


def test_builtin_batch_keeps_order_and_uses_cache(toy_model, toy_grid, column_space):
    runner = ModelRunner()
    points = column_space.sample(3, seed=1)
    records = runner.evaluate_batch(toy_model, points, parallelism=2)
    assert [r.provenance for r in records] == [FRESH] * 3
    for record, point in zip(records, points):
        np.testing.assert_allclose(record.outputs, evaluate_toy("toy-sc", dict(zip(toy_model.parameters, point)), toy_grid))
    again = runner.evaluate_batch(toy_model, points)
    assert [r.provenance for r in again] == [CACHE] * 3
    assert runner.fresh_executions == 3


def test_cache_persists_across_runners(tmp_path, toy_model, column_space):
    points = column_space.sample(2, seed=2)
    first = ModelRunner(cache_dir=str(tmp_path / "cache"))
    first.evaluate_batch(toy_model, points)
    second = ModelRunner(cache_dir=str(tmp_path / "cache"))
    records = second.evaluate_batch(toy_model, points)
    assert second.fresh_executions == 0
    assert all(r.provenance == CACHE for r in records)
    assert second.cache.size("SC") == 2


def test_cache_skips_torn_lines(tmp_path):
    cache = EvaluationCache(str(tmp_path))
    cache.put("M", "0.5", [0.5], [1.0, 2.0], 0.1)
    with open(tmp_path / "M.jsonl", "a", encoding="utf-8") as f:
        f.write('{"key": "0.7", "outp')
    reloaded = EvaluationCache(str(tmp_path))
    outputs, wall_time = reloaded.get("M", "0.5")
    np.testing.assert_array_equal(outputs, [1.0, 2.0])
    assert reloaded.get("M", "0.7") is None
    assert reloaded.size("M") == 1


def test_batch_rejects_wrong_parameter_count(toy_model):
    with pytest.raises(ValueError, match="consumes 4 parameters"):
        ModelRunner().evaluate_batch(toy_model, np.zeros((2, 3)))


def test_external_model_failures_are_isolated(simulator):
    runner = ModelRunner()
    model = _external(simulator)
    records = runner.evaluate_batch(model, [[1.0], [-1.0], [2.0]], parallelism=2)
    np.testing.assert_allclose(records[0].outputs, [2.0, 1.0])
    assert not records[1].ok
    assert "return code 3" in records[1].error
    assert "negative input" in records[1].error
    np.testing.assert_allclose(records[2].outputs, [4.0, 4.0])
    assert runner.cache.get("ext", canonical_key([-1.0])) is None
    assert runner.cache.get("ext", canonical_key([1.0])) is not None


def test_external_model_reading_stdout(simulator):
    records = ModelRunner().evaluate_batch(_external(simulator, use_output_file=False), [[3.0]])
    np.testing.assert_allclose(records[0].outputs, [6.0, 9.0])


def test_external_model_with_wrong_output_count(simulator):
    record = ModelRunner().evaluate_batch(_external(simulator), [[7.0]])[0]
    assert record.error == "Expected 2 output values, got 1"


def test_external_model_timeout(simulator):
    record = ModelRunner().evaluate_batch(_external(simulator, timeout_seconds=0.5), [[200.0]])[0]
    assert "timed out" in record.error


def test_missing_external_command():
    model = ModelSpec("ghost", EXTERNAL, ("x",), OutputGrid.unlabeled(1),
                      command=("model-justifier-missing-binary", "{params_file}"))
    record = ModelRunner().evaluate_batch(model, [[1.0]])[0]
    assert not record.ok
    assert "not found" in record.error


def test_parameter_file_and_output_parsing(tmp_path):
    path = tmp_path / "params.txt"
    write_parameter_file(str(path), ("ca1", "rho_f"), [1e-8, 7.5])
    assert path.read_text() == "ca1=1e-08\nrho_f=7.5\n"
    np.testing.assert_array_equal(parse_output_values("1.0\n\n2.5\n", 2), [1.0, 2.5])
    with pytest.raises(ModelEvaluationError, match="line 2"):
        parse_output_values("1.0\nnan-ish\n", 2)


def test_model_spec_validation(toy_grid):
    with pytest.raises(ValueError, match="unknown kind"):
        ModelSpec("X", "docker", ("x",), toy_grid)
    with pytest.raises(ValueError, match="command missing"):
        ModelSpec("X", EXTERNAL, ("x",), toy_grid)
    with pytest.raises(ValueError, match="timeout"):
        ModelSpec("X", EXTERNAL, ("x",), toy_grid, command=("run",), timeout_seconds=0)
