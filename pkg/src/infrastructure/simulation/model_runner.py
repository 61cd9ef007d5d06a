import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from src.infrastructure.simulation.evaluation_cache import EvaluationCache
from src.infrastructure.simulation.external_command import ExternalCommandExecutor
from src.infrastructure.simulation.model_spec import BUILTIN, CACHE, FRESH, EvaluationRecord, canonical_key
from src.infrastructure.simulation.toy_models import evaluate_toy
from src.utils.exceptions import ModelEvaluationError

logger = logging.getLogger(__name__)


class ModelRunner:
    """
    所有模型的统一黑盒接口：内置解析模型与外部模拟程序。
    每次评估先查缓存；批量评估在线程池中并行执行，结果保持输入顺序。
    """
    def __init__(self, cache_dir=None, executor=None):
        """
        Args:
            cache_dir: JSON-lines 缓存目录；None 表示只缓存在内存中。
            executor: 外部命令执行器，默认为 ExternalCommandExecutor。
        """
        self._cache = EvaluationCache(cache_dir)
        self._executor = executor or ExternalCommandExecutor()
        self._fresh_executions = 0
        self._counter_lock = threading.Lock()
        logger.debug("ModelRunner initialized.")

    @property
    def cache(self):
        return self._cache

    @property
    def fresh_executions(self):
        """Number of model executions attempted (cache misses) since construction."""
        with self._counter_lock:
            return self._fresh_executions

    def evaluate_batch(self, model, points, parallelism=1):
        """
        Evaluate ``model`` at each row of ``points``.

        Returns:
            list of EvaluationRecord in input order. Failed points carry ``error``
            and no outputs; the rest of the batch is unaffected.
        """
        if parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {parallelism}.")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != len(model.parameters):
            raise ValueError(
                f"Model '{model.model_id}' consumes {len(model.parameters)} parameters, points have {points.shape[1]} columns."
            )
        start = time.perf_counter()
        if parallelism == 1 or points.shape[0] == 1:
            records = [self._evaluate_point(model, p) for p in points]
        else:
            with ThreadPoolExecutor(max_workers=parallelism, thread_name_prefix=f"Model-{model.model_id}") as pool:
                records = list(pool.map(lambda p: self._evaluate_point(model, p), points))

        cached = sum(r.provenance == CACHE for r in records)
        failed = sum(not r.ok for r in records)
        logger.info(
            f"Evaluated '{model.model_id}' at {len(records)} point(s): {cached} from cache, "
            f"{len(records) - cached - failed} fresh, {failed} failed ({time.perf_counter() - start:.2f} s)"
        )
        return records

    def _evaluate_point(self, model, point):
        key = canonical_key(point)
        hit = self._cache.get(model.model_id, key)
        if hit is not None:
            outputs, wall_time = hit
            logger.debug(f"Cache hit for '{model.model_id}' at [{key}]")
            return EvaluationRecord(model.model_id, tuple(float(v) for v in point), outputs, wall_time, CACHE)

        with self._counter_lock:
            self._fresh_executions += 1
        start = time.perf_counter()
        try:
            outputs = self._execute(model, point)
        except ModelEvaluationError as e:
            logger.warning(f"Model '{model.model_id}' failed at [{key}]: {e}")
            return EvaluationRecord.failure(model.model_id, point, time.perf_counter() - start, str(e))
        except Exception as e:
            logger.error(f"Unexpected error evaluating '{model.model_id}' at [{key}]: {e}", exc_info=True)
            return EvaluationRecord.failure(model.model_id, point, time.perf_counter() - start, f"{type(e).__name__}: {e}")
        wall_time = time.perf_counter() - start

        outputs = np.asarray(outputs, dtype=float).ravel()
        if outputs.size != model.grid.size:
            error = f"Expected {model.grid.size} output values, got {outputs.size}"
            logger.warning(f"Model '{model.model_id}' failed at [{key}]: {error}")
            return EvaluationRecord.failure(model.model_id, point, wall_time, error)
        if not np.all(np.isfinite(outputs)):
            error = "Model produced non-finite output values"
            logger.warning(f"Model '{model.model_id}' failed at [{key}]: {error}")
            return EvaluationRecord.failure(model.model_id, point, wall_time, error)

        self._cache.put(model.model_id, key, point, outputs, wall_time)
        logger.debug(f"Fresh evaluation of '{model.model_id}' at [{key}] took {wall_time:.3f} s")
        return EvaluationRecord(model.model_id, tuple(float(v) for v in point), outputs, wall_time, FRESH)

    def _execute(self, model, point):
        if model.kind == BUILTIN:
            return evaluate_toy(model.builtin, dict(zip(model.parameters, point)), model.grid)
        return self._executor.run(model, point)
