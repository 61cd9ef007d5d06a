import json
import logging
import os
import re
import threading

import numpy as np

logger = logging.getLogger(__name__)

CACHE_FILE_SUFFIX = ".jsonl"

# Characters allowed in a cache file name; everything else becomes '_'
_UNSAFE_CHARS = re.compile(r"[^A-Za-z0-9_.-]")


class EvaluationCache:
    """
    模型评估结果缓存：每个模型一个只追加的 JSON-lines 文件。
    同一 (模型, 参数向量) 只会被真实执行一次。cache_dir 为 None 时只保存在内存中。
    """
    def __init__(self, cache_dir=None):
        self._cache_dir = cache_dir
        self._entries = {}  # model id -> {key: (outputs, wall_time)}
        self._lock = threading.Lock()
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)
        logger.debug(f"EvaluationCache initialized (directory: {cache_dir or '<memory>'})")

    @property
    def cache_dir(self):
        return self._cache_dir

    def _path(self, model_id):
        return os.path.join(self._cache_dir, _UNSAFE_CHARS.sub("_", model_id) + CACHE_FILE_SUFFIX)

    def _load(self, model_id):
        # Caller holds the lock
        if model_id in self._entries:
            return self._entries[model_id]
        entries = {}
        if self._cache_dir and os.path.exists(self._path(model_id)):
            with open(self._path(model_id), "r", encoding="utf-8") as f:
                for line_no, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        entries[record["key"]] = (np.asarray(record["outputs"], dtype=float), float(record["wall_time"]))
                    except (ValueError, KeyError, TypeError) as e:
                        # A torn last line from an interrupted run
                        logger.warning(f"Skipping unreadable cache line {line_no} in {self._path(model_id)}: {e}")
            logger.info(f"Loaded {len(entries)} cached evaluations for model '{model_id}'")
        self._entries[model_id] = entries
        return entries

    def get(self, model_id, key):
        with self._lock:
            hit = self._load(model_id).get(key)
        if hit is None:
            return None
        return hit[0].copy(), hit[1]

    def put(self, model_id, key, parameters, outputs, wall_time):
        """Store one successful evaluation. Failures are never cached."""
        outputs = np.asarray(outputs, dtype=float)
        with self._lock:
            entries = self._load(model_id)
            if key in entries:
                return
            entries[key] = (outputs.copy(), float(wall_time))
            if self._cache_dir:
                line = json.dumps({
                    "key": key,
                    "parameters": [float(v) for v in parameters],
                    "outputs": outputs.tolist(),
                    "wall_time": float(wall_time),
                })
                with open(self._path(model_id), "a", encoding="utf-8") as f:
                    f.write(line + "\n")

    def size(self, model_id):
        with self._lock:
            return len(self._load(model_id))

    def reload(self):
        """Forget in-memory entries; the next access re-reads the files."""
        with self._lock:
            self._entries.clear()
        logger.debug("Evaluation cache cleared from memory, will reload from disk")
