import json
import logging
import math
import os

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# Fixed float format so reruns produce byte-identical CSV files
CSV_FLOAT_FORMAT = "%.12g"


def to_jsonable(value):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class ReportWriter:
    """
    把分析结果写入输出目录：CSV（pandas）和 JSON，并记录所有生成的文件。
    """
    def __init__(self, output_dir):
        self._output_dir = output_dir
        self._artifacts = set()
        os.makedirs(output_dir, exist_ok=True)

    @property
    def output_dir(self):
        return self._output_dir

    @property
    def artifacts(self):
        return sorted(self._artifacts)

    def path(self, relative_path):
        return os.path.join(self._output_dir, relative_path)

    def exists(self, relative_path):
        return os.path.isfile(self.path(relative_path))

    def _prepare(self, relative_path):
        full_path = self.path(relative_path)
        os.makedirs(os.path.dirname(full_path), exist_ok=True)
        self._artifacts.add(relative_path.replace(os.sep, "/"))
        return full_path

    def write_json(self, relative_path, data):
        full_path = self._prepare(relative_path)
        with open(full_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.debug(f"Wrote {full_path}")
        return full_path

    def write_frame(self, relative_path, frame, index=False):
        full_path = self._prepare(relative_path)
        frame.to_csv(full_path, index=index, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        logger.debug(f"Wrote {full_path} ({len(frame)} rows)")
        return full_path

    def read_json(self, relative_path):
        with open(self.path(relative_path), "r", encoding="utf-8") as f:
            return json.load(f)

    def read_frame(self, relative_path, **kwargs):
        return pd.read_csv(self.path(relative_path), **kwargs)
