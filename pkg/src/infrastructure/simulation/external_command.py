import logging
import os
import shutil
import subprocess
import tempfile

import numpy as np

from src.utils.exceptions import ModelEvaluationError

# Get logger for this module
logger = logging.getLogger(__name__)

# --- Constants ---
PARAMS_FILE_PLACEHOLDER = "{params_file}"
OUTPUT_FILE_PLACEHOLDER = "{output_file}"
PARAMS_FILE_NAME = "parameters.txt"
OUTPUT_FILE_NAME = "outputs.txt"

# Characters of stderr kept in a failure message
STDERR_TAIL = 500


def write_parameter_file(path, names, point):
    """One ``name=value`` line per parameter, values in shortest round-trippable form."""
    with open(path, "w", encoding="utf-8") as f:
        for name, value in zip(names, point):
            f.write(f"{name}={float(value)!r}\n")


def parse_output_values(text, expected):
    """One real per line, in output-grid order. Blank lines are ignored."""
    values = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ModelEvaluationError(f"Unparsable output value on line {line_no}: '{line[:80]}'") from None
    if len(values) != expected:
        raise ModelEvaluationError(f"Expected {expected} output values, got {len(values)}")
    return np.asarray(values, dtype=float)


class ExternalCommandExecutor:
    """
    通过外部命令运行一个模型：写入参数文件，调用命令，读取输出文件（或标准输出）。
    每次运行使用独立的临时目录，结束后删除。
    """
    def run(self, model, point):
        """
        在单个参数点上执行外部模型。

        Args:
            model: ModelSpec (kind external)。
            point: 参数向量，顺序与 model.parameters 一致。

        Returns:
            长度为 N_out 的输出向量。

        Raises:
            ModelEvaluationError: 命令不存在、超时、非零退出码或输出无法解析。
        """
        if model.workdir and not os.path.isdir(model.workdir):
            raise ModelEvaluationError(f"Working directory '{model.workdir}' does not exist")
        run_dir = tempfile.mkdtemp(prefix=f"{model.model_id}_", dir=model.workdir)
        try:
            params_file = os.path.join(run_dir, PARAMS_FILE_NAME)
            output_file = os.path.join(run_dir, OUTPUT_FILE_NAME)
            write_parameter_file(params_file, model.parameters, point)
            uses_output_file = any(OUTPUT_FILE_PLACEHOLDER in arg for arg in model.command)
            command = [
                arg.replace(PARAMS_FILE_PLACEHOLDER, params_file).replace(OUTPUT_FILE_PLACEHOLDER, output_file)
                for arg in model.command
            ]
            logger.debug(f"Running model '{model.model_id}' with command: {' '.join(command)}")

            try:
                result = subprocess.run(
                    command,
                    capture_output=True,
                    text=True,
                    check=False,  # Non-zero exit codes are handled below
                    shell=False,
                    cwd=model.workdir or run_dir,
                    timeout=model.timeout_seconds,
                )
            except FileNotFoundError:
                raise ModelEvaluationError(f"Command '{command[0]}' not found. Ensure it is on PATH.") from None
            except subprocess.TimeoutExpired:
                raise ModelEvaluationError(f"Command timed out after {model.timeout_seconds} s") from None

            logger.debug(f"Model '{model.model_id}' command executed. Return code: {result.returncode}")
            if result.stderr:
                logger.debug(f"Model '{model.model_id}' stderr:\n{result.stderr.strip()}")

            if result.returncode != 0:
                tail = result.stderr.strip()[-STDERR_TAIL:]
                raise ModelEvaluationError(f"Command failed with return code {result.returncode}: {tail}")

            if uses_output_file:
                if not os.path.exists(output_file):
                    raise ModelEvaluationError(f"Command did not write the output file {OUTPUT_FILE_NAME}")
                with open(output_file, "r", encoding="utf-8") as f:
                    text = f.read()
            else:
                text = result.stdout
            return parse_output_values(text, model.grid.size)
        finally:
            shutil.rmtree(run_dir, ignore_errors=True)
