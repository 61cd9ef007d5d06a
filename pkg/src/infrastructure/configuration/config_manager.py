import configparser
import hashlib
import logging
import os
import shlex
from dataclasses import dataclass

from src.core.param_space import SAMPLES, UNIFORM, ParameterSpace, Prior1D, min_samples_for_degree
from src.core.poly_basis import expansion_size
from src.infrastructure.simulation.model_spec import BUILTIN, DEFAULT_TIMEOUT_SECONDS, EXTERNAL, ModelSpec
from src.infrastructure.simulation.observation_reader import read_observations
from src.infrastructure.simulation.toy_models import TOY_MODELS, required_parameters
from src.utils.exceptions import ConfigValidationError, ModelJustifierError
from src.utils.logging_config import VALID_LOG_LEVELS

# 获取当前模块的 logger
logger = logging.getLogger(__name__)

# --- 常量定义 ---
CONFIG_DIR_NAME = "config"
CONFIG_FILE_NAME = "analysis_config.ini"

# 此文件位于 [project_root]/src/infrastructure/configuration/
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

CONFIG_FILE_PATH = os.path.join(PROJECT_ROOT, CONFIG_DIR_NAME, CONFIG_FILE_NAME)

CACHE_DIR_ENV = "MODEL_JUSTIFIER_CACHE_DIR"

# 配置文件 section 名称
SECTION_GENERAL = "General"
SECTION_ANALYSIS = "Analysis"
SECTION_OBSERVATIONS = "Observations"
SECTION_DATA_SUBSETS = "DataSubsets"
PARAMETER_SECTION_PREFIX = "Parameter "
MODEL_SECTION_PREFIX = "Model "

# General section keys
KEY_LOG_LEVEL = "log_level"
KEY_OUTPUT_DIR = "output_dir"
KEY_CACHE_DIR = "cache_dir"
KEY_PARALLELISM = "parallelism"

DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_OUTPUT_DIR = "results"
DEFAULT_CACHE_DIR = "cache"

# Analysis section keys: name -> (type, default, minimum)
ANALYSIS_KEYS = {
    "degree": (int, 2, 1),
    "n_updates": (int, 10, 0),
    "initial_points": (int, None, 1),
    "n_mc_bms": (int, 10000, 1000),
    "n_mc_justify": (int, 10000, 2),
    "n_mc_bapc": (int, 10000, 1),
    "seed": (int, 20240101, 0),
    "max_proposals": (int, 10, 1),
    "relative_error": (float, 0.2, 0.0),
}


@dataclass(frozen=True)
class AnalysisConfig:
    """完整校验后的分析配置（不可变）。"""
    config_path: str
    config_sha256: str
    log_level: str
    output_dir: str
    cache_dir: str
    parallelism: int
    degree: int
    n_updates: int
    initial_points: int
    n_mc_bms: int
    n_mc_justify: int
    n_mc_bapc: int
    seed: int
    max_proposals: int
    relative_error: float
    space: ParameterSpace
    models: tuple
    observation_files: dict
    observations: object
    data_subsets: dict

    def model(self, model_id):
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise KeyError(model_id)

    def prior_probabilities(self):
        """Model prior probabilities in model order; uniform unless all are given."""
        given = [m.prior_probability for m in self.models]
        if all(p is None for p in given):
            return [1.0 / len(self.models)] * len(self.models)
        total = sum(given)
        return [p / total for p in given]

    def summary(self):
        return {
            "config_path": self.config_path,
            "config_sha256": self.config_sha256,
            "degree": self.degree,
            "n_updates": self.n_updates,
            "initial_points": self.initial_points,
            "n_mc_bms": self.n_mc_bms,
            "n_mc_justify": self.n_mc_justify,
            "n_mc_bapc": self.n_mc_bapc,
            "seed": self.seed,
            "max_proposals": self.max_proposals,
            "relative_error": self.relative_error,
            "parallelism": self.parallelism,
            "parameters": list(self.space.names),
            "models": [m.model_id for m in self.models],
            "data_subsets": {q: list(s) for q, s in self.data_subsets.items()},
        }


def _split_list(value):
    return [item.strip() for item in value.replace(";", ",").split(",") if item.strip()]


class ConfigManager:
    """
    管理分析配置：从 .ini 文件读取并校验，生成不可变的 AnalysisConfig。
    校验会收集所有问题后一次性报告，且从不执行任何模型。
    """
    def __init__(self, config_file_path=CONFIG_FILE_PATH):
        """
        Args:
            config_file_path: 配置文件的完整路径。默认为项目根目录下的 config/analysis_config.ini。
        """
        self._config_file_path = os.path.abspath(config_file_path)
        self._config_dir = os.path.dirname(self._config_file_path)
        self._config_parser = configparser.ConfigParser(interpolation=None)
        self._read_ok = False
        logger.debug(f"ConfigManager initialized with config file path: {self._config_file_path}")

    @property
    def config_file_path(self):
        return self._config_file_path

    def read(self):
        """Parse the INI file only. Returns False when it is missing or malformed."""
        if self._read_ok:
            return True
        if not os.path.isfile(self._config_file_path):
            logger.error(f"Configuration file not found at {self._config_file_path}.")
            return False
        try:
            read_files = self._config_parser.read(self._config_file_path, encoding="utf-8")
        except configparser.Error as e:
            logger.error(f"ConfigParser error while reading '{self._config_file_path}': {e}")
            return False
        self._read_ok = bool(read_files)
        return self._read_ok

    def get_log_level(self):
        """Log level name from [General], falling back to INFO. Usable before full validation."""
        if not self.read():
            return DEFAULT_LOG_LEVEL
        level = self._config_parser.get(SECTION_GENERAL, KEY_LOG_LEVEL, fallback=DEFAULT_LOG_LEVEL).strip().upper()
        if level not in VALID_LOG_LEVELS:
            logger.warning(f"Invalid log level '{level}' in config '{KEY_LOG_LEVEL}'. Falling back to '{DEFAULT_LOG_LEVEL}'. "
                           f"Valid levels are: {', '.join(VALID_LOG_LEVELS)}")
            return DEFAULT_LOG_LEVEL
        return level

    def get_output_dir(self):
        if not self.read():
            return self._resolve(DEFAULT_OUTPUT_DIR)
        return self._resolve(self._config_parser.get(SECTION_GENERAL, KEY_OUTPUT_DIR, fallback=DEFAULT_OUTPUT_DIR).strip())

    def _resolve(self, path):
        path = os.path.expanduser(path)
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self._config_dir, path))

    def load_config(self):
        """
        读取并校验整个配置文件。

        Returns:
            AnalysisConfig

        Raises:
            ConfigValidationError: 列出发现的全部问题。
        """
        logger.info(f"Loading analysis configuration from: {self._config_file_path}")
        if not self.read():
            raise ConfigValidationError([f"cannot read configuration file '{self._config_file_path}'"])
        problems = []
        parser = self._config_parser

        # --- Parse General Section ---
        log_level = self.get_log_level()
        output_dir = self.get_output_dir()
        cache_dir = os.environ.get(CACHE_DIR_ENV) or parser.get(SECTION_GENERAL, KEY_CACHE_DIR, fallback=DEFAULT_CACHE_DIR)
        cache_dir = self._resolve(cache_dir.strip())
        parallelism = self._get_number(SECTION_GENERAL, KEY_PARALLELISM, int, 1, 1, problems)

        # --- Parse Analysis Section ---
        analysis = {
            key: self._get_number(SECTION_ANALYSIS, key, kind, default, minimum, problems)
            for key, (kind, default, minimum) in ANALYSIS_KEYS.items()
        }
        degree = analysis["degree"] or 1

        space = self._parse_parameters(degree, problems)
        observation_files, observations = self._parse_observations(analysis["relative_error"], problems)
        data_subsets = self._parse_data_subsets(observations, problems)
        models = self._parse_models(space, observations, problems)
        self._check_initial_points(models, degree, analysis["initial_points"], problems)

        if problems:
            for p in problems:
                logger.error(f"Config problem: {p}")
            raise ConfigValidationError(problems)

        with open(self._config_file_path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
        config = AnalysisConfig(
            config_path=self._config_file_path,
            config_sha256=digest,
            log_level=log_level,
            output_dir=output_dir,
            cache_dir=cache_dir,
            parallelism=parallelism,
            space=space,
            models=tuple(models),
            observation_files=observation_files,
            observations=observations,
            data_subsets=data_subsets,
            **analysis,
        )
        logger.info(f"Configuration valid: {len(models)} model(s), {space.n_params} parameter(s), "
                    f"{observations.size} observation(s), degree {config.degree}")
        return config

    def _get_number(self, section, key, kind, default, minimum, problems):
        raw = self._config_parser.get(section, key, fallback=None)
        if raw is None or not raw.strip():
            return default
        try:
            value = kind(raw.strip())
        except ValueError:
            problems.append(f"[{section}] {key}: '{raw}' is not a valid {kind.__name__}")
            return default
        if minimum is not None and value < minimum:
            problems.append(f"[{section}] {key}: must be >= {minimum}, got {value}")
            return default
        return value

    def _parse_parameters(self, degree, problems):
        priors = []
        sections = [s for s in self._config_parser.sections() if s.startswith(PARAMETER_SECTION_PREFIX)]
        if not sections:
            problems.append(f"no [{PARAMETER_SECTION_PREFIX}<name>] section declared")
        for section in sections:
            name = section[len(PARAMETER_SECTION_PREFIX):].strip()
            values = self._config_parser[section]
            kind = values.get("kind", UNIFORM).strip().lower()
            unit = values.get("unit", "").strip()
            try:
                if kind == UNIFORM:
                    if "lower" not in values or "upper" not in values:
                        problems.append(f"[{section}] uniform prior needs 'lower' and 'upper'")
                        continue
                    priors.append(Prior1D.uniform(name, float(values["lower"]), float(values["upper"]), unit=unit))
                elif kind == SAMPLES:
                    if "samples_file" not in values:
                        problems.append(f"[{section}] sample-set prior needs 'samples_file'")
                        continue
                    samples_file = self._resolve(values["samples_file"].strip())
                    if not os.path.isfile(samples_file):
                        problems.append(f"[{section}] samples_file '{samples_file}' does not exist")
                        continue
                    prior = Prior1D.from_samples_file(name, samples_file, unit=unit)
                    if not prior.supports_degree(degree):
                        problems.append(
                            f"[{section}] needs at least {min_samples_for_degree(degree)} samples for degree {degree}, "
                            f"got {prior.samples.size}"
                        )
                        continue
                    priors.append(prior)
                else:
                    problems.append(f"[{section}] kind: unknown prior kind '{kind}' (expected '{UNIFORM}' or '{SAMPLES}')")
            except ValueError as e:
                problems.append(f"[{section}] bounds are not numbers: {e}")
            except ModelJustifierError as e:
                problems.append(f"[{section}] {e}")
        try:
            return ParameterSpace(tuple(priors)) if priors else None
        except ModelJustifierError as e:
            problems.append(str(e))
            return None

    def _parse_observations(self, relative_error, problems):
        if not self._config_parser.has_section(SECTION_OBSERVATIONS):
            problems.append(f"[{SECTION_OBSERVATIONS}] section missing")
            return {}, None
        files = {}
        merged = None
        for quantity, path in self._config_parser.items(SECTION_OBSERVATIONS):
            path = self._resolve(path.strip())
            files[quantity] = path
            try:
                observations = read_observations(path, quantity, relative_error)
            except ModelJustifierError as e:
                problems.append(f"[{SECTION_OBSERVATIONS}] {quantity}: {e}")
                continue
            merged = observations if merged is None else merged.concat(observations)
        if not files:
            problems.append(f"[{SECTION_OBSERVATIONS}] declares no quantity")
        return files, merged

    def _parse_data_subsets(self, observations, problems):
        subsets = {}
        if not self._config_parser.has_section(SECTION_DATA_SUBSETS):
            if observations is not None:
                # Default sweep: every quantity with all of its spatial points
                subsets = {q: (len(observations.grid.spatial_labels(q)),) for q in observations.grid.quantities}
            return subsets
        for quantity, raw in self._config_parser.items(SECTION_DATA_SUBSETS):
            try:
                sizes = tuple(int(v) for v in _split_list(raw))
            except ValueError:
                problems.append(f"[{SECTION_DATA_SUBSETS}] {quantity}: sizes must be integers, got '{raw}'")
                continue
            if not sizes:
                problems.append(f"[{SECTION_DATA_SUBSETS}] {quantity}: no subset size given")
                continue
            if observations is None:
                continue
            if quantity not in observations.grid.quantities:
                problems.append(f"[{SECTION_DATA_SUBSETS}] {quantity}: no observations for this quantity")
                continue
            available = len(observations.grid.spatial_labels(quantity))
            for n in sizes:
                if not 1 <= n <= available:
                    problems.append(f"[{SECTION_DATA_SUBSETS}] {quantity}: size {n} outside 1..{available} spatial points")
            subsets[quantity] = sizes
        return subsets

    def _parse_models(self, space, observations, problems):
        models = []
        sections = [s for s in self._config_parser.sections() if s.startswith(MODEL_SECTION_PREFIX)]
        if not sections:
            problems.append(f"no [{MODEL_SECTION_PREFIX}<id>] section declared")
        known = set(space.names) if space is not None else set()
        for section in sections:
            model_id = section[len(MODEL_SECTION_PREFIX):].strip()
            values = self._config_parser[section]
            kind = values.get("kind", BUILTIN).strip().lower()
            parameters = _split_list(values.get("parameters", ""))
            section_problems = []
            if not parameters:
                section_problems.append(f"[{section}] parameters: at least one parameter is required")
            for name in parameters:
                if space is not None and name not in known:
                    section_problems.append(f"[{section}] parameters: unknown parameter '{name}'")
            if len(set(parameters)) != len(parameters):
                section_problems.append(f"[{section}] parameters: duplicated names in {parameters}")

            builtin, command, workdir, timeout = None, (), None, DEFAULT_TIMEOUT_SECONDS
            if kind == BUILTIN:
                builtin = values.get("builtin", "").strip()
                if builtin not in TOY_MODELS:
                    section_problems.append(f"[{section}] builtin: unknown toy model '{builtin}', expected one of {sorted(TOY_MODELS)}")
                else:
                    missing = [n for n in required_parameters(builtin) if n not in parameters]
                    if missing:
                        section_problems.append(f"[{section}] parameters: toy model '{builtin}' needs {missing}")
            elif kind == EXTERNAL:
                command = tuple(shlex.split(values.get("command", "")))
                if not command:
                    section_problems.append(f"[{section}] command: external model needs a command")
                workdir = values.get("workdir", "").strip() or None
                if workdir:
                    workdir = self._resolve(workdir)
                    if not os.path.isdir(workdir):
                        section_problems.append(f"[{section}] workdir: '{workdir}' does not exist")
                timeout = self._get_number(section, "timeout_seconds", float, DEFAULT_TIMEOUT_SECONDS, 1e-3, section_problems)
            else:
                section_problems.append(f"[{section}] kind: unknown model kind '{kind}' (expected '{BUILTIN}' or '{EXTERNAL}')")

            prior_probability = self._get_number(section, "prior_probability", float, None, 0.0, section_problems)
            if prior_probability is not None and not 0.0 < prior_probability <= 1.0:
                section_problems.append(f"[{section}] prior_probability: must be in (0, 1], got {prior_probability}")

            problems.extend(section_problems)
            if section_problems or observations is None:
                continue
            models.append(ModelSpec(
                model_id=model_id,
                kind=kind,
                parameters=tuple(parameters),
                grid=observations.grid,
                builtin=builtin,
                command=command,
                workdir=workdir,
                timeout_seconds=timeout,
                prior_probability=prior_probability,
            ))

        given = [m.prior_probability is not None for m in models]
        if any(given) and not all(given):
            problems.append("prior_probability must be given for every model or for none")
        return models

    @staticmethod
    def _check_initial_points(models, degree, initial_points, problems):
        # Root grid of degree d+1 bounds the initial set; the basis size is the floor
        if initial_points is None:
            return
        for model in models:
            n_params = len(model.parameters)
            low, high = expansion_size(n_params, degree) + 1, (degree + 1) ** n_params
            if not low <= initial_points <= high:
                problems.append(
                    f"[{SECTION_ANALYSIS}] initial_points: {initial_points} outside {low}..{high} "
                    f"for model '{model.model_id}' with {n_params} parameter(s)"
                )
