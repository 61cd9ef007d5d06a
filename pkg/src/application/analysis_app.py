import glob
import logging
import os
import platform
from datetime import datetime

import numpy as np
import pandas as pd
import scipy

from src.core.bapc import bapc_update
from src.core.bayes import LikelihoodSpec, MIN_APPROXIMATION_VARIANCE, SurrogateCandidate, approximation_error_spec, compute_bme_report
from src.core.justifiability import confusion_matrix, rmse_table
from src.core.param_space import derive_seed
from src.core.poly_basis import MultivariateBasis, initial_collocation
from src.core.surrogate import Surrogate, loocv_error, solve_coefficients
from src.infrastructure.reporting.report_writer import ReportWriter
from src.infrastructure.simulation.model_runner import ModelRunner
from src.utils.exceptions import LoocvError, ModelJustifierError, PipelineRunError

# Get logger for this module
logger = logging.getLogger(__name__)

# --- Stage identifiers, also used to derive independent random streams ---
STAGE_SURROGATE = 1
STAGE_BMS = 2
STAGE_JUSTIFY = 3

SURROGATES_DIR = "surrogates"
TRACES_DIR = "traces"
BMS_DIR = "bms"
CONFUSION_DIR = "confusion"
RMSE_DIR = "rmse"
PLOTS_DIR = "plots"
MANIFEST_FILE = "manifest.json"


class AnalysisApp:
    """
    应用程序核心类，负责协调各个分析阶段：
    构建代理模型 (含 BaPC 更新) -> 贝叶斯模型选择 -> 可证性分析 (混淆矩阵) -> 导出绘图数据。
    """
    def __init__(self, config, runner=None, writer=None):
        """
        Args:
            config: 已校验的 AnalysisConfig。
            runner: ModelRunner，默认使用配置中的缓存目录。
            writer: ReportWriter，默认写入配置中的输出目录。
        """
        logger.info("Initializing AnalysisApp.")
        self._config = config
        self._runner = runner or ModelRunner(config.cache_dir)
        self._writer = writer or ReportWriter(config.output_dir)
        self._candidates = {}
        self._traces = {}
        self._loocv = {}
        self._stages_run = []
        logger.info(f"AnalysisApp initialized (output: {config.output_dir}, cache: {config.cache_dir}).")

    @property
    def config(self):
        return self._config

    @property
    def runner(self):
        return self._runner

    @property
    def writer(self):
        return self._writer

    @property
    def candidates(self):
        return [self._candidates[m.model_id] for m in self._config.models if m.model_id in self._candidates]

    @property
    def traces(self):
        return dict(self._traces)

    def run(self, command):
        """Run one CLI command (surrogate, bms, justify, all, export-plots) and write the manifest."""
        handlers = {
            "surrogate": self.build_surrogates,
            "bms": self.run_bms,
            "justify": self.run_justify,
            "all": self.run_all,
            "export-plots": self.export_plots,
        }
        if command not in handlers:
            raise ValueError(f"Unknown command '{command}'. Expected one of {sorted(handlers)}.")
        status = "failed"
        try:
            handlers[command]()
            status = "ok"
        finally:
            self.write_manifest(command, status)

    def run_all(self):
        self.build_surrogates()
        self.run_bms()
        self.run_justify()
        self.export_plots()

    # --- Stage 1: surrogates ---

    def build_surrogates(self):
        """Initial collocation, model runs, coefficient solve and BaPC updates for every model."""
        config = self._config
        logger.info("-" * 40)
        logger.info(f"Building surrogates for {len(config.models)} model(s)")
        loocv_rows = []
        for index, model in enumerate(config.models):
            candidate, trace, loocv = self._build_surrogate(index, model)
            self._candidates[model.model_id] = candidate
            self._traces[model.model_id] = trace
            self._loocv[model.model_id] = loocv

            self._writer.write_json(os.path.join(SURROGATES_DIR, f"{model.model_id}.json"), {
                "model_id": model.model_id,
                "config_sha256": config.config_sha256,
                "surrogate": candidate.surrogate.to_dict(),
                "approximation_variances": candidate.approximation_cov.variances,
                "loocv": loocv.to_dict() if loocv is not None else None,
            })
            self._writer.write_frame(os.path.join(TRACES_DIR, f"{model.model_id}_trace.csv"), trace.to_frame())
            self._writer.write_json(os.path.join(TRACES_DIR, f"{model.model_id}_trace.json"), trace.to_dict())
            if loocv is not None:
                for quantity, summary in loocv.per_quantity().items():
                    loocv_rows.append({"model": model.model_id, "quantity": quantity,
                                       "n_collocation": candidate.surrogate.collocation.size, **summary})
        self._writer.write_frame(os.path.join(SURROGATES_DIR, "loocv_summary.csv"),
                                 pd.DataFrame(loocv_rows, columns=["model", "quantity", "n_collocation",
                                                                   "mean_mse", "mean_relative"]))
        self._stages_run.append("surrogate")
        logger.info(f"Surrogates built; {self._runner.fresh_executions} fresh model execution(s) so far")

    def _build_surrogate(self, index, model):
        config = self._config
        subspace = config.space.subspace(model.parameters)
        try:
            basis = MultivariateBasis.build(subspace, config.degree)
            count = config.initial_points or basis.n_terms
            collocation = initial_collocation(basis, subspace, count)
        except ModelJustifierError as e:
            raise PipelineRunError(f"Cannot set up the surrogate of '{model.model_id}': {e}") from e

        records = self._runner.evaluate_batch(model, collocation.points, config.parallelism)
        failed = [r for r in records if not r.ok]
        if failed:
            raise PipelineRunError(
                f"Model '{model.model_id}' failed at {len(failed)} initial collocation point(s); "
                f"first error: {failed[0].error}"
            )
        outputs = np.column_stack([r.outputs for r in records])
        surrogate = solve_coefficients(basis, collocation, outputs, model.grid)

        surrogate, trace = bapc_update(
            surrogate, model, config.space, config.observations,
            n_updates=config.n_updates,
            n_mc=config.n_mc_bapc,
            seed=derive_seed(config.seed, STAGE_SURROGATE, index),
            runner=self._runner,
            max_proposals=config.max_proposals,
        )
        if trace.aborted:
            logger.warning(f"Bayesian updating of '{model.model_id}' stopped after {trace.n_updates} update(s)")

        try:
            loocv = loocv_error(surrogate.basis, surrogate.collocation, surrogate.model_outputs, surrogate.grid)
            approximation = approximation_error_spec(loocv)
        except LoocvError as e:
            logger.warning(f"{model.model_id}: {e}; approximation error set to the floor value")
            loocv = None
            approximation = LikelihoodSpec(np.full(surrogate.n_outputs, MIN_APPROXIMATION_VARIANCE))
        candidate = SurrogateCandidate(model.model_id, surrogate, surrogate.model_outputs, approximation)
        return candidate, trace, loocv

    def _ensure_surrogates(self):
        if len(self._candidates) == len(self._config.models):
            return
        if self._load_surrogates():
            return
        self.build_surrogates()

    def _load_surrogates(self):
        """Reuse surrogates written by an earlier run of the same config."""
        loaded = {}
        for model in self._config.models:
            relative = os.path.join(SURROGATES_DIR, f"{model.model_id}.json")
            if not self._writer.exists(relative):
                return False
            payload = self._writer.read_json(relative)
            if payload.get("config_sha256") != self._config.config_sha256:
                logger.info(f"Stored surrogate of '{model.model_id}' belongs to another config; rebuilding")
                return False
            surrogate = Surrogate.from_dict(payload["surrogate"])
            loaded[model.model_id] = SurrogateCandidate(
                model.model_id, surrogate, surrogate.model_outputs,
                LikelihoodSpec(np.asarray(payload["approximation_variances"], dtype=float)),
            )
        self._candidates.update(loaded)
        logger.info(f"Loaded {len(loaded)} stored surrogate(s) from {self._writer.output_dir}")
        return True

    def _subsets(self):
        grid = self._config.observations.grid
        for quantity, sizes in self._config.data_subsets.items():
            for n in sizes:
                yield grid.data_subset(quantity, n)

    # --- Stage 2: Bayesian model selection ---

    def run_bms(self):
        self._ensure_surrogates()
        config = self._config
        logger.info("-" * 40)
        logger.info("Running Bayesian model selection")
        frames = []
        subsets = [config.observations.grid.full_subset()] + list(self._subsets())
        for subset in subsets:
            report = compute_bme_report(
                self.candidates, config.space, config.observations,
                n_mc=config.n_mc_bms,
                seed=derive_seed(config.seed, STAGE_BMS),
                data_subset=subset,
                prior_probabilities=config.prior_probabilities(),
            )
            self._writer.write_json(os.path.join(BMS_DIR, f"bms_{subset.label}.json"), report.to_dict())
            frames.append(report.to_frame())
        self._writer.write_frame(os.path.join(BMS_DIR, "bms_summary.csv"), pd.concat(frames, ignore_index=True))
        self._stages_run.append("bms")

    # --- Stage 3: justifiability ---

    def run_justify(self):
        self._ensure_surrogates()
        config = self._config
        logger.info("-" * 40)
        logger.info("Running justifiability analysis")
        for subset in self._subsets():
            matrix = confusion_matrix(
                self.candidates, config.space, config.observations,
                n_mc=config.n_mc_justify,
                seed=derive_seed(config.seed, STAGE_JUSTIFY),
                data_subset=subset,
                parallelism=config.parallelism,
            )
            base = os.path.join(CONFUSION_DIR, f"confusion_{subset.label}")
            self._writer.write_frame(base + ".csv", matrix.to_frame("corrected"), index=True)
            self._writer.write_frame(base + "_uncorrected.csv", matrix.to_frame("uncorrected"), index=True)
            self._writer.write_json(base + ".json", matrix.to_dict())

        table = rmse_table({c.model_id: c.colloc_outputs for c in self.candidates}, config.observations)
        self._writer.write_frame(os.path.join(RMSE_DIR, "rmse.csv"), table)
        self._writer.write_json(os.path.join(RMSE_DIR, "rmse.json"), table.to_dict(orient="records"))
        self._stages_run.append("justify")

    # --- Plot data ---

    def export_plots(self):
        """Tidy CSV tables for LOOCV evolution, weight bars, confusion heatmaps and RMSE bars."""
        logger.info("-" * 40)
        logger.info("Exporting plot data")
        missing = [p for p in (os.path.join(BMS_DIR, "bms_summary.csv"), os.path.join(RMSE_DIR, "rmse.csv"))
                   if not self._writer.exists(p)]
        missing += [os.path.join(TRACES_DIR, f"{m.model_id}_trace.csv") for m in self._config.models
                    if not self._writer.exists(os.path.join(TRACES_DIR, f"{m.model_id}_trace.csv"))]
        if missing:
            raise PipelineRunError(f"Cannot export plot data, missing artifacts: {missing}. Run 'all' first.")

        evolution = []
        for model in self._config.models:
            trace = self._writer.read_frame(os.path.join(TRACES_DIR, f"{model.model_id}_trace.csv"))
            for column in [c for c in trace.columns if c.startswith("loocv_relative_")]:
                evolution.append(pd.DataFrame({
                    "model": model.model_id,
                    "iteration": trace["iteration"],
                    "quantity": column[len("loocv_relative_"):],
                    "mean_relative_loocv": trace[column],
                }))
        evolution = (pd.concat(evolution, ignore_index=True) if evolution
                     else pd.DataFrame(columns=["model", "iteration", "quantity", "mean_relative_loocv"]))
        self._writer.write_frame(os.path.join(PLOTS_DIR, "loocv_evolution.csv"), evolution)

        bms = self._writer.read_frame(os.path.join(BMS_DIR, "bms_summary.csv"))
        weights = bms.melt(id_vars=["subset", "model"], value_vars=["weight_uncorrected", "weight_corrected"],
                           var_name="variant", value_name="weight")
        weights["variant"] = weights["variant"].str.replace("weight_", "", regex=False)
        self._writer.write_frame(os.path.join(PLOTS_DIR, "model_weights.csv"), weights)

        cells = []
        for path in sorted(glob.glob(os.path.join(self._writer.path(CONFUSION_DIR), "confusion_*.json"))):
            payload = self._writer.read_json(os.path.relpath(path, self._writer.output_dir))
            labels = payload["labels"]
            corrected = payload.get("corrected", payload["uncorrected"])
            for r, candidate in enumerate(labels):
                for c, reference in enumerate(labels):
                    cells.append({
                        "subset": payload["subset"],
                        "reference": reference,
                        "candidate": candidate,
                        "weight": corrected[r][c],
                        "weight_uncorrected": payload["uncorrected"][r][c],
                        "standard_error": payload["standard_errors"][r][c],
                    })
        self._writer.write_frame(os.path.join(PLOTS_DIR, "confusion_heatmaps.csv"), pd.DataFrame(cells))

        self._writer.write_frame(os.path.join(PLOTS_DIR, "rmse_bars.csv"),
                                 self._writer.read_frame(os.path.join(RMSE_DIR, "rmse.csv")))
        self._stages_run.append("export-plots")

    # --- Manifest ---

    def write_manifest(self, command, status):
        config = self._config
        manifest = {
            "command": command,
            "status": status,
            "finished_at": datetime.now().isoformat(timespec="seconds"),
            "stages": list(self._stages_run),
            "config": config.summary(),
            "seeds": {
                "base": config.seed,
                "surrogate": {m.model_id: derive_seed(config.seed, STAGE_SURROGATE, i) for i, m in enumerate(config.models)},
                "bms": derive_seed(config.seed, STAGE_BMS),
                "justify": derive_seed(config.seed, STAGE_JUSTIFY),
            },
            "fresh_model_executions": self._runner.fresh_executions,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
            },
        }
        manifest["artifacts"] = sorted(set(self._writer.artifacts) | {MANIFEST_FILE})
        self._writer.write_json(MANIFEST_FILE, manifest)
        logger.info(f"Manifest written to {self._writer.path(MANIFEST_FILE)} (status: {status})")
