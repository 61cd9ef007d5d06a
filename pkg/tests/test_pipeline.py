import json
import os

import pandas as pd
import pytest

from main import EXIT_OK, EXIT_RUN_FAILURE, EXIT_USAGE, main
from src.application.analysis_app import AnalysisApp
from src.infrastructure.configuration.config_manager import CACHE_DIR_ENV, ConfigManager
from src.utils.exceptions import PipelineRunError


@pytest.fixture(autouse=True)
def no_shared_cache(monkeypatch):
    monkeypatch.delenv(CACHE_DIR_ENV, raising=False)


@pytest.fixture(scope="module")
def finished_run(config_factory):
    """One complete 'all' run on the small toy configuration."""
    with pytest.MonkeyPatch.context() as patch:
        patch.delenv(CACHE_DIR_ENV, raising=False)
        config = ConfigManager(config_factory()).load_config()
    app = AnalysisApp(config)
    app.run("all")
    return config, app


def _read(config, relative_path):
    with open(os.path.join(config.output_dir, relative_path), "rb") as f:
        return f.read()


def test_all_writes_every_artifact(finished_run):
    config, _ = finished_run
    for relative_path in (
        "surrogates/FC.json", "surrogates/loocv_summary.csv",
        "traces/IB_trace.csv", "traces/SC_trace.json",
        "bms/bms_all.json", "bms/bms_calcium_concentration_2.json", "bms/bms_summary.csv",
        "confusion/confusion_calcite_content_3.csv", "confusion/confusion_calcite_content_3_uncorrected.csv",
        "confusion/confusion_calcium_concentration_1.json",
        "rmse/rmse.csv", "rmse/rmse.json",
        "plots/loocv_evolution.csv", "plots/model_weights.csv", "plots/confusion_heatmaps.csv", "plots/rmse_bars.csv",
        "manifest.json",
    ):
        assert os.path.isfile(os.path.join(config.output_dir, relative_path)), relative_path


def test_manifest_records_the_run(finished_run):
    config, _ = finished_run
    manifest = json.loads(_read(config, "manifest.json"))
    assert manifest["status"] == "ok"
    assert manifest["stages"] == ["surrogate", "bms", "justify", "export-plots"]
    assert manifest["config"]["config_sha256"] == config.config_sha256
    # FC and SC: 15 initial + 2 updates, IB: 6 initial + 2 updates
    assert manifest["fresh_model_executions"] == 42
    assert manifest["seeds"]["bms"] == [7, 2]
    assert "traces/FC_trace.csv" in manifest["artifacts"]


def test_collocation_sets_grow_by_the_update_count(finished_run):
    _, app = finished_run
    sizes = {c.model_id: c.surrogate.collocation.size for c in app.candidates}
    assert sizes == {"FC": 17, "IB": 8, "SC": 17}
    trace = pd.read_csv(os.path.join(app.config.output_dir, "traces", "FC_trace.csv"))
    assert trace["n_collocation"].tolist() == [16, 17]


def test_bms_weights_are_normalized(finished_run):
    config, _ = finished_run
    summary = pd.read_csv(os.path.join(config.output_dir, "bms", "bms_summary.csv"))
    assert set(summary["subset"]) == {"all", "calcium_concentration_1", "calcium_concentration_2",
                                      "calcite_content_1", "calcite_content_3"}
    for _, group in summary.groupby("subset"):
        assert group["weight_uncorrected"].sum() == pytest.approx(1.0, abs=1e-9)
        assert group["weight_corrected"].sum() == pytest.approx(1.0, abs=1e-9)


def test_confusion_columns_are_normalized(finished_run):
    config, _ = finished_run
    frame = pd.read_csv(os.path.join(config.output_dir, "confusion", "confusion_calcium_concentration_2.csv"),
                        index_col="candidate")
    assert list(frame.columns) == ["FC", "IB", "SC", "MD"]
    assert frame.sum(axis=0).tolist() == pytest.approx([1.0] * 4, abs=1e-9)


def test_rerun_reuses_cache_and_reproduces_outputs(finished_run):
    config, _ = finished_run
    before = {p: _read(config, p) for p in ("bms/bms_summary.csv", "confusion/confusion_calcite_content_3.csv",
                                             "traces/SC_trace.csv", "rmse/rmse.csv")}
    app = AnalysisApp(config)
    app.run("all")
    assert app.runner.fresh_executions == 0
    for relative_path, content in before.items():
        assert _read(config, relative_path) == content, relative_path


def test_later_stage_loads_stored_surrogates(finished_run):
    config, _ = finished_run
    app = AnalysisApp(config)
    app.run("bms")
    assert app.runner.fresh_executions == 0
    assert [c.model_id for c in app.candidates] == ["FC", "IB", "SC"]


def test_export_plots_needs_earlier_stages(config_factory):
    config = ConfigManager(config_factory()).load_config()
    app = AnalysisApp(config)
    with pytest.raises(PipelineRunError, match="missing artifacts"):
        app.run("export-plots")
    manifest = json.loads(_read(config, "manifest.json"))
    assert manifest["status"] == "failed"


def test_cli_validate(config_factory, capsys):
    assert main(["validate", "--config", config_factory()]) == EXIT_OK
    assert "Configuration OK: 3 model(s), 4 parameter(s), 7 observation(s)" in capsys.readouterr().out


def test_cli_rejects_invalid_config_and_usage(config_factory, capsys):
    assert main(["validate", "--config", config_factory({"Analysis": {"n_updates": "-3"}})]) == EXIT_USAGE
    assert "n_updates" in capsys.readouterr().err
    assert main(["simulate", "--config", config_factory()]) == EXIT_USAGE


def test_cli_surrogate_stage(config_factory):
    path = config_factory({"Analysis": {"n_updates": "1"}, "Model FC": None, "Model SC": None})
    assert main(["surrogate", "--config", path]) == EXIT_OK
    assert os.path.isfile(os.path.join(os.path.dirname(path), "results", "surrogates", "IB.json"))


def test_cli_reports_failed_model_runs(config_factory):
    path = config_factory({"Model FC": None, "Model SC": None, "Model BROKEN": {
        "kind": "external",
        "command": "model-justifier-missing-binary {params_file} {output_file}",
        "parameters": "rho_f",
    }})
    assert main(["surrogate", "--config", path]) == EXIT_RUN_FAILURE
