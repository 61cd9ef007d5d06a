import argparse
import logging
import os
import sys

# Make 'src' importable as a top-level package when run as 'python main.py'
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

try:
    from src.application.analysis_app import AnalysisApp
    from src.infrastructure.configuration.config_manager import CONFIG_FILE_PATH, ConfigManager
    from src.utils.exceptions import ConfigValidationError, PipelineRunError
    from src.utils.logging_config import VALID_LOG_LEVELS, configure_logging, parse_log_level
except ImportError as e:
    print("Fatal Error: Could not import core modules from src/. Please ensure 'src' directory structure is correct.")
    print(f"Details: {e}")
    sys.exit(1)

# --- Exit codes ---
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUN_FAILURE = 2

COMMANDS = ("validate", "surrogate", "bms", "justify", "all", "export-plots")

logger = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="model-justifier",
        description="aPC surrogates, corrected Bayesian model selection and model justifiability analysis.",
    )
    parser.add_argument("command", choices=COMMANDS, help="stage to run")
    parser.add_argument("--config", default=CONFIG_FILE_PATH, help="analysis config file (INI)")
    parser.add_argument("--log-level", choices=VALID_LOG_LEVELS, type=str.upper, default=None,
                        help="override [General] log_level")
    return parser


def main(argv=None):
    """
    主函数：解析命令行，加载并校验配置，运行指定的分析阶段。

    Returns:
        退出码：0 成功，1 用法或配置错误，2 运行失败。
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help and 2 for usage errors
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    # Logging first, from the raw config, so validation problems end up in the log too
    config_manager = ConfigManager(args.config)
    log_level_str = args.log_level or config_manager.get_log_level()
    configure_logging(log_level=parse_log_level(log_level_str),
                      log_dir=os.path.join(config_manager.get_output_dir(), "logs"))

    logger.info("-" * 40)
    logger.info(f"Model justifier '{args.command}' with config {config_manager.config_file_path}")
    logger.info("-" * 40)

    try:
        config = config_manager.load_config()
    except ConfigValidationError as e:
        logger.error(str(e))
        print(str(e), file=sys.stderr)
        return EXIT_USAGE

    if args.command == "validate":
        logger.info("Configuration is valid.")
        print(f"Configuration OK: {len(config.models)} model(s), {config.space.n_params} parameter(s), "
              f"{config.observations.size} observation(s).")
        return EXIT_OK

    try:
        app = AnalysisApp(config)
        app.run(args.command)
    except PipelineRunError as e:
        logger.error(f"Run failed: {e}")
        print(f"Run failed: {e}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    except KeyboardInterrupt:
        logger.info("Keyboard interrupt (Ctrl+C) received. Stopping.")
        return EXIT_RUN_FAILURE
    except Exception as e:
        logger.critical(f"A critical error occurred during '{args.command}': {e}", exc_info=True)
        return EXIT_RUN_FAILURE

    logger.info("-" * 40)
    logger.info(f"'{args.command}' finished. Results in {config.output_dir}")
    logger.info("-" * 40)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
