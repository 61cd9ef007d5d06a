import logging
import os
from logging.handlers import RotatingFileHandler

# Project root, used for the default log directory
BASE_DIR = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

DEFAULT_LOG_DIR = os.path.join(BASE_DIR, "logs")
LOG_FILE_NAME = "model_justifier.log"

LOG_FORMAT = '[%(asctime)s] p%(process)d t%(thread)d [%(levelname)s] [%(name)s.%(funcName)s] - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

DEFAULT_LOG_LEVEL = logging.INFO

VALID_LOG_LEVELS = ['CRITICAL', 'ERROR', 'WARNING', 'INFO', 'DEBUG', 'NOTSET']


def parse_log_level(log_level_str, fallback=DEFAULT_LOG_LEVEL):
    """
    Convert a level name such as "INFO" into the logging constant.
    Unknown names return the fallback.
    """
    if not log_level_str:
        return fallback
    name = str(log_level_str).strip().upper()
    if name not in VALID_LOG_LEVELS:
        return fallback
    return getattr(logging, name)


def configure_logging(log_level=None, log_dir=None):
    """
    Configure the root logger with a console handler and a rotating file handler.

    Args:
        log_level: logging level constant (e.g. logging.INFO). Defaults to INFO.
        log_dir: directory for the log file. Defaults to <project_root>/logs.
    """
    root_logger = logging.getLogger()

    # Logging has already been configured, skip
    if root_logger.handlers:
        return

    level = log_level if log_level is not None else DEFAULT_LOG_LEVEL
    root_logger.setLevel(level)

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)

    log_dir = log_dir or DEFAULT_LOG_DIR
    log_file_path = os.path.join(log_dir, LOG_FILE_NAME)
    try:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file_path,
            maxBytes=1024 * 1024 * 5,  # 5 MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)
    except Exception as e:
        # Console-only when the file handler cannot be created (permissions, read-only disk)
        print(f"Warning: Could not create file handler at {log_file_path}. Log will only be output to console.")
        print(f"Error details: {e}")

    root_logger.addHandler(console_handler)

    logger = logging.getLogger(__name__)
    logger.info("Logging system initialized.")
    logger.info(f"Log Level set to: {logging.getLevelName(root_logger.level)}")
    for handler in root_logger.handlers:
        logger.debug(f"Handler added: {type(handler).__name__} with level {logging.getLevelName(handler.level)}")
