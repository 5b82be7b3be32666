import os
import logging
from logging.handlers import RotatingFileHandler
from core.settings import LOGS_DIR, LOG_LEVEL


def get_logger(name: str, log_file: str = "hjcl.log", level: int = None) -> logging.Logger:
    """
    Creates and returns a logger instance with the given name, log file, and log level.

    Args:
        name (str): Name of the logger, usually `__name__`.
        log_file (str): Name of the log file under the logs directory (default: hjcl.log).
        level (int): Logging level. Defaults to the `LOG_LEVEL` setting.

    Returns:
        logging.Logger: Configured logger instance.
    """
    if level is None:
        level = logging.getLevelName(LOG_LEVEL.upper())
        if not isinstance(level, int):
            level = logging.INFO

    os.makedirs(LOGS_DIR, exist_ok=True)
    log_file_path = os.path.join(LOGS_DIR, log_file)

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Check if logger already has handlers to avoid duplicate logs
    if not logger.handlers:
        formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)

        file_handler = RotatingFileHandler(
            log_file_path, maxBytes=5 * 1024 * 1024, backupCount=3, encoding="utf-8"
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)

        logger.addHandler(console_handler)
        logger.addHandler(file_handler)

    return logger
