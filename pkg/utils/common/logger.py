import logging
from pathlib import Path

"""
Project logger helpers.

Handlers/formatters are configured once (CLI entry point or the test session fixture in
root `conftest.py`). Library modules only ask for a named logger and never add handlers.
"""

PROJECT_LOGGER = "msfa_forge"
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


"""
Return the project logger (or a named child) without adding handlers.

Args:
  - name (str): Logger name to use. Common patterns:
      - 'msfa_forge'                  (project root logger)
      - 'msfa_forge.wiener'           (library module)
      - 'msfa_forge.cli'              (command line front end)
      - 'msfa_forge.tests'            (test code)

Returns:
  - logging.Logger: Logger instance (handlers configured elsewhere).
"""
def get_logger(name: str = PROJECT_LOGGER) -> logging.Logger:
    return logging.getLogger(name)


def configure_logging(level: str | int = "INFO", log_file: str | Path | None = None) -> logging.Logger:
    """
    Attach a stderr handler (and optionally a fresh file handler) to the project logger.
    Safe to call repeatedly; only the first call installs handlers.
    Args:
      - level (str | int): Logging level name or number.
      - log_file (str | Path | None): File to (over)write; parent dirs are created.
    Returns:
      - logging.Logger: The configured project logger.
    """
    logger = logging.getLogger(PROJECT_LOGGER)
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO
    logger.setLevel(level)
    if getattr(logger, "_configured", False):
        return logger

    fmt = logging.Formatter(LOG_FORMAT)

    # Console handler (stderr; stdout carries machine-readable output)
    sh = logging.StreamHandler()
    sh.setFormatter(fmt)
    logger.addHandler(sh)

    if log_file is not None:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(str(log_path), encoding="utf-8", mode="w")
        fh.setFormatter(fmt)
        logger.addHandler(fh)

    logger.propagate = False
    logger._configured = True
    return logger
