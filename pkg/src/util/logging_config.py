import logging
import sys
from typing import Optional


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None):
    # Create formatter with context
    formatter = logging.Formatter(
        fmt="%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Repeated CLI invocations in one process (tests) must not stack handlers
    for handler in list(root_logger.handlers):
        if getattr(handler, "_sns_handler", False):
            root_logger.removeHandler(handler)

    # Console handler on stderr, stdout is left to command output
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    console_handler._sns_handler = True  # type: ignore[attr-defined]
    root_logger.addHandler(console_handler)

    # Optional file handler for errors
    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.ERROR)
        file_handler.setFormatter(formatter)
        file_handler._sns_handler = True  # type: ignore[attr-defined]
        root_logger.addHandler(file_handler)

    # Reduce noise from third-party libraries
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("sqlalchemy.engine").setLevel(logging.WARNING)

    return root_logger
