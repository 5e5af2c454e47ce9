"""Helper module for console logging and seeded randomness."""

import logging
import sys

import numpy as np

_COLOURS = {
    logging.DEBUG: "\033[90m",
    logging.INFO: "\033[92m",
    logging.WARNING: "\033[93m",
    logging.ERROR: "\033[91m",
    logging.CRITICAL: "\033[91m",
}
_RESET = "\033[0m"
_ROOT = "jldcf"


class ColourFormatter(logging.Formatter):
    """Colour console records by level."""

    def format(self, record: logging.LogRecord) -> str:
        message = super().format(record)
        colour = _COLOURS.get(record.levelno, "")
        return f"{colour}{message}{_RESET}"


def configure_logging(level: str | int = "INFO") -> logging.Logger:
    """Attach a single coloured stderr handler to the package logger.

    Args:
        level: Logging level name or number.

    Returns:
        logging.Logger: The package root logger.
    """
    root = logging.getLogger(_ROOT)
    root.setLevel(level)

    if not any(getattr(handler, "_jldcf", False) for handler in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(ColourFormatter("%(levelname)s %(name)s: %(message)s"))
        handler._jldcf = True  # type: ignore[attr-defined]
        root.addHandler(handler)

    return root


def get_logger(name: str) -> logging.Logger:
    """Return a child of the package logger."""
    return logging.getLogger(f"{_ROOT}.{name}")


def make_rng(seed: int | None) -> np.random.Generator:
    """Create the numpy generator every seeded code path draws from."""
    return np.random.default_rng(seed)
