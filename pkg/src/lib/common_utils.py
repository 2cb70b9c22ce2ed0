import logging
import os
from typing import Any, Optional


def setup_logging(name: str) -> logging.Logger:
    """Set up logging configuration."""
    logger = logging.getLogger(name)

    # Only add handler if it doesn't exist
    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    level = os.environ.get('HAZARDLAB_LOG_LEVEL', 'INFO').upper()
    logger.setLevel(getattr(logging, level, logging.INFO))
    return logger


def safe_get(obj: Any, *keys: str, default: Any = None) -> Any:
    """Safely get nested dictionary values."""
    try:
        for key in keys:
            obj = obj[key]
        return obj
    except (KeyError, TypeError, IndexError):
        return default


def env_int(name: str, default: Optional[int] = None, minimum: int = 1) -> Optional[int]:
    """Read a positive integer from the environment.

    Args:
        name: Environment variable name (e.g., 'HAZARDLAB_THREADS')
        default: Value returned when the variable is unset or empty
        minimum: Smallest accepted value
    Returns:
        The parsed integer, or default
    """
    raw = os.environ.get(name, '').strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got '{raw}'")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value
