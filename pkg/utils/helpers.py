"""
Utility functions for cmvband.
Includes logging setup, output paths and JSON conversion helpers.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Union

import colorlog
import numpy as np


def setup_logging(log_level: str = "INFO", log_dir: Optional[Union[str, Path]] = None) -> None:
    """
    Set up colored logging for the application.

    Args:
        log_level: The logging level (DEBUG, INFO, WARNING, ERROR)
        log_dir: Directory for the dated log file, defaults to ./logs
    """
    # Create logs directory if it doesn't exist
    log_dir = Path("logs") if log_dir is None else Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    console_handler = colorlog.StreamHandler()
    console_handler.setFormatter(
        colorlog.ColoredFormatter(
            "%(log_color)s%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
            log_colors={
                'DEBUG': 'cyan',
                'INFO': 'green',
                'WARNING': 'yellow',
                'ERROR': 'red',
                'CRITICAL': 'red,bg_white',
            }
        )
    )

    file_handler = logging.FileHandler(
        log_dir / f"cmvband_{datetime.now().strftime('%Y%m%d')}.log",
        encoding='utf-8'
    )
    file_handler.setFormatter(
        logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, log_level.upper()))
    # repeated calls (tests, selftest inside run) must not stack handlers
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
    root_logger.addHandler(console_handler)
    root_logger.addHandler(file_handler)

    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("asyncio").setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.info(f"Logging initialized at {log_level} level")


def get_output_path(output_dir: Union[str, Path], filename: str) -> Path:
    """
    Get the full path for an output file, creating the directory.

    Args:
        output_dir: Report directory
        filename: File name inside it

    Returns:
        Full path to the file
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / filename


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy scalars and arrays, complex numbers and paths into plain
    JSON types. Complex numbers become [re, im] pairs.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return value.as_posix()
    return value


def format_float(value: float) -> str:
    """Shortest round-trip text for a float, as written to CSV."""
    return repr(float(value))
