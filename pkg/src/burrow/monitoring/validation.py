"""
Name checks for metric labels, log files and report files.
"""

import re
from pathlib import Path

METRIC_NAME = re.compile(r"[a-zA-Z_][a-zA-Z0-9_]{0,63}")
_UNSAFE_CHARS = re.compile(r"[^\w\-.]")


def validate_metric_name(name: str) -> str:
    """
    Return ``name`` if it can be used as a metric label value; ``@monitor``
    calls this at decoration time so a bad name fails on import.

    Raises:
        ValueError: for names outside ``[a-zA-Z_][a-zA-Z0-9_]*`` or longer
            than 64 characters.
    """
    if not METRIC_NAME.fullmatch(name):
        raise ValueError(
            f"Invalid metric_name {name!r}: use 1-64 characters from "
            "[a-zA-Z0-9_], not starting with a digit."
        )
    return name


def sanitize_filename(name: str) -> str:
    """
    Flatten ``name`` into one safe file name: slashes and characters outside
    ``[A-Za-z0-9_.-]`` become underscores, so a cell such as
    ``sample-consensus/icm+gnc`` maps to ``sample-consensus_icm_gnc``.
    """
    safe = _UNSAFE_CHARS.sub("_", name.replace("/", "_"))
    return safe if safe.strip(".") else "default"


def sanitize_log_filename(name: str) -> str:
    """Like :func:`sanitize_filename`, keeping only the last path component."""
    return sanitize_filename(Path(name).name)
