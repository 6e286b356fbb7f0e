"""
Utility functions for yamabe-flow-lab.

Provides common helper functions used across multiple modules.
"""

from typing import Optional

import psutil
from pathvalidate import sanitize_filename

from core.constants import MAX_DEFAULT_THREADS

__all__ = [
    "format_file_size",
    "resolve_thread_count",
    "run_file_stem",
]


def resolve_thread_count(cli_threads: Optional[int] = None, env_threads: Optional[int] = None) -> int:
    """
    Number of worker threads for parallel runs.

    ``--threads`` wins over YFL_THREADS; without either, the physical core
    count is used, capped at MAX_DEFAULT_THREADS. Each flow run is numpy-bound
    and already uses vectorized kernels, so logical siblings add little.

    Raises:
        ValueError: If an explicit count is below 1.
    """
    for explicit in (cli_threads, env_threads):
        if explicit is not None:
            if explicit < 1:
                raise ValueError(f"thread count must be at least 1, got {explicit}")
            return explicit
    physical = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
    return max(1, min(physical, MAX_DEFAULT_THREADS))


def run_file_stem(label: str, fallback: str = "run") -> str:
    """
    File-name-safe form of a run label ("member 3" -> "member_3").

    Empty labels, or labels that sanitize to nothing, map to ``fallback``.
    """
    stem = sanitize_filename(label.strip().replace(" ", "_"), replacement_text="_")
    return stem or fallback


def format_file_size(size_bytes: float) -> str:
    """
    Format file size in human-readable format.

    Args:
        size_bytes: File size in bytes

    Returns:
        Human-readable size string (e.g., "1.5 GB")
    """
    for unit in ["B", "KB", "MB", "GB", "TB"]:
        if size_bytes < 1024:
            return f"{size_bytes:.1f} {unit}"
        size_bytes /= 1024
    return f"{size_bytes:.1f} PB"
