"""
Configuration package for the rf2pose application.
"""

from .settings import (
    ROOT_DIR,
    DATA_ROOT,
    OUTPUT_DIR,
    SKELETON_DIR,
    DEVICE,
    LOG_LEVEL,
    SHOW_PROGRESS,
    SOURCES,
    MMWAVE_MAX_POINTS,
    HELD_OUT_COUNTS
)
from .run_config import RunConfig, load_run_config, parse_override

__all__ = [
    'ROOT_DIR',
    'DATA_ROOT',
    'OUTPUT_DIR',
    'SKELETON_DIR',
    'DEVICE',
    'LOG_LEVEL',
    'SHOW_PROGRESS',
    'SOURCES',
    'MMWAVE_MAX_POINTS',
    'HELD_OUT_COUNTS',
    'RunConfig',
    'load_run_config',
    'parse_override'
]
