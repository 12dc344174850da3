"""
Utilities package for the rf2pose application.
"""

from .helpers import (
    log_info,
    log_warning,
    log_error,
    log_debug,
    set_seed,
    derive_seed,
    stable_hash,
    chunk_list,
    generate_timestamp
)

__all__ = [
    'log_info',
    'log_warning',
    'log_error',
    'log_debug',
    'set_seed',
    'derive_seed',
    'stable_hash',
    'chunk_list',
    'generate_timestamp'
]
