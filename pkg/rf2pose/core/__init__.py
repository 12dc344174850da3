"""
Core package for the rf2pose application.
"""

from .models import RFSample, SplitSpec, DatasetSplits
from .errors import (
    Rf2PoseError,
    ValidationError,
    ConfigurationError,
    DependencyError,
    DivergenceError
)

__all__ = [
    'RFSample',
    'SplitSpec',
    'DatasetSplits',
    'Rf2PoseError',
    'ValidationError',
    'ConfigurationError',
    'DependencyError',
    'DivergenceError'
]

# The pipeline processor imports config and services; import it from
# rf2pose.core.processor directly to avoid circular imports.
