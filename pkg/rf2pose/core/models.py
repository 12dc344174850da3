"""
Data models for the rf2pose application.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass
class RFSample:
    """
    One RF observation with its pose label and domain tags.

    ``signal`` is a channels x length float32 matrix (channels x time for
    WiFi/UWB, features x points for mmWave). ``pose`` is N x 3 in meters.
    """
    sample_id: str
    signal: np.ndarray
    pose: np.ndarray
    subject_id: str
    environment_id: str
    valid_points: Optional[int] = None

    # Optional additional fields (simulator ground truth, source tag, ...)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __str__(self) -> str:
        """String representation of a sample."""
        return (f"RFSample(id={self.sample_id}, signal={tuple(self.signal.shape)}, "
                f"subject={self.subject_id}, environment={self.environment_id})")

    @property
    def is_valid(self) -> bool:
        """Check that ids are present and arrays are finite."""
        return bool(self.sample_id and self.subject_id and self.environment_id
                    and np.isfinite(self.signal).all() and np.isfinite(self.pose).all())


@dataclass(frozen=True)
class SplitSpec:
    """
    How to partition a dataset.

    ``random`` uses ``ratios`` (train, validation, test). The cross modes hold
    out whole subjects or environments: ``held_out`` names them explicitly,
    otherwise ``held_out_count`` ids are drawn with ``seed``. A
    ``validation_fraction`` of the remaining training data becomes the
    validation set.
    """
    mode: str = "random"
    held_out: Tuple[str, ...] = ()
    held_out_count: int = 1
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    validation_fraction: float = 0.1
    seed: int = 0


@dataclass
class DatasetSplits:
    """Disjoint train / validation / test partitions of a dataset."""
    train: List[RFSample]
    validation: List[RFSample]
    test: List[RFSample]
    held_out: Tuple[str, ...] = ()

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)
