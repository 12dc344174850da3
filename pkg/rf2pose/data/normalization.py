"""
Per-channel standardization with statistics fitted on the training split.
"""
import dataclasses
import os
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..core.errors import ConfigurationError, ParseError, ValidationError
from ..core.models import RFSample
from ..utils.helpers import log_warning

DEFAULT_EPS = 1e-6


@dataclass
class NormalizationRecord:
    mean: np.ndarray
    std: np.ndarray
    eps: float = DEFAULT_EPS

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    def apply(self, signal: np.ndarray) -> np.ndarray:
        signal = np.asarray(signal)
        if signal.ndim != 2 or signal.shape[0] != self.channels:
            raise ValidationError(f"Record covers {self.channels} channels, signal has shape {signal.shape}")
        return ((signal - self.mean[:, None]) / self.std[:, None]).astype(signal.dtype)


def fit_normalization(samples: Sequence[RFSample], eps: float = DEFAULT_EPS) -> NormalizationRecord:
    """Channel mean and std over every sample and position; std is floored at eps."""
    if not samples:
        raise ValidationError("Normalization statistics need a non-empty training split")
    stacked = np.stack([np.asarray(s.signal, dtype=np.float64) for s in samples])
    mean = stacked.mean(axis=(0, 2))
    std = stacked.std(axis=(0, 2))
    flat = np.flatnonzero(std < eps)
    if flat.size:
        log_warning(f"{flat.size} channel(s) have zero variance (first: {flat[0]}); flooring std at {eps}")
        std = np.maximum(std, eps)
    return NormalizationRecord(mean=mean, std=std, eps=eps)


def apply_normalization(samples: Sequence[RFSample], record: NormalizationRecord) -> List[RFSample]:
    return [dataclasses.replace(s, signal=record.apply(s.signal)) for s in samples]


def normalize(train: Sequence[RFSample], *others: Sequence[RFSample], eps: float = DEFAULT_EPS):
    """
    Fit on ``train`` and apply the same record to it and to every other split.

    Returns:
        (record, normalized train, *normalized others)
    """
    record = fit_normalization(train, eps)
    return (record, apply_normalization(train, record)) + tuple(apply_normalization(o, record) for o in others)


def save_record(record: NormalizationRecord, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        f.write(f"channels = {record.channels}\n")
        f.write(f"eps = {record.eps!r}\n")
        f.write("mean = " + " ".join(repr(float(v)) for v in record.mean) + "\n")
        f.write("std = " + " ".join(repr(float(v)) for v in record.std) + "\n")
    return path


def load_record(path: str) -> NormalizationRecord:
    if not os.path.exists(path):
        raise ConfigurationError(f"No normalization record at {path}")
    values = {}
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(path, f"line {line_no}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    try:
        channels = int(values["channels"])
        mean = np.array([float(v) for v in values["mean"].split()])
        std = np.array([float(v) for v in values["std"].split()])
        eps = float(values.get("eps", DEFAULT_EPS))
    except (KeyError, ValueError) as e:
        raise ParseError(path, f"invalid normalization record ({e})")
    if mean.shape != (channels,) or std.shape != (channels,):
        raise ParseError(path, f"expected {channels} mean and std values")
    return NormalizationRecord(mean=mean, std=std, eps=eps)
