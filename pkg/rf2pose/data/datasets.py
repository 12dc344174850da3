"""
Canonical on-disk dataset layout.

A dataset directory holds ``manifest.txt`` and one blob per sample::

    # rf2pose manifest v1
    # source wifi
    <sample_id> <subject_id> <environment_id> <blob path> [valid_points]

Blobs hold two little-endian float32 tensors back to back, the signal and
then the pose, each preceded by a 16-byte header of four little-endian
uint32 values: ndim followed by up to three dimensions (unused ones 0).
"""
import json
import os
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config.settings import MMWAVE_MAX_POINTS, SOURCES
from ..core.errors import ConfigurationError, ParseError, ValidationError
from ..core.models import RFSample
from ..utils.helpers import log_debug, log_info

MANIFEST_NAME = "manifest.txt"
MANIFEST_HEADER = "# rf2pose manifest v1"
HEADER_BYTES = 16


def _encode_tensor(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype="<f4")
    if not 1 <= array.ndim <= 3:
        raise ValidationError(f"Blob tensors must have 1 to 3 dimensions, got {array.ndim}")
    dims = list(array.shape) + [0] * (3 - array.ndim)
    return np.array([array.ndim] + dims, dtype="<u4").tobytes() + array.tobytes()


def _decode_tensor(buffer: bytes, offset: int, path: str) -> Tuple[np.ndarray, int]:
    if len(buffer) < offset + HEADER_BYTES:
        raise ParseError(path, "truncated tensor header")
    header = np.frombuffer(buffer, dtype="<u4", count=4, offset=offset)
    ndim = int(header[0])
    if not 1 <= ndim <= 3:
        raise ParseError(path, f"invalid tensor rank {ndim}")
    shape = tuple(int(d) for d in header[1:1 + ndim])
    count = int(np.prod(shape))
    start = offset + HEADER_BYTES
    if len(buffer) < start + 4 * count:
        raise ParseError(path, f"truncated tensor data for shape {shape}")
    data = np.frombuffer(buffer, dtype="<f4", count=count, offset=start).reshape(shape)
    return data.astype(np.float32), start + 4 * count


def write_blob(path: str, signal: np.ndarray, pose: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(_encode_tensor(signal))
        f.write(_encode_tensor(pose))


def read_blob(path: str) -> Tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        buffer = f.read()
    signal, offset = _decode_tensor(buffer, 0, path)
    pose, offset = _decode_tensor(buffer, offset, path)
    if offset != len(buffer):
        raise ParseError(path, f"{len(buffer) - offset} trailing bytes")
    return signal, pose


def pad_point_cloud(points: np.ndarray, max_points: int = MMWAVE_MAX_POINTS) -> Tuple[np.ndarray, int]:
    """
    Turn a P x 5 radar point list into the 5 x max_points feature matrix,
    zero-padded over points. Returns the matrix and P.
    """
    points = np.asarray(points, dtype=np.float32)
    if points.ndim != 2 or points.shape[1] != 5:
        raise ValidationError(f"Point clouds must be P x 5, got {points.shape}")
    if points.shape[0] > max_points:
        raise ValidationError(f"Point cloud has {points.shape[0]} points, at most {max_points} are supported")
    signal = np.zeros((5, max_points), dtype=np.float32)
    signal[:, :points.shape[0]] = points.T
    return signal, points.shape[0]


def _expected_shape(source: str) -> Tuple[Optional[Tuple[int, int]], int]:
    if source not in SOURCES:
        raise ConfigurationError(f"Unknown data source '{source}', expected one of {sorted(SOURCES)}")
    layout = SOURCES[source]
    return layout["signal_shape"], layout["joint_count"]


def validate_sample(sample: RFSample, source: str) -> None:
    signal_shape, joint_count = _expected_shape(source)
    if not (sample.sample_id and sample.subject_id and sample.environment_id):
        raise ValidationError(f"Sample {sample.sample_id!r} is missing an id")
    if signal_shape is not None and tuple(sample.signal.shape) != tuple(signal_shape):
        raise ValidationError(
            f"Sample {sample.sample_id} has signal shape {sample.signal.shape}, {source} expects {signal_shape}")
    if sample.signal.ndim != 2:
        raise ValidationError(f"Sample {sample.sample_id} signal must be 2-D, got {sample.signal.shape}")
    if tuple(sample.pose.shape) != (joint_count, 3):
        raise ValidationError(
            f"Sample {sample.sample_id} has pose shape {sample.pose.shape}, {source} expects ({joint_count}, 3)")


def write_dataset(samples: Sequence[RFSample], root: str, source: str) -> str:
    """Write samples in the canonical layout; returns the manifest path."""
    os.makedirs(os.path.join(root, "blobs"), exist_ok=True)
    lines = [MANIFEST_HEADER, f"# source {source}"]
    for sample in samples:
        validate_sample(sample, source)
        blob = os.path.join("blobs", f"{sample.sample_id}.bin")
        write_blob(os.path.join(root, blob), sample.signal, sample.pose)
        fields = [sample.sample_id, sample.subject_id, sample.environment_id, blob]
        if sample.valid_points is not None:
            fields.append(str(sample.valid_points))
        lines.append(" ".join(fields))
    manifest = os.path.join(root, MANIFEST_NAME)
    with open(manifest, "w") as f:
        f.write("\n".join(lines) + "\n")
    log_info(f"Wrote {len(samples)} {source} samples to {root}")
    return manifest


def load_dataset(source: str, root: str) -> List[RFSample]:
    """
    Read and validate every sample listed in ``root/manifest.txt``.

    mmWave signals with fewer than 493 point columns are zero-padded and
    keep their valid-point count.
    """
    signal_shape, _ = _expected_shape(source)
    manifest = os.path.join(root, MANIFEST_NAME)
    if not os.path.exists(manifest):
        raise ConfigurationError(f"No dataset manifest at {manifest}")
    samples: List[RFSample] = []
    first_shape = None
    with open(manifest) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) not in (4, 5):
                raise ParseError(manifest, f"line {line_no}: expected 4 or 5 fields, got {len(fields)}")
            sample_id, subject, environment, blob = fields[:4]
            valid_points = None
            if len(fields) == 5:
                try:
                    valid_points = int(fields[4])
                except ValueError:
                    raise ParseError(manifest, f"line {line_no}: invalid point count {fields[4]!r}") from None
            signal, pose = read_blob(os.path.join(root, blob))
            if source == "mmwave" and signal.ndim == 2 and signal.shape[0] == 5 \
                    and signal.shape[1] < MMWAVE_MAX_POINTS:
                signal, count = pad_point_cloud(signal.T)
                valid_points = count if valid_points is None else valid_points
            sample = RFSample(sample_id=sample_id, signal=signal, pose=pose, subject_id=subject,
                              environment_id=environment, valid_points=valid_points,
                              metadata={"source": source})
            validate_sample(sample, source)
            if signal_shape is None:
                first_shape = first_shape or tuple(signal.shape)
                if tuple(signal.shape) != first_shape:
                    raise ValidationError(
                        f"Sample {sample_id} has signal shape {signal.shape}, dataset uses {first_shape}")
            samples.append(sample)
    log_debug(f"Loaded {len(samples)} {source} samples from {root}")
    return samples


def write_predictions(predictions: Mapping[str, np.ndarray], path: str) -> str:
    """JSON object mapping sample id to an N x 3 list in meters."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    payload = {sample_id: np.asarray(pose, dtype=np.float64).tolist()
               for sample_id, pose in sorted(predictions.items())}
    with open(path, "w") as f:
        json.dump(payload, f)
    return path


def read_predictions(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise ConfigurationError(f"No predictions file at {path}")
    try:
        with open(path) as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(path, str(e)) from e
    if not isinstance(payload, dict):
        raise ParseError(path, "expected a JSON object of sample id to pose")
    predictions = {}
    for sample_id, pose in payload.items():
        pose = np.asarray(pose, dtype=np.float64)
        if pose.ndim != 2 or pose.shape[1] != 3:
            raise ParseError(path, f"prediction for {sample_id} is not N x 3")
        predictions[sample_id] = pose
    return predictions


def pose_labels(samples: Sequence[RFSample]) -> Dict[str, np.ndarray]:
    return {s.sample_id: np.asarray(s.pose, dtype=np.float64) for s in samples}
