"""
Additive RF simulator used as a ground-truth benchmark.

A pose with bones h_k produces

    x = sum_k W_k vec(h_k) + d_domain + noise

so every per-bone contribution and the domain offset are known exactly.
"""
import os
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigurationError
from ..core.models import RFSample
from ..core.skeleton import SkeletonMap
from ..utils.helpers import derive_seed, log_info
from .datasets import write_dataset

SYNTHETIC_TEMPLATE = np.array([
    [0.0, 0.0, 1.0],
    [0.0, 0.0, 1.4],
    [0.0, 0.0, 1.7],
    [0.4, 0.0, 1.3],
    [-0.15, 0.0, 0.0],
    [0.15, 0.0, 0.0],
])


@dataclass
class SimulatorConfig:
    """
    ``weights`` has shape (K, C, L, 6): W_k maps the two stacked endpoints of
    bone k to a C x L signal. ``offsets`` maps a domain name to its C x L
    offset.
    """
    skeleton_map: SkeletonMap
    weights: np.ndarray
    offsets: Dict[str, np.ndarray]
    noise_std: float = 0.0
    template: Optional[np.ndarray] = None
    pose_jitter: float = 0.1

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[0] != self.skeleton_map.bone_count \
                or self.weights.shape[-1] != 6:
            raise ConfigurationError(
                f"Weights must be ({self.skeleton_map.bone_count}, C, L, 6), got {self.weights.shape}")
        for domain, offset in self.offsets.items():
            if offset.shape != self.signal_shape:
                raise ConfigurationError(f"Offset of domain {domain} has shape {offset.shape}, "
                                         f"expected {self.signal_shape}")
        if self.noise_std < 0:
            raise ConfigurationError(f"Noise level must be non-negative, got {self.noise_std}")
        if self.template is not None and self.template.shape != (self.skeleton_map.joint_count, 3):
            raise ConfigurationError(f"Template pose must be ({self.skeleton_map.joint_count}, 3)")

    @property
    def signal_shape(self) -> Tuple[int, int]:
        return tuple(self.weights.shape[1:3])

    @property
    def domains(self) -> Tuple[str, ...]:
        return tuple(self.offsets)


def make_simulator_config(skeleton_map: SkeletonMap, signal_shape: Tuple[int, int] = (8, 32),
                          domains: Sequence[str] = ("A", "B", "Z"), density: float = 0.25,
                          offset_scale: float = 1.0, noise_std: float = 0.0, seed: int = 0) -> SimulatorConfig:
    """
    Draw sparse random bone projections, so bones touch overlapping but
    distinct signal regions, and one random offset per domain.
    """
    if not 0 < density <= 1:
        raise ConfigurationError(f"Projection density must be in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    channels, length = signal_shape
    shape = (skeleton_map.bone_count, channels, length, 6)
    weights = rng.normal(size=shape) * (rng.random(shape) < density)
    offsets = {}
    for domain in domains:
        # a per-channel level plus a smooth ripple along the signal axis
        level = rng.normal(scale=offset_scale, size=(channels, 1))
        phase = rng.uniform(0, 2 * np.pi, size=(channels, 1))
        ripple = 0.5 * offset_scale * np.sin(np.linspace(0, 2 * np.pi, length)[None, :] + phase)
        offsets[domain] = level + ripple
    template = SYNTHETIC_TEMPLATE if skeleton_map.joint_count == len(SYNTHETIC_TEMPLATE) else \
        rng.normal(scale=0.5, size=(skeleton_map.joint_count, 3))
    return SimulatorConfig(skeleton_map=skeleton_map, weights=weights, offsets=offsets,
                           noise_std=noise_std, template=template)


def bone_contributions(config: SimulatorConfig, pose: np.ndarray) -> np.ndarray:
    """W_k vec(h_k) for every bone, shape (K, C, L)."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (config.skeleton_map.joint_count, 3):
        raise ConfigurationError(
            f"Pose shape {pose.shape} does not match the simulator's {config.skeleton_map.joint_count} joints")
    bones = pose[np.asarray(config.skeleton_map.bones)].reshape(config.skeleton_map.bone_count, 6)
    return np.einsum("kcld,kd->kcl", config.weights, bones)


def simulate_rf(config: SimulatorConfig, pose: np.ndarray, domain: str, seed: int,
                sample_id: str = "sim", subject_id: str = "s0") -> RFSample:
    """
    Simulate one signal. ``metadata`` carries the per-bone contributions, the
    domain offset and the noise draw.
    """
    if domain not in config.offsets:
        raise ConfigurationError(f"Unknown simulator domain '{domain}'")
    contributions = bone_contributions(config, pose)
    noise = np.random.default_rng(seed).normal(scale=config.noise_std, size=config.signal_shape) \
        if config.noise_std > 0 else np.zeros(config.signal_shape)
    signal = contributions.sum(axis=0) + config.offsets[domain] + noise
    return RFSample(sample_id=sample_id, signal=signal, pose=np.asarray(pose, dtype=np.float64),
                    subject_id=subject_id, environment_id=domain,
                    metadata={"source": "synthetic", "contributions": contributions,
                              "offset": config.offsets[domain], "noise": noise})


def random_pose(config: SimulatorConfig, rng: np.random.Generator) -> np.ndarray:
    template = config.template if config.template is not None else np.zeros((config.skeleton_map.joint_count, 3))
    return template + rng.normal(scale=config.pose_jitter, size=template.shape)


def save_simulator_config(config: SimulatorConfig, path: str) -> str:
    np.savez(path, weights=config.weights, bones=np.asarray(config.skeleton_map.bones),
             joint_count=config.skeleton_map.joint_count, noise_std=config.noise_std,
             template=config.template if config.template is not None else np.zeros((0, 3)),
             pose_jitter=config.pose_jitter, domains=np.array(config.domains),
             offsets=np.stack([config.offsets[d] for d in config.domains]))
    return path


def load_simulator_config(path: str) -> SimulatorConfig:
    if not os.path.exists(path):
        raise ConfigurationError(f"No simulator configuration at {path}")
    with np.load(path) as data:
        skeleton_map = SkeletonMap(bones=tuple(tuple(int(j) for j in b) for b in data["bones"]),
                                   joint_count=int(data["joint_count"]))
        template = data["template"]
        return SimulatorConfig(
            skeleton_map=skeleton_map, weights=data["weights"],
            offsets={str(d): o for d, o in zip(data["domains"], data["offsets"])},
            noise_std=float(data["noise_std"]), template=template if template.size else None,
            pose_jitter=float(data["pose_jitter"]))


def build_synthetic_benchmark(config: SimulatorConfig, root: str, sizes: Mapping[str, int],
                              subjects_per_domain: int = 3, seed: int = 0) -> List[RFSample]:
    """
    Simulate ``sizes[domain]`` samples per domain and write them to ``root``
    in the canonical layout, with a ``truth/<id>.npz`` sidecar per sample and
    the simulator itself in ``simulator.npz``. Domains become environment ids,
    so a cross-environment split holds out a whole domain.
    """
    if len(sizes) < 2:
        raise ConfigurationError("A cross-domain benchmark needs at least two domains")
    unknown = [d for d in sizes if d not in config.offsets]
    if unknown:
        raise ConfigurationError(f"Domains {unknown} are not defined by the simulator")
    samples: List[RFSample] = []
    for domain, count in sizes.items():
        rng = np.random.default_rng(derive_seed(seed, f"poses/{domain}"))
        for i in range(count):
            sample_id = f"{domain}-{i:05d}"
            subject = f"{domain}s{i % subjects_per_domain}"
            sample = simulate_rf(config, random_pose(config, rng), domain, derive_seed(seed, sample_id),
                                 sample_id=sample_id, subject_id=subject)
            sample.signal = sample.signal.astype(np.float32)
            sample.pose = sample.pose.astype(np.float32)
            samples.append(sample)
    write_dataset(samples, root, "synthetic")
    truth_dir = os.path.join(root, "truth")
    os.makedirs(truth_dir, exist_ok=True)
    for sample in samples:
        np.savez(os.path.join(truth_dir, f"{sample.sample_id}.npz"),
                 contributions=sample.metadata["contributions"], offset=sample.metadata["offset"],
                 noise=sample.metadata["noise"])
    save_simulator_config(config, os.path.join(root, "simulator.npz"))
    log_info(f"Built synthetic benchmark with {len(samples)} samples over domains {list(sizes)} in {root}")
    return samples


def load_truth(root: str, sample_id: str) -> Dict[str, np.ndarray]:
    with np.load(os.path.join(root, "truth", f"{sample_id}.npz")) as data:
        return {key: data[key] for key in data.files}
