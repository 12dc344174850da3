"""
Skeleton vectors: bone-endpoint representation of poses, counterfactual
bone removal, and embedding of skeletons into a condition vector.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from ..config.settings import SKELETON_DIR, SOURCES
from .errors import BoneIndexError, ConfigurationError, MapMismatchError, ParseError, ValidationError

PoseLike = Union[torch.Tensor, np.ndarray]


@dataclass(frozen=True)
class SkeletonMap:
    """
    Bone topology over N joints: K (parent, child) joint-index pairs.
    """
    bones: Tuple[Tuple[int, int], ...]
    joint_count: int

    def __post_init__(self):
        bones = tuple((int(p), int(c)) for p, c in self.bones)
        object.__setattr__(self, "bones", bones)
        if self.joint_count < 1:
            raise ValidationError("Skeleton map needs at least one joint")
        if not bones:
            raise ValidationError("Skeleton map needs at least one bone")
        seen = set()
        for parent, child in bones:
            if not (0 <= parent < self.joint_count and 0 <= child < self.joint_count):
                raise ValidationError(f"Bone ({parent}, {child}) is outside 0..{self.joint_count - 1}")
            if parent == child:
                raise ValidationError(f"Bone ({parent}, {child}) connects a joint to itself")
            if (parent, child) in seen:
                raise ValidationError(f"Duplicate bone ({parent}, {child})")
            seen.add((parent, child))
        if not _is_connected(bones):
            raise ValidationError("Skeleton map bones do not form a single connected component")

    @property
    def bone_count(self) -> int:
        return len(self.bones)

    @property
    def touched_joints(self) -> Tuple[int, ...]:
        return tuple(sorted({j for bone in self.bones for j in bone}))

    def index_tensor(self, device=None) -> torch.Tensor:
        """Bone endpoints as a (K, 2) long tensor."""
        return torch.tensor(self.bones, dtype=torch.long, device=device)


def _is_connected(bones: Sequence[Tuple[int, int]]) -> bool:
    parent = {}

    def find(j):
        while parent.setdefault(j, j) != j:
            parent[j] = parent[parent[j]]
            j = parent[j]
        return j

    for a, b in bones:
        parent[find(a)] = find(b)
    return len({find(j) for j in list(parent)}) == 1


def load_skeleton_map(path: Union[str, Path], joint_count: Optional[int] = None) -> SkeletonMap:
    """
    Read a skeleton map file.

    One ``parent child`` pair per line; ``#`` starts a comment. A
    ``# joint_count N`` directive fixes N, otherwise N is the largest index
    plus one (or the ``joint_count`` argument when given).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Skeleton map file not found: {path}")
    bones = []
    declared = None
    for line_number, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("#"):
            words = stripped.lstrip("#").split()
            if len(words) == 2 and words[0] == "joint_count":
                declared = int(words[1])
            continue
        stripped = stripped.split("#", 1)[0].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise ParseError(path, f"line {line_number}: expected 'parent child'")
        try:
            bones.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(path, f"line {line_number}: joint indices must be integers") from None
    if not bones:
        raise ParseError(path, "no bones defined")
    count = joint_count or declared or (max(max(b) for b in bones) + 1)
    return SkeletonMap(bones=tuple(bones), joint_count=count)


def builtin_skeleton_map(source: str) -> SkeletonMap:
    """Load the shipped topology for a data source."""
    if source not in SOURCES:
        raise ConfigurationError(f"Unknown source '{source}'")
    return load_skeleton_map(SKELETON_DIR / SOURCES[source]["skeleton"])


@dataclass
class SkeletonVectors:
    """
    Per-part endpoint tensor.

    ``vectors`` has shape (..., P, E, 3): P parts with E endpoints each
    (E = 2 for bones, E = 1 for joints used directly as parts).
    ``removed_mask`` (P,) marks parts zeroed by a counterfactual edit.
    """
    vectors: torch.Tensor
    removed_mask: torch.Tensor

    @property
    def part_count(self) -> int:
        return self.vectors.shape[-3]

    @property
    def flat_width(self) -> int:
        return self.vectors.shape[-3] * self.vectors.shape[-2] * self.vectors.shape[-1]

    def flatten(self) -> torch.Tensor:
        return self.vectors.flatten(start_dim=-3)


def _as_pose_tensor(pose: PoseLike) -> torch.Tensor:
    joints = torch.as_tensor(pose)
    if not torch.is_floating_point(joints):
        joints = joints.to(torch.get_default_dtype())
    if joints.dim() < 2 or joints.shape[-1] != 3:
        raise ValidationError(f"Pose must have shape (..., N, 3), got {tuple(joints.shape)}")
    if not torch.isfinite(joints).all():
        raise ValidationError("Pose contains non-finite joint coordinates")
    return joints


def joints_to_skeleton(pose: PoseLike, skeleton_map: SkeletonMap) -> SkeletonVectors:
    """
    Gather the two endpoints of every bone from joint coordinates.

    Accepts a single (N, 3) pose or a batch (..., N, 3).
    """
    joints = _as_pose_tensor(pose)
    if joints.shape[-2] != skeleton_map.joint_count:
        raise MapMismatchError(
            f"Pose has {joints.shape[-2]} joints but the skeleton map expects {skeleton_map.joint_count}")
    index = skeleton_map.index_tensor(device=joints.device)
    vectors = joints[..., index, :]
    mask = torch.zeros(skeleton_map.bone_count, dtype=torch.bool, device=joints.device)
    return SkeletonVectors(vectors=vectors, removed_mask=mask)


def joints_as_parts(pose: PoseLike) -> SkeletonVectors:
    """Treat each joint as its own single-endpoint part."""
    joints = _as_pose_tensor(pose)
    mask = torch.zeros(joints.shape[-2], dtype=torch.bool, device=joints.device)
    return SkeletonVectors(vectors=joints.unsqueeze(-2), removed_mask=mask)


def recover_joints(h: SkeletonVectors, skeleton_map: SkeletonMap) -> torch.Tensor:
    """
    Rebuild joint coordinates from bone endpoints.

    Joints no bone touches are NaN.
    """
    shape = h.vectors.shape[:-3] + (skeleton_map.joint_count, 3)
    joints = torch.full(shape, float("nan"), dtype=h.vectors.dtype, device=h.vectors.device)
    for k, (parent, child) in enumerate(skeleton_map.bones):
        joints[..., parent, :] = h.vectors[..., k, 0, :]
        joints[..., child, :] = h.vectors[..., k, 1, :]
    return joints


def manipulate_remove_bone(h: SkeletonVectors, k: int) -> SkeletonVectors:
    """
    Return a copy of ``h`` with part ``k`` zeroed and flagged as removed.
    """
    if not 0 <= k < h.part_count:
        raise BoneIndexError(f"Part index {k} is outside 0..{h.part_count - 1}")
    vectors = h.vectors.clone()
    vectors[..., k, :, :] = 0
    mask = h.removed_mask.clone()
    mask[k] = True
    return SkeletonVectors(vectors=vectors, removed_mask=mask)


class SkeletonEmbedder(nn.Module):
    """
    Two linear layers, each followed by SiLU, mapping flattened skeleton
    vectors to the condition space of the generative models.
    """

    def __init__(self, part_count: int, width: int = 128, endpoints: int = 2):
        super().__init__()
        self.input_width = part_count * endpoints * 3
        self.output_width = width
        self.net = nn.Sequential(
            nn.Linear(self.input_width, width),
            nn.SiLU(),
            nn.Linear(width, width),
            nn.SiLU(),
        )
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for layer in self.net:
            if isinstance(layer, nn.Linear):
                bound = 1.0 / layer.in_features ** 0.5
                nn.init.uniform_(layer.weight, -bound, bound)
                nn.init.zeros_(layer.bias)

    def forward(self, flat: torch.Tensor) -> torch.Tensor:
        return self.net(flat)


class JointConditioner(nn.Module):
    """Parameter-free conditioner: the flattened joints are the condition."""

    def __init__(self, joint_count: int):
        super().__init__()
        self.input_width = joint_count * 3
        self.output_width = joint_count * 3

    def forward(self, flat: torch.Tensor) -> torch.Tensor:
        return flat


def embed_skeleton(embedder: nn.Module, h: SkeletonVectors) -> torch.Tensor:
    """Condition vector c = embedder(flatten(h))."""
    if h.flat_width != embedder.input_width:
        raise ConfigurationError(
            f"Skeleton vectors flatten to width {h.flat_width}, embedder expects {embedder.input_width}")
    return embedder(h.flatten())


def pose_to_parts(pose: PoseLike, skeleton_map: SkeletonMap, mode: str = "skeleton") -> SkeletonVectors:
    """Counterfactual parts of a pose for the given condition mode."""
    if mode == "skeleton":
        return joints_to_skeleton(pose, skeleton_map)
    if mode == "joints":
        joints = _as_pose_tensor(pose)
        if joints.shape[-2] != skeleton_map.joint_count:
            raise MapMismatchError(
                f"Pose has {joints.shape[-2]} joints but the skeleton map expects {skeleton_map.joint_count}")
        return joints_as_parts(joints)
    raise ConfigurationError(f"Unknown condition mode '{mode}'")


def build_conditioner(mode: str, skeleton_map: SkeletonMap, width: int = 128) -> nn.Module:
    """Embedder for ``skeleton`` mode, joint flattener for ``joints`` mode."""
    if mode == "skeleton":
        return SkeletonEmbedder(skeleton_map.bone_count, width=width)
    if mode == "joints":
        return JointConditioner(skeleton_map.joint_count)
    raise ConfigurationError(f"Unknown condition mode '{mode}'")
