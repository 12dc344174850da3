"""
Counterfactual synthesis and difference-based aggregation.

For one skeleton h, a frozen generator synthesizes the full signal from
c = embed(h) and one counterfactual signal per part from embed(h with part k
zeroed). The per-part differences r_k = x_full - x_removed_k cancel every
condition-independent component of the generator output (domain offsets),
and a learnable linear map over the part axis combines them into r.
"""
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from ..config.settings import SHOW_PROGRESS
from ..services.adversarial import cgan_sample
from ..services.diffusion import NoiseSchedule, ddim_sample, ddpm_sample
from ..utils.helpers import derive_seed, log_info
from .errors import ConfigurationError, ContractViolationError, ValidationError
from .models import RFSample
from .skeleton import SkeletonMap, SkeletonVectors, embed_skeleton, manipulate_remove_bone, pose_to_parts


class DiffusionSynthesizer:
    """Signal synthesis with a trained denoiser, by DDPM or DDIM sampling."""

    def __init__(self, denoiser: nn.Module, schedule: NoiseSchedule, method: str = "ddpm",
                 steps: Optional[int] = None, eta: float = 0.0):
        if method not in ("ddpm", "ddim"):
            raise ConfigurationError(f"Unknown diffusion sampling method '{method}'")
        self.denoiser = denoiser
        self.schedule = schedule
        self.method = method
        self.steps = steps or schedule.T
        self.eta = eta

    @property
    def modules(self) -> List[nn.Module]:
        return [self.denoiser]

    def __call__(self, c: torch.Tensor, seed: int, shared_noise: bool = True) -> torch.Tensor:
        if self.method == "ddpm":
            return ddpm_sample(self.denoiser, c, self.schedule, seed, shared_noise=shared_noise)
        return ddim_sample(self.denoiser, c, self.schedule, self.steps, self.eta, seed,
                           shared_noise=shared_noise)


class AdversarialSynthesizer:
    """Signal synthesis with a trained CGAN generator."""

    def __init__(self, generator: nn.Module):
        self.generator = generator

    @property
    def modules(self) -> List[nn.Module]:
        return [self.generator]

    def __call__(self, c: torch.Tensor, seed: int, shared_noise: bool = True) -> torch.Tensor:
        return cgan_sample(self.generator, c, seed, shared_noise=shared_noise)


def freeze_module(module: nn.Module) -> nn.Module:
    """Disable gradients and switch to eval mode."""
    module.requires_grad_(False)
    return module.eval()


@contextmanager
def frozen_parameters(modules: Iterable[nn.Module]):
    """
    Require every parameter to be frozen on entry and untouched on exit.
    """
    params = [p for module in modules for p in module.parameters()]
    if any(p.requires_grad for p in params):
        raise ContractViolationError("Generator and embedder must be frozen before counterfactual synthesis")
    versions = [p._version for p in params]
    yield
    if any(p._version != version for p, version in zip(params, versions)):
        raise ContractViolationError("Frozen parameters were modified during counterfactual synthesis")


@dataclass
class CounterfactualSet:
    """The full synthesis and the K counterfactual syntheses of one skeleton."""
    full: torch.Tensor
    removed: torch.Tensor
    seed: int
    shared_noise: bool = True

    @property
    def part_count(self) -> int:
        return self.removed.shape[0]


@dataclass
class AggregatedRepresentation:
    """Per-part differences (K, C, L) and their aggregate r (C, L)."""
    per_bone: torch.Tensor
    aggregate: torch.Tensor


def signal_difference(x_full: torch.Tensor, x_removed: torch.Tensor) -> torch.Tensor:
    """Elementwise x_full - x_removed."""
    if x_full.shape != x_removed.shape:
        raise ValidationError(
            f"Cannot subtract signals of shapes {tuple(x_full.shape)} and {tuple(x_removed.shape)}")
    return x_full - x_removed


def synthesize_counterfactual_set(synthesizer, h: SkeletonVectors, embedder: nn.Module, seed: int,
                                  shared_noise: bool = True) -> CounterfactualSet:
    """
    Synthesize x_hat from embed(h) and x_bar_k from embed(remove(h, k)) for
    every part k, in one batch of K + 1 conditions.

    ``synthesizer`` is called as ``synthesizer(c, seed, shared_noise)``.
    With ``shared_noise`` every row uses the same noise draws.
    """
    if h.removed_mask.any():
        raise ValidationError("Counterfactual synthesis starts from a skeleton with no removed parts")
    edited = [h] + [manipulate_remove_bone(h, k) for k in range(h.part_count)]
    stacked = SkeletonVectors(vectors=torch.stack([e.vectors for e in edited]),
                              removed_mask=h.removed_mask)
    modules = [embedder] + list(getattr(synthesizer, "modules", []))
    with frozen_parameters(modules):
        with torch.no_grad():
            conditions = embed_skeleton(embedder, stacked)
            signals = synthesizer(conditions, seed, shared_noise)
    if signals.shape[0] != len(edited):
        raise ValidationError(f"Synthesizer returned {signals.shape[0]} signals for {len(edited)} conditions")
    return CounterfactualSet(full=signals[0], removed=signals[1:], seed=seed, shared_noise=shared_noise)


def counterfactual_differences(cf_set: CounterfactualSet,
                               reference: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Stack r_k = reference - x_bar_k over k; the reference defaults to the
    synthesized full signal.
    """
    full = cf_set.full if reference is None else reference.to(cf_set.removed)
    return torch.stack([signal_difference(full, removed) for removed in cf_set.removed])


class DifferenceAggregator(nn.Module):
    """
    Linear map from K stacked differences to one signal-shaped r, starting
    as the mean over parts.
    """

    def __init__(self, part_count: int):
        super().__init__()
        self.part_count = part_count
        self.linear = nn.Linear(part_count, 1)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        nn.init.constant_(self.linear.weight, 1.0 / self.part_count)
        nn.init.zeros_(self.linear.bias)

    def forward(self, per_part: torch.Tensor) -> torch.Tensor:
        return self.linear(per_part.movedim(-3, -1)).squeeze(-1)


def aggregate_differences(per_bone: Union[torch.Tensor, Sequence[torch.Tensor]],
                          aggregator: DifferenceAggregator) -> AggregatedRepresentation:
    """Stack per-part differences on a new K axis and apply the aggregator."""
    if not isinstance(per_bone, torch.Tensor):
        per_bone = list(per_bone)
        if not per_bone:
            raise ValidationError("Aggregation needs at least one difference signal")
        shapes = {tuple(r.shape) for r in per_bone}
        if len(shapes) != 1:
            raise ValidationError(f"Difference signals have mismatched shapes: {sorted(shapes)}")
        per_bone = torch.stack(per_bone)
    if per_bone.dim() < 3 or per_bone.shape[-3] == 0:
        raise ValidationError("Aggregation needs a (..., K, C, L) stack with K > 0")
    if per_bone.shape[-3] != aggregator.part_count:
        raise ValidationError(
            f"Got {per_bone.shape[-3]} difference signals, aggregator expects {aggregator.part_count}")
    return AggregatedRepresentation(per_bone=per_bone, aggregate=aggregator(per_bone))


def build_regularization_targets(synthesizer, embedder: nn.Module, samples: Sequence[RFSample],
                                 skeleton_map: SkeletonMap, store, base_seed: int,
                                 condition_mode: str = "skeleton", shared_noise: bool = True,
                                 reference: str = "synthesized", config_hash: str = "",
                                 generator_hash: str = "") -> int:
    """
    Synthesize and persist the per-part differences of every training sample.

    The store is rebuilt from scratch and committed once at the end, so an
    interrupted build leaves no config hash behind. Each sample's seed is
    derived from ``base_seed`` and its id, so re-running reproduces the same
    contents.

    Returns:
        int: Number of samples written
    """
    if reference not in ("synthesized", "ground_truth"):
        raise ConfigurationError(f"Unknown difference reference '{reference}'")
    seed_policy = f"sha256(base_seed={base_seed},sample_id);shared_noise={shared_noise};reference={reference}"
    part_count = skeleton_map.bone_count if condition_mode == "skeleton" else skeleton_map.joint_count
    store.reset()
    metadata = {
        "generator_hash": generator_hash,
        "seed_policy": seed_policy,
        "part_count": str(part_count),
        "condition_mode": condition_mode,
    }
    dtype = next(iter(embedder.parameters()), torch.empty(0)).dtype
    written = 0
    for sample in tqdm(samples, desc="counterfactuals", disable=not SHOW_PROGRESS):
        seed = derive_seed(base_seed, sample.sample_id)
        pose = torch.as_tensor(np.asarray(sample.pose), dtype=dtype)
        parts = pose_to_parts(pose, skeleton_map, condition_mode)
        cf_set = synthesize_counterfactual_set(synthesizer, parts, embedder, seed, shared_noise)
        truth = None
        if reference == "ground_truth":
            truth = torch.as_tensor(np.asarray(sample.signal))
        diffs = counterfactual_differences(cf_set, truth)
        store.put_target(sample.sample_id, diffs.cpu().numpy())
        written += 1
        if written == 1:
            metadata["signal_shape"] = "x".join(str(n) for n in diffs.shape[1:])
    # config_hash marks a complete store
    metadata["config_hash"] = config_hash
    store.set_metadata(metadata, commit=False)
    store.commit()
    log_info(f"Wrote {written} regularization targets ({part_count} parts each)")
    return written
