"""
Dataset split protocols: random 80/10/10, and cross-subject or
cross-environment hold-out with a validation slice of the training data.
"""
from typing import List, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigurationError
from ..core.models import DatasetSplits, RFSample, SplitSpec
from ..utils.helpers import log_info

SPLIT_MODES = ("random", "cross-subject", "cross-environment")


def _domain_key(sample: RFSample, mode: str) -> str:
    return sample.subject_id if mode == "cross-subject" else sample.environment_id


def _select_held_out(ids: List[str], spec: SplitSpec, rng: np.random.Generator) -> Tuple[str, ...]:
    if spec.held_out:
        missing = [i for i in spec.held_out if i not in ids]
        if missing:
            raise ConfigurationError(f"Held-out ids {missing} do not occur in the dataset")
        held = tuple(spec.held_out)
    else:
        if not 1 <= spec.held_out_count < len(ids):
            raise ConfigurationError(
                f"Cannot hold out {spec.held_out_count} of {len(ids)} ids for a {spec.mode} split")
        held = tuple(sorted(rng.choice(ids, size=spec.held_out_count, replace=False).tolist()))
    if len(held) >= len(ids):
        raise ConfigurationError("A cross-domain split needs at least one training id")
    return held


def make_splits(samples: Sequence[RFSample], spec: SplitSpec) -> DatasetSplits:
    """
    Partition samples into disjoint, exhaustive train/validation/test sets.

    Deterministic for a given spec. In the cross modes no held-out subject
    or environment appears in train or validation.
    """
    if spec.mode not in SPLIT_MODES:
        raise ConfigurationError(f"Unknown split mode '{spec.mode}', expected one of {SPLIT_MODES}")
    rng = np.random.default_rng(spec.seed)
    samples = list(samples)

    if spec.mode == "random":
        if abs(sum(spec.ratios) - 1.0) > 1e-9 or min(spec.ratios) < 0:
            raise ConfigurationError(f"Split ratios must be non-negative and sum to 1, got {spec.ratios}")
        order = rng.permutation(len(samples))
        n_train = int(round(spec.ratios[0] * len(samples)))
        n_val = int(round(spec.ratios[1] * len(samples)))
        picked = [samples[i] for i in order]
        splits = DatasetSplits(train=picked[:n_train], validation=picked[n_train:n_train + n_val],
                               test=picked[n_train + n_val:])
    else:
        ids = sorted({_domain_key(s, spec.mode) for s in samples})
        held = _select_held_out(ids, spec, rng)
        test = [s for s in samples if _domain_key(s, spec.mode) in held]
        remaining = [s for s in samples if _domain_key(s, spec.mode) not in held]
        order = rng.permutation(len(remaining))
        n_val = int(round(spec.validation_fraction * len(remaining)))
        picked = [remaining[i] for i in order]
        splits = DatasetSplits(train=picked[n_val:], validation=picked[:n_val], test=test, held_out=held)

    log_info("Split {} samples ({}): train {}, validation {}, test {}{}".format(
        len(samples), spec.mode, *splits.sizes(),
        f", held out {', '.join(splits.held_out)}" if splits.held_out else ""))
    return splits
