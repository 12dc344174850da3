#!/usr/bin/env python
"""
Check that trained conditional generators move their per-condition sample
means toward the simulator's noise-free signal.

Trains a conditional DDPM and a conditional WGAN-GP on one simulator domain
and compares, for a handful of held-back poses, the distance between the
mean of generated samples and the true signal before and after training.

    python scripts/generator_fidelity.py --epochs 300
"""
import argparse
import os
import sys

import numpy as np
import torch

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from rf2pose.core.skeleton import SkeletonEmbedder, builtin_skeleton_map, pose_to_parts
from rf2pose.data import bone_contributions, make_simulator_config, random_pose, simulate_rf
from rf2pose.services import (Denoiser, Discriminator, Generator, build_schedule, cgan_sample, cgan_train,
                              ddpm_sample, train_ddpm)
from rf2pose.utils import set_seed

SIGNAL_SHAPE = (8, 32)
EMBED_WIDTH = 32
FILTERS = (64, 64)
KERNELS = (5, 3)


def simulate_family(config, count, seed):
    """Noisy training signals and their flattened skeleton conditions."""
    rng = np.random.default_rng(seed)
    signals, parts = [], []
    for i in range(count):
        pose = random_pose(config, rng)
        signals.append(simulate_rf(config, pose, "A", seed=seed + i).signal)
        parts.append(pose_to_parts(torch.as_tensor(pose, dtype=torch.float32), config.skeleton_map).flatten())
    return torch.as_tensor(np.stack(signals), dtype=torch.float32), torch.stack(parts)


def probe_conditions(config, count, seed):
    """Held-back poses with their noise-free signals."""
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(count):
        pose = random_pose(config, rng)
        truth = bone_contributions(config, pose).sum(axis=0) + config.offsets["A"]
        flat = pose_to_parts(torch.as_tensor(pose, dtype=torch.float32), config.skeleton_map).flatten()
        probes.append((flat, torch.as_tensor(truth, dtype=torch.float32)))
    return probes


def mean_distance(sample_fn, embedder, probes, samples_per_probe):
    """Average over probes of ||mean of generated samples - true signal||."""
    distances = []
    for i, (flat, truth) in enumerate(probes):
        with torch.no_grad():
            c = embedder(flat.unsqueeze(0)).repeat(samples_per_probe, 1)
        generated = sample_fn(c, seed=i)
        distances.append(float((generated.mean(dim=0) - truth).norm()))
    return float(np.mean(distances))


def check_diffusion(signals, parts, probes, part_count, epochs, samples_per_probe):
    set_seed(0)
    schedule = build_schedule(50, 1e-4, 0.2)
    embedder = SkeletonEmbedder(part_count, width=EMBED_WIDTH)
    denoiser = Denoiser(SIGNAL_SHAPE, EMBED_WIDTH, time_width=32, filters=FILTERS, kernels=KERNELS)

    def sample(c, seed):
        denoiser.eval()
        return ddpm_sample(denoiser, c, schedule, seed=seed, shape=(c.shape[0],) + SIGNAL_SHAPE)

    before = mean_distance(sample, embedder, probes, samples_per_probe)
    train_ddpm(denoiser, embedder, signals, parts, schedule, epochs=epochs, batch_size=128, lr=1e-3)
    after = mean_distance(sample, embedder, probes, samples_per_probe)
    return before, after


def check_adversarial(signals, parts, probes, part_count, epochs, samples_per_probe):
    set_seed(0)
    embedder = SkeletonEmbedder(part_count, width=EMBED_WIDTH)
    generator = Generator(SIGNAL_SHAPE, EMBED_WIDTH, EMBED_WIDTH, FILTERS, KERNELS)
    discriminator = Discriminator(SIGNAL_SHAPE, EMBED_WIDTH)

    def sample(c, seed):
        generator.eval()
        return cgan_sample(generator, c, seed=seed)

    before = mean_distance(sample, embedder, probes, samples_per_probe)
    cgan_train(generator, discriminator, embedder, signals, parts, epochs=epochs, batch_size=128)
    after = mean_distance(sample, embedder, probes, samples_per_probe)
    return before, after


def main():
    parser = argparse.ArgumentParser(description='Generative fidelity check on the additive simulator')
    parser.add_argument('--samples', type=int, default=2000, help='Training signals')
    parser.add_argument('--epochs', type=int, default=300)
    parser.add_argument('--probes', type=int, default=8, help='Held-back poses to score')
    parser.add_argument('--per-probe', type=int, default=64, help='Generated samples per pose')
    parser.add_argument('--models', default='ddpm,cgan', help='Comma-separated subset of ddpm,cgan')
    args = parser.parse_args()

    skeleton_map = builtin_skeleton_map("synthetic")
    config = make_simulator_config(skeleton_map, SIGNAL_SHAPE, ("A",), noise_std=0.05, seed=0)
    signals, parts = simulate_family(config, args.samples, seed=1)
    probes = probe_conditions(config, args.probes, seed=2)
    checks = {"ddpm": check_diffusion, "cgan": check_adversarial}

    passed = True
    for name in [m.strip() for m in args.models.split(',') if m.strip()]:
        if name not in checks:
            print(f"Unknown model '{name}', expected one of {sorted(checks)}")
            return 2
        print(f"\nTraining {name} for {args.epochs} epochs...")
        before, after = checks[name](signals, parts, probes, skeleton_map.bone_count, args.epochs, args.per_probe)
        ok = 2 * after <= before
        passed = passed and ok
        print(f"{name}: distance untrained {before:.3f}, trained {after:.3f} {'✓' if ok else '✗'}")

    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
