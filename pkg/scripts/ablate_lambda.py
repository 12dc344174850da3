#!/usr/bin/env python
"""
Directional check of the counterfactual regularization on the synthetic
cross-domain benchmark.

Builds a two-domain simulator benchmark, trains the generator and the
regularization targets on domain A, then trains one estimator with
lambda = 0 and one with lambda = 1 per seed and compares MPJPE on the
held-out domain Z.

    python scripts/ablate_lambda.py --workdir /tmp/ablation --seeds 10
"""
import argparse
import json
import os
import sys
import tempfile

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from rf2pose.config import load_run_config
from rf2pose.core.metrics import evaluate_predictions
from rf2pose.core.processor import PipelineProcessor
from rf2pose.core.skeleton import builtin_skeleton_map
from rf2pose.data import build_synthetic_benchmark, make_simulator_config, pose_labels
from rf2pose.db import TargetStore
from rf2pose.services.hpe import predict_poses, train_hpe
from rf2pose.utils import set_seed

SIGNAL_SHAPE = (16, 32)
VALIDATION_FRACTION = 0.1

# Small models keep the whole run on a single CPU
RUN_SETTINGS = {
    "data.source": "synthetic",
    "data.split_mode": "cross-environment",
    "data.held_out": "Z",
    "model.filters": "64,64",
    "model.kernels": "5,3",
    "model.embed_width": "32",
    "model.time_width": "32",
    "diffusion.steps": "100",
    "diffusion.ddim_steps": "20",
    "diffusion.lr": "1e-3",
    "gen_train.batch_size": "128",
    "hpe.lr": "1e-3",
    "hpe.batch_size": "64",
    "hpe.encoder_filters": "64",
    "hpe.decoder_width": "32",
    "hpe.decoder_pool": "8",
    "hpe.decoder_hidden": "128",
}


def build_processor(workdir, gen_epochs, hpe_epochs):
    overrides = dict(RUN_SETTINGS)
    overrides.update({
        "data.root": os.path.join(workdir, "data"),
        "paths.output_dir": os.path.join(workdir, "runs"),
        "gen_train.epochs": str(gen_epochs),
        "hpe.epochs": str(hpe_epochs),
    })
    return PipelineProcessor(load_run_config(overrides=overrides.items()))


def prepare(processor, train_size, test_size, seed):
    """Write the benchmark, train the generator and build the target store."""
    simulator = make_simulator_config(builtin_skeleton_map("synthetic"), SIGNAL_SHAPE, ("A", "Z"),
                                      noise_std=0.05, seed=seed)
    train_domain = int(round(train_size / (1 - VALIDATION_FRACTION)))
    build_synthetic_benchmark(simulator, processor.dataset_dir, {"A": train_domain, "Z": test_size}, seed=seed)
    processor.train_gen()
    return processor.synth_cf()


def held_out_error(processor, splits, store, lam, seed):
    """MPJPE (mm) on the held-out domain of one estimator."""
    config = processor.config
    set_seed(seed)
    model = processor.build_estimator(tuple(splits.train[0].signal.shape), processor.skeleton_map())
    model, _ = train_hpe(model, splits.train, splits.validation, store=store if lam > 0 else None, lam=lam,
                         lr=config.hpe.lr, epochs=config.hpe.epochs, batch_size=config.hpe.batch_size,
                         seed=seed, device=processor.device, expected_hash=config.targets_hash())
    predictions = predict_poses(model, splits.test, config.hpe.batch_size, processor.device)
    return evaluate_predictions(predictions, pose_labels(splits.test)).mean("mpjpe")


def run_ablation(workdir, seeds=10, train_size=2000, test_size=500, gen_epochs=60, hpe_epochs=40):
    """
    Returns:
        list: (seed, MPJPE with lambda 0, MPJPE with lambda 1) per seed
    """
    processor = build_processor(workdir, gen_epochs, hpe_epochs)
    store_path = prepare(processor, train_size, test_size, seed=0)
    splits = processor.load_splits()
    print(f"Train {len(splits.train)}, validation {len(splits.validation)}, "
          f"held-out test {len(splits.test)} ({', '.join(splits.held_out)})")
    rows = []
    with TargetStore(store_path) as store:
        for seed in range(seeds):
            plain = held_out_error(processor, splits, store, 0.0, seed)
            regularized = held_out_error(processor, splits, store, 1.0, seed)
            print(f"seed {seed}: lambda=0 {plain:.2f} mm, lambda=1 {regularized:.2f} mm")
            rows.append((seed, plain, regularized))
    return rows


def main():
    parser = argparse.ArgumentParser(description='Compare held-out-domain MPJPE with and without '
                                                 'counterfactual regularization')
    parser.add_argument('--workdir', help='Directory for data and artifacts (default: a temporary one)')
    parser.add_argument('--seeds', type=int, default=10)
    parser.add_argument('--train-size', type=int, default=2000)
    parser.add_argument('--test-size', type=int, default=500)
    parser.add_argument('--gen-epochs', type=int, default=60)
    parser.add_argument('--hpe-epochs', type=int, default=40)
    parser.add_argument('--min-wins', type=int, default=8, help='Seeds lambda=1 must win for success')
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as scratch:
        workdir = args.workdir or scratch
        rows = run_ablation(workdir, args.seeds, args.train_size, args.test_size, args.gen_epochs,
                            args.hpe_epochs)
        wins = sum(1 for _, plain, regularized in rows if regularized < plain)
        results_path = os.path.join(workdir, "ablation.json")
        with open(results_path, "w") as f:
            json.dump({"rows": rows, "wins": wins, "seeds": args.seeds}, f, indent=2)

    print(f"\nlambda=1 beat lambda=0 on {wins} of {len(rows)} seeds")
    if wins >= min(args.min_wins, len(rows)):
        print("Directional check passed ✓")
        return 0
    print("Directional check failed ✗")
    return 1


if __name__ == "__main__":
    sys.exit(main())
