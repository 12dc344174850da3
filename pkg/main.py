#!/usr/bin/env python3
"""
rf2pose main entry point.

Command-line interface to the RF pose estimation pipeline: train a
skeleton-conditioned generator, synthesize counterfactual regularization
targets, train and evaluate the pose estimator, and build the synthetic
cross-domain benchmark.
"""
import sys
import argparse
import logging

from rf2pose.config import LOG_LEVEL, load_run_config, parse_override
from rf2pose.config.run_config import MODEL_KINDS, SPLIT_MODES
from rf2pose.config.settings import SOURCES
from rf2pose.core.errors import ConfigurationError, Rf2PoseError
from rf2pose.core.processor import PipelineProcessor
from rf2pose.utils import log_error, log_info

# Per-command targets of the shared --epochs and --seed flags
EPOCH_KEYS = {"train-gen": "gen_train.epochs", "train-hpe": "hpe.epochs"}
SEED_KEYS = {"train-gen": "gen_train.seed", "synth-cf": "counterfactual.seed", "train-hpe": "hpe.seed"}


def setup_logging():
    """Configure logging for the application."""
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr
    )


def _add_common(parser):
    parser.add_argument('--config', help='Flat key-value run configuration file')
    parser.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='Override one configuration value (repeatable)')
    parser.add_argument('--source', choices=sorted(SOURCES), help='Dataset source')
    parser.add_argument('--split-mode', choices=SPLIT_MODES, help='Data split protocol')
    parser.add_argument('--model-kind', choices=MODEL_KINDS, help='Generative model')
    parser.add_argument('--data-root', help='Directory holding one sub-directory per source')
    parser.add_argument('--output-dir', help='Directory for checkpoints, stores and reports')
    parser.add_argument('--force', action='store_true',
                        help='Accept artifacts built under a different configuration hash')


def build_parser():
    parser = argparse.ArgumentParser(description='Counterfactual-regularized RF human pose estimation')
    subparsers = parser.add_subparsers(dest='command', help='Command to run')

    gen_parser = subparsers.add_parser('train-gen', help='Train the skeleton-conditioned signal generator')
    _add_common(gen_parser)
    gen_parser.add_argument('--epochs', type=int, help='Training epochs')
    gen_parser.add_argument('--seed', type=int, help='Training seed')

    cf_parser = subparsers.add_parser('synth-cf', help='Synthesize counterfactual regularization targets')
    _add_common(cf_parser)
    cf_parser.add_argument('--seed', type=int, help='Base seed for per-sample synthesis')
    cf_parser.add_argument('--ddim-steps', type=int, help='Sampling steps for the ddim model kind')

    hpe_parser = subparsers.add_parser('train-hpe', help='Train the pose estimator')
    _add_common(hpe_parser)
    hpe_parser.add_argument('--lambda', dest='lam', type=float, help='Counterfactual regularization weight')
    hpe_parser.add_argument('--lambda-sweep', help='Comma-separated weights, one estimator each')
    hpe_parser.add_argument('--repeats', type=int, help='Seed repetitions per weight')
    hpe_parser.add_argument('--epochs', type=int, help='Training epochs')
    hpe_parser.add_argument('--seed', type=int, help='Seed of the first repetition')

    eval_parser = subparsers.add_parser('eval', help='Evaluate predictions on the test split')
    _add_common(eval_parser)
    eval_parser.add_argument('--predictions', help='Predictions JSON file (default: run the trained estimator)')
    eval_parser.add_argument('--pa-no-scale', action='store_true', help='Rigid-only Procrustes alignment')

    sim_parser = subparsers.add_parser('simulate', help='Build the synthetic cross-domain benchmark')
    _add_common(sim_parser)
    sim_parser.add_argument('--per-domain', type=int, default=200, help='Samples per domain')
    sim_parser.add_argument('--domains', default='A,B,Z', help='Comma-separated domain names')
    sim_parser.add_argument('--noise', type=float, default=0.05, help='Signal noise standard deviation')
    sim_parser.add_argument('--signal-shape', default='8,32', help='Channels,length of simulated signals')
    sim_parser.add_argument('--seed', type=int, default=0, help='Simulator seed')
    return parser


def collect_overrides(args):
    """Turn command-line flags into ``section.key`` overrides; flags win over --set."""
    overrides = [parse_override(item) for item in args.set]
    flag_keys = {
        'source': 'data.source',
        'split_mode': 'data.split_mode',
        'model_kind': 'model.kind',
        'data_root': 'data.root',
        'output_dir': 'paths.output_dir',
        'lam': 'hpe.lambda',
        'lambda_sweep': 'experiment.lambda_sweep',
        'repeats': 'experiment.repeats',
        'ddim_steps': 'diffusion.ddim_steps',
    }
    for attr, key in flag_keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append((key, str(value)))
    if getattr(args, 'epochs', None) is not None and args.command in EPOCH_KEYS:
        overrides.append((EPOCH_KEYS[args.command], str(args.epochs)))
    if getattr(args, 'seed', None) is not None and args.command in SEED_KEYS:
        overrides.append((SEED_KEYS[args.command], str(args.seed)))
    if getattr(args, 'pa_no_scale', False):
        overrides.append(('metrics.pa_scale', 'false'))
    return overrides


def run_command(args):
    config = load_run_config(args.config, collect_overrides(args))
    processor = PipelineProcessor(config, force=args.force)

    if args.command == 'train-gen':
        path = processor.train_gen()
        print(f"Generator checkpoint: {path}")

    elif args.command == 'synth-cf':
        path = processor.synth_cf()
        print(f"Regularization targets: {path}")

    elif args.command == 'train-hpe':
        summary = processor.train_hpe()
        if summary:
            print(f"{'lambda':<8} {'MPJPE':>18} {'PA-MPJPE':>18} {'MPJDLE':>18}")
            for lam in sorted(summary):
                cells = [f"{m:.2f} ± {s:.2f}" for m, s in
                         (summary[lam][name] for name in ('mpjpe', 'pa_mpjpe', 'mpjdle'))]
                print(f"{lam:<8.2f} " + " ".join(f"{c:>18}" for c in cells))

    elif args.command == 'eval':
        report = processor.evaluate(args.predictions)
        for name, value in report.summary().items():
            print(f"{name}: {value:.2f} mm")

    elif args.command == 'simulate':
        try:
            shape = tuple(int(v) for v in args.signal_shape.split(','))
        except ValueError:
            shape = ()
        if len(shape) != 2:
            raise ConfigurationError(f"--signal-shape must be channels,length, got {args.signal_shape!r}")
        domains = [d.strip() for d in args.domains.split(',') if d.strip()]
        samples = processor.simulate(args.per_domain, domains, shape, args.noise, args.seed)
        print(f"Simulated {len(samples)} samples")
    return 0


def main(argv=None):
    """Main entry point for the application."""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging()

    if not args.command:
        parser.print_help()
        return 2

    try:
        log_info(f"Running {args.command}")
        return run_command(args)
    except Rf2PoseError as e:
        log_error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        log_error(f"Error: {str(e)}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
