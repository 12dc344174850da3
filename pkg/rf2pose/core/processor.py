"""
Pipeline processor for the rf2pose application.

Runs the five pipeline stages on one RunConfig: generator training,
counterfactual target synthesis, estimator training (with optional lambda
sweep and seed repetitions), evaluation and synthetic benchmark creation.
Every artifact is written under ``<output_dir>/<source>/`` and carries the
stage hash of the configuration that produced it.
"""
import copy
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..config.settings import DEVICE, HELD_OUT_COUNTS, SOURCES
from ..utils import generate_timestamp, log_info, log_warning, set_seed
from .errors import ConfigurationError, DependencyError, ValidationError
from .models import DatasetSplits, RFSample, SplitSpec
from .skeleton import SkeletonMap, build_conditioner, builtin_skeleton_map, load_skeleton_map, pose_to_parts

# Heavier modules are imported inside methods to avoid circular imports


class PipelineProcessor:
    """Stage runner bound to one validated RunConfig."""

    def __init__(self, config, force: bool = False, device: str = DEVICE):
        self.config = config
        self.force = force
        self.device = device
        self.output_dir = os.path.join(config.paths.output_dir, config.data.source)

    # Paths and shared setup

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    @property
    def dataset_dir(self) -> str:
        return os.path.join(self.config.data.root, self.config.data.source)

    def skeleton_map(self) -> SkeletonMap:
        if self.config.data.skeleton_file:
            return load_skeleton_map(self.config.data.skeleton_file,
                                     SOURCES[self.config.data.source]["joint_count"])
        return builtin_skeleton_map(self.config.data.source)

    def part_count(self, skeleton_map: SkeletonMap) -> int:
        if self.config.model.condition == "skeleton":
            return skeleton_map.bone_count
        return skeleton_map.joint_count

    def load_splits(self) -> DatasetSplits:
        """Load, split and (optionally) normalize the configured dataset."""
        from ..data import load_dataset, make_splits, normalize, save_record

        data = self.config.data
        samples = load_dataset(data.source, self.dataset_dir)
        if not samples:
            raise ValidationError(f"Dataset {self.dataset_dir} has no samples")
        if data.recenter:
            samples = [_recentered(s) for s in samples]
        spec = SplitSpec(mode=data.split_mode, held_out=tuple(data.held_out),
                         held_out_count=HELD_OUT_COUNTS.get((data.source, data.split_mode), 1),
                         seed=data.split_seed)
        splits = make_splits(samples, spec)
        if data.normalize:
            record, train, validation, test = normalize(splits.train, splits.validation, splits.test)
            save_record(record, self.path("normalization.txt"))
            splits = DatasetSplits(train=train, validation=validation, test=test, held_out=splits.held_out)
        return splits

    def _signal_shape(self, splits: DatasetSplits) -> Tuple[int, int]:
        if not splits.train:
            raise ValidationError("Training split is empty")
        return tuple(splits.train[0].signal.shape)

    def _build_generator(self, signal_shape, skeleton_map: SkeletonMap):
        from ..services.adversarial import Discriminator, Generator
        from ..services.diffusion import Denoiser

        model = self.config.model
        conditioner = build_conditioner(model.condition, skeleton_map, model.embed_width)
        if model.kind == "cgan":
            generator = Generator(signal_shape, conditioner.output_width, model.embed_width,
                                  model.filters, model.kernels)
            return conditioner, {"generator": generator,
                                 "discriminator": Discriminator(signal_shape, conditioner.output_width)}
        return conditioner, {"denoiser": Denoiser(signal_shape, conditioner.output_width, model.time_width,
                                                  model.filters, model.kernels)}

    def _schedule(self):
        from ..services.diffusion import build_schedule

        diffusion = self.config.diffusion
        return build_schedule(diffusion.steps, diffusion.beta_min, diffusion.beta_max)

    def _generator_kind(self) -> str:
        return self.config.generator_family()

    # Stage 1: generator training

    def train_gen(self) -> str:
        """Train the configured generator and its skeleton embedder; returns the checkpoint path."""
        from ..db import save_checkpoint
        from ..services.adversarial import cgan_train
        from ..services.diffusion import train_ddpm

        config = self.config
        splits = self.load_splits()
        skeleton_map = self.skeleton_map()
        signal_shape = self._signal_shape(splits)
        set_seed(config.gen_train.seed)
        conditioner, networks = self._build_generator(signal_shape, skeleton_map)
        signals = torch.as_tensor(np.stack([s.signal for s in splits.train]), dtype=torch.float32)
        parts = torch.stack([pose_to_parts(torch.as_tensor(s.pose, dtype=torch.float32), skeleton_map,
                                           config.model.condition).flatten() for s in splits.train])
        log_info(f"Training {config.model.kind} generator on {len(splits.train)} samples of shape {signal_shape}")
        extra = {"signal_shape": list(signal_shape), "part_count": self.part_count(skeleton_map),
                 "condition": config.model.condition, "created_at": generate_timestamp()}
        if config.model.kind == "cgan":
            history = cgan_train(networks["generator"], networks["discriminator"], conditioner, signals, parts,
                                 config.gen_train.epochs, config.gen_train.batch_size, config.gan.gen_lr,
                                 config.gan.disc_lr, config.gan.n_critic, config.gan.gp_weight,
                                 seed=config.gen_train.seed, device=self.device)
            extra["history"] = history.epochs
        else:
            schedule = self._schedule()
            extra["history"] = train_ddpm(networks["denoiser"], conditioner, signals, parts, schedule,
                                          config.gen_train.epochs, config.gen_train.batch_size,
                                          config.diffusion.lr, seed=config.gen_train.seed, device=self.device)
            extra["schedule"] = schedule.to_dict()
        state_dicts = {name: net.cpu().state_dict() for name, net in networks.items()}
        state_dicts["conditioner"] = conditioner.cpu().state_dict()
        return save_checkpoint(self.path("generator.pt"), self._generator_kind(), config.generator_hash(),
                               state_dicts, extra)

    # Stage 2: counterfactual targets

    def load_synthesizer(self, signal_shape, skeleton_map: SkeletonMap):
        """Rebuild the trained generator and conditioner, frozen, from the checkpoint."""
        from ..db import load_checkpoint
        from .counterfactual import AdversarialSynthesizer, DiffusionSynthesizer, freeze_module

        payload = load_checkpoint(self.path("generator.pt"), self._generator_kind(),
                                  self.config.generator_hash(), force=self.force)
        stored_shape = tuple(payload["extra"].get("signal_shape", signal_shape))
        if stored_shape != tuple(signal_shape):
            raise ConfigurationError(f"Generator was trained on signals of shape {stored_shape}, "
                                     f"dataset has {tuple(signal_shape)}")
        conditioner, networks = self._build_generator(signal_shape, skeleton_map)
        conditioner.load_state_dict(payload["state_dicts"]["conditioner"])
        freeze_module(conditioner)
        for name, net in networks.items():
            net.load_state_dict(payload["state_dicts"][name])
            freeze_module(net)
        diffusion = self.config.diffusion
        if self.config.model.kind == "cgan":
            synthesizer = AdversarialSynthesizer(networks["generator"])
        elif self.config.model.kind == "ddim":
            synthesizer = DiffusionSynthesizer(networks["denoiser"], self._schedule(), "ddim",
                                               diffusion.ddim_steps, diffusion.eta)
        else:
            synthesizer = DiffusionSynthesizer(networks["denoiser"], self._schedule(), "ddpm")
        return synthesizer, conditioner

    def synth_cf(self) -> str:
        """Build the regularization-target store for the training split; returns its path."""
        from ..db import TargetStore
        from .counterfactual import build_regularization_targets

        config = self.config
        splits = self.load_splits()
        skeleton_map = self.skeleton_map()
        synthesizer, conditioner = self.load_synthesizer(self._signal_shape(splits), skeleton_map)
        store_path = self.path("targets_train.sqlite")
        with TargetStore(store_path) as store:
            build_regularization_targets(
                synthesizer, conditioner, splits.train, skeleton_map, store,
                base_seed=config.counterfactual.seed, condition_mode=config.model.condition,
                shared_noise=config.counterfactual.shared_noise, reference=config.counterfactual.reference,
                config_hash=config.targets_hash(), generator_hash=config.generator_hash())
        return store_path

    # Stage 3: estimator training

    def build_estimator(self, signal_shape, skeleton_map: SkeletonMap):
        from ..services.hpe import PoseEstimator

        hpe = self.config.hpe
        return PoseEstimator(signal_shape, skeleton_map.joint_count, self.part_count(skeleton_map),
                             encoder_filters=hpe.encoder_filters, decoder_width=hpe.decoder_width,
                             decoder_pool=hpe.decoder_pool, decoder_hidden=hpe.decoder_hidden,
                             decoder_only=hpe.decoder_only)

    def _variant(self, lam: float, seed: int):
        variant = copy.deepcopy(self.config)
        variant.hpe.lam = lam
        variant.hpe.seed = seed
        return variant

    def train_hpe(self) -> Dict[float, Dict[str, Tuple[float, float]]]:
        """
        Train one estimator per (lambda, repetition) and score each on the test split.

        A single run writes ``hpe.pt``; sweeps and repetitions write one
        checkpoint per run plus ``summary.txt`` with mean ± std per lambda.
        """
        from .metrics import evaluate_predictions, summarize_repetitions, write_summary
        from ..data import pose_labels
        from ..db import TargetStore, save_checkpoint
        from ..services.hpe import predict_poses, train_hpe

        config = self.config
        splits = self.load_splits()
        skeleton_map = self.skeleton_map()
        signal_shape = self._signal_shape(splits)
        lambdas = tuple(config.experiment.lambda_sweep) or (config.hpe.lam,)
        repeats = config.experiment.repeats
        single = len(lambdas) == 1 and repeats == 1
        needs_store = any(lam > 0 for lam in lambdas) and not config.hpe.decoder_only

        store = TargetStore(self.path("targets_train.sqlite")) if needs_store else None
        if store is not None:
            if not os.path.exists(store.db_path):
                raise DependencyError(f"Missing regularization-target store {store.db_path}; run synth-cf first")
            store.connect()
        summary: Dict[float, Dict[str, Tuple[float, float]]] = {}
        try:
            for lam in lambdas:
                reports = []
                for rep in range(repeats):
                    seed = config.hpe.seed + rep
                    variant = self._variant(lam, seed)
                    set_seed(seed)
                    model = self.build_estimator(signal_shape, skeleton_map)
                    log_info(f"Training estimator: lambda {lam}, seed {seed}")
                    model, history = train_hpe(
                        model, splits.train, splits.validation, store=store, lam=lam, lr=config.hpe.lr,
                        epochs=config.hpe.epochs, batch_size=config.hpe.batch_size, seed=seed,
                        device=self.device, expected_hash=config.targets_hash(), force=self.force)
                    name = "hpe.pt" if single else f"hpe_lam{lam:g}_seed{seed}.pt"
                    save_checkpoint(self.path(name), "hpe", variant.estimator_hash(),
                                    {"estimator": model.cpu().state_dict()},
                                    {"signal_shape": list(signal_shape), "history": history,
                                     "lambda": lam, "seed": seed})
                    if splits.test:
                        predictions = predict_poses(model, splits.test, config.hpe.batch_size, self.device)
                        reports.append(evaluate_predictions(predictions, pose_labels(splits.test),
                                                            pa_scale=config.metrics.pa_scale))
                if reports:
                    summary[lam] = summarize_repetitions(reports)
        finally:
            if store is not None:
                store.close()
        if summary and not single:
            write_summary(summary, self.path("summary.txt"), repeats)
        elif not splits.test:
            log_warning("Test split is empty; no metrics were computed")
        return summary

    # Stage 4: evaluation

    def evaluate(self, predictions_path: Optional[str] = None):
        """
        Score a predictions file (or the trained estimator's test-split
        predictions) and write the report, CDF table and CDF plot.
        """
        from .metrics import evaluate_predictions, plot_cdf, write_cdf_csv, write_report
        from ..data import pose_labels, read_predictions, write_predictions
        from ..db import load_checkpoint
        from ..services.hpe import predict_poses

        config = self.config
        splits = self.load_splits()
        if predictions_path is None:
            skeleton_map = self.skeleton_map()
            payload = load_checkpoint(self.path("hpe.pt"), "hpe", config.estimator_hash(), force=self.force)
            model = self.build_estimator(self._signal_shape(splits), skeleton_map)
            model.load_state_dict(payload["state_dicts"]["estimator"])
            predictions = predict_poses(model, splits.test, config.hpe.batch_size, self.device)
            predictions_path = write_predictions(predictions, self.path("predictions.json"))
        predictions = read_predictions(predictions_path)
        labels = pose_labels(splits.train + splits.validation + splits.test)
        report = evaluate_predictions(predictions, labels, pa_scale=config.metrics.pa_scale)
        report.extra["estimator_hash"] = config.estimator_hash()
        report.extra["predictions"] = predictions_path
        write_report(report, self.path("report.txt"))
        write_cdf_csv(report.cdf, self.path("cdf.csv"))
        plot_cdf(report.cdf, self.path("cdf.png"), label=config.data.source)
        return report

    # Stage 5: synthetic benchmark

    def simulate(self, per_domain: int = 200, domains: Sequence[str] = ("A", "B", "Z"),
                 signal_shape: Tuple[int, int] = (8, 32), noise_std: float = 0.05,
                 seed: int = 0) -> List[RFSample]:
        """Write the additive-simulator benchmark to ``<data root>/synthetic``."""
        from ..data import build_synthetic_benchmark, make_simulator_config

        if per_domain < 1:
            raise ConfigurationError("Each synthetic domain needs at least one sample")
        simulator = make_simulator_config(builtin_skeleton_map("synthetic"), signal_shape, domains,
                                          noise_std=noise_std, seed=seed)
        root = os.path.join(self.config.data.root, "synthetic")
        return build_synthetic_benchmark(simulator, root, {d: per_domain for d in domains}, seed=seed)


def _recentered(sample: RFSample) -> RFSample:
    pose = np.asarray(sample.pose)
    return RFSample(sample_id=sample.sample_id, signal=sample.signal, pose=pose - pose[:1],
                    subject_id=sample.subject_id, environment_id=sample.environment_id,
                    valid_points=sample.valid_points, metadata=dict(sample.metadata))
