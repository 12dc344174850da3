#!/usr/bin/env python3
"""
Tests for the dataset layout, splits, normalization and the RF simulator.
"""

import os
import sys
import tempfile
import unittest

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from rf2pose.config import HELD_OUT_COUNTS
from rf2pose.core.errors import ConfigurationError, ParseError, ValidationError
from rf2pose.core.models import RFSample, SplitSpec
from rf2pose.core.skeleton import builtin_skeleton_map
from rf2pose.data import (bone_contributions, build_synthetic_benchmark, fit_normalization, load_dataset,
                          load_record, load_simulator_config, load_truth, make_simulator_config, make_splits,
                          normalize, pad_point_cloud, read_blob, read_predictions, save_record, simulate_rf,
                          write_blob, write_dataset, write_predictions)
from rf2pose.data.datasets import MANIFEST_HEADER


def make_sample(i, subject="a", environment="e", shape=(4, 6), joints=6, seed=None):
    rng = np.random.default_rng(i if seed is None else seed)
    return RFSample(sample_id=f"x{i:04d}", signal=rng.normal(size=shape).astype(np.float32),
                    pose=rng.normal(size=(joints, 3)).astype(np.float32), subject_id=subject,
                    environment_id=environment)


class DatasetLayoutTest(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.root = self.temp_dir.name

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_blob_is_exact(self):
        path = os.path.join(self.root, "one.bin")
        signal = np.arange(12, dtype=np.float32).reshape(3, 4)
        pose = np.linspace(-1, 1, 18, dtype=np.float32).reshape(6, 3)
        write_blob(path, signal, pose)
        self.assertEqual(os.path.getsize(path), 16 + 48 + 16 + 72)
        loaded_signal, loaded_pose = read_blob(path)
        self.assertTrue(np.array_equal(loaded_signal, signal))
        self.assertTrue(np.array_equal(loaded_pose, pose))

    def test_blob_corruption(self):
        path = os.path.join(self.root, "bad.bin")
        write_blob(path, np.zeros((2, 2)), np.zeros((6, 3)))
        with open(path, "rb") as f:
            data = f.read()
        with open(path, "wb") as f:
            f.write(data[:-4])
        with self.assertRaises(ParseError):
            read_blob(path)
        with open(path, "wb") as f:
            f.write(data + b"\0\0\0\0")
        with self.assertRaises(ParseError):
            read_blob(path)

    def test_dataset_round_trip(self):
        samples = [make_sample(i, subject=f"s{i % 2}") for i in range(5)]
        write_dataset(samples, self.root, "synthetic")
        loaded = load_dataset("synthetic", self.root)
        self.assertEqual([s.sample_id for s in loaded], [s.sample_id for s in samples])
        for original, copy in zip(samples, loaded):
            self.assertTrue(np.array_equal(original.signal, copy.signal))
            self.assertTrue(np.array_equal(original.pose, copy.pose))
            self.assertEqual(copy.subject_id, original.subject_id)
            self.assertEqual(copy.metadata["source"], "synthetic")

    def test_manifest_errors(self):
        with self.assertRaises(ConfigurationError):
            load_dataset("synthetic", self.root)
        with self.assertRaises(ConfigurationError):
            load_dataset("radio", self.root)
        with open(os.path.join(self.root, "manifest.txt"), "w") as f:
            f.write(MANIFEST_HEADER + "\nonly three fields\n")
        with self.assertRaises(ParseError):
            load_dataset("synthetic", self.root)
        with open(os.path.join(self.root, "manifest.txt"), "w") as f:
            f.write(MANIFEST_HEADER + "\ns0 a e blobs/s0.bin many\n")
        with self.assertRaises(ParseError) as ctx:
            load_dataset("synthetic", self.root)
        self.assertIn("invalid point count", str(ctx.exception))
        self.assertIsNone(ctx.exception.__cause__)
        self.assertTrue(ctx.exception.__suppress_context__)

    def test_shape_validation(self):
        with self.assertRaises(ValidationError):
            write_dataset([make_sample(0, shape=(60, 100), joints=14)], self.root, "wifi")
        mixed = [make_sample(0), make_sample(1, shape=(4, 7))]
        os.makedirs(os.path.join(self.root, "blobs"), exist_ok=True)
        lines = [MANIFEST_HEADER]
        for sample in mixed:
            write_blob(os.path.join(self.root, "blobs", sample.sample_id + ".bin"), sample.signal, sample.pose)
            lines.append(f"{sample.sample_id} a e blobs/{sample.sample_id}.bin")
        with open(os.path.join(self.root, "manifest.txt"), "w") as f:
            f.write("\n".join(lines) + "\n")
        with self.assertRaises(ValidationError):
            load_dataset("synthetic", self.root)

    def test_mmwave_padding(self):
        points = np.random.default_rng(0).normal(size=(10, 5)).astype(np.float32)
        os.makedirs(os.path.join(self.root, "blobs"))
        write_blob(os.path.join(self.root, "blobs", "m0.bin"), points.T, np.zeros((17, 3)))
        with open(os.path.join(self.root, "manifest.txt"), "w") as f:
            f.write(f"{MANIFEST_HEADER}\n# source mmwave\nm0 s1 room blobs/m0.bin\n")
        sample = load_dataset("mmwave", self.root)[0]
        self.assertEqual(sample.signal.shape, (5, 493))
        self.assertEqual(sample.valid_points, 10)
        self.assertTrue(np.array_equal(sample.signal[:, :10], points.T))
        self.assertFalse(sample.signal[:, 10:].any())

    def test_point_cloud_limits(self):
        signal, count = pad_point_cloud(np.ones((493, 5)))
        self.assertEqual(count, 493)
        self.assertTrue(signal.all())
        with self.assertRaises(ValidationError):
            pad_point_cloud(np.ones((494, 5)))
        with self.assertRaises(ValidationError):
            pad_point_cloud(np.ones((10, 4)))

    def test_predictions_file(self):
        path = os.path.join(self.root, "out", "predictions.json")
        predictions = {"b": np.ones((6, 3)) * 0.25, "a": np.zeros((6, 3))}
        write_predictions(predictions, path)
        loaded = read_predictions(path)
        self.assertEqual(sorted(loaded), ["a", "b"])
        self.assertTrue(np.array_equal(loaded["b"], predictions["b"]))
        with open(path, "w") as f:
            f.write("[1, 2]")
        with self.assertRaises(ParseError):
            read_predictions(path)
        with self.assertRaises(ConfigurationError):
            read_predictions(os.path.join(self.root, "missing.json"))


class SplitTest(unittest.TestCase):

    def test_random_split_sizes(self):
        samples = [make_sample(i) for i in range(1000)]
        splits = make_splits(samples, SplitSpec(mode="random", seed=3))
        self.assertEqual(splits.sizes(), (800, 100, 100))
        ids = [s.sample_id for part in (splits.train, splits.validation, splits.test) for s in part]
        self.assertEqual(sorted(ids), sorted(s.sample_id for s in samples))
        again = make_splits(samples, SplitSpec(mode="random", seed=3))
        self.assertEqual([s.sample_id for s in again.test], [s.sample_id for s in splits.test])

    def test_cross_subject_wifi_protocol(self):
        samples = [make_sample(i, subject=f"p{i % 7}") for i in range(140)]
        splits = make_splits(samples, SplitSpec(mode="cross-subject", held_out_count=1, seed=0))
        self.assertEqual(len(splits.held_out), 1)
        train_subjects = {s.subject_id for s in splits.train + splits.validation}
        self.assertEqual(len(train_subjects), 6)
        self.assertEqual({s.subject_id for s in splits.test}, set(splits.held_out))
        self.assertEqual(len(splits.test), 20)
        self.assertEqual(len(splits.validation), 12)

    def test_held_out_counts_per_source(self):
        # (train ids, held-out ids) for subjects and environments of each source
        inventories = {
            "wifi": {"cross-subject": (6, 1), "cross-environment": (2, 1)},
            "uwb": {"cross-subject": (5, 1), "cross-environment": (1, 1)},
            "mmwave": {"cross-subject": (32, 8), "cross-environment": (3, 1)},
        }
        for source, modes in inventories.items():
            for mode, (train_ids, held_ids) in modes.items():
                with self.subTest(source=source, mode=mode):
                    total = train_ids + held_ids
                    if mode == "cross-subject":
                        samples = [make_sample(i, subject=f"p{i % total}") for i in range(4 * total)]
                    else:
                        samples = [make_sample(i, environment=f"r{i % total}") for i in range(4 * total)]
                    count = HELD_OUT_COUNTS[(source, mode)]
                    splits = make_splits(samples, SplitSpec(mode=mode, held_out_count=count, seed=1))
                    key = (lambda s: s.subject_id) if mode == "cross-subject" else (lambda s: s.environment_id)
                    self.assertEqual(len({key(s) for s in splits.test}), held_ids)
                    self.assertEqual(len({key(s) for s in splits.train + splits.validation}), train_ids)

    def test_cross_environment_explicit(self):
        samples = [make_sample(i, environment=["A", "B", "Z"][i % 3]) for i in range(30)]
        splits = make_splits(samples, SplitSpec(mode="cross-environment", held_out=("Z",)))
        self.assertEqual(splits.held_out, ("Z",))
        self.assertTrue(all(s.environment_id == "Z" for s in splits.test))
        self.assertTrue(all(s.environment_id != "Z" for s in splits.train + splits.validation))
        with self.assertRaises(ConfigurationError):
            make_splits(samples, SplitSpec(mode="cross-environment", held_out=("Q",)))
        with self.assertRaises(ConfigurationError):
            make_splits(samples, SplitSpec(mode="cross-environment", held_out=("A", "B", "Z")))

    def test_unknown_mode(self):
        with self.assertRaises(ConfigurationError):
            make_splits([make_sample(0)], SplitSpec(mode="leave-one-out"))


class NormalizationTest(unittest.TestCase):

    def test_train_statistics(self):
        train = [make_sample(i) for i in range(20)]
        test = [make_sample(i + 100) for i in range(5)]
        record, train_n, test_n = normalize(train, test)
        stacked = np.stack([s.signal for s in train_n]).astype(np.float64)
        np.testing.assert_allclose(stacked.mean(axis=(0, 2)), 0.0, atol=1e-5)
        np.testing.assert_allclose(stacked.std(axis=(0, 2)), 1.0, atol=1e-5)
        expected = (test[0].signal - record.mean[:, None]) / record.std[:, None]
        np.testing.assert_allclose(test_n[0].signal, expected, atol=1e-5)
        self.assertTrue(np.array_equal(train[0].signal, make_sample(0).signal))

    def test_constant_channel(self):
        samples = [make_sample(i) for i in range(4)]
        for s in samples:
            s.signal[1] = 2.0
        record = fit_normalization(samples)
        self.assertEqual(record.std[1], record.eps)
        self.assertTrue(np.isfinite(record.apply(samples[0].signal)).all())

    def test_record_file(self):
        record = fit_normalization([make_sample(i) for i in range(4)])
        with tempfile.TemporaryDirectory() as root:
            loaded = load_record(save_record(record, os.path.join(root, "normalization.txt")))
        self.assertTrue(np.array_equal(loaded.mean, record.mean))
        self.assertTrue(np.array_equal(loaded.std, record.std))


class SimulatorTest(unittest.TestCase):

    def setUp(self):
        self.skeleton_map = builtin_skeleton_map("synthetic")
        self.config = make_simulator_config(self.skeleton_map, signal_shape=(8, 32), seed=1)

    def test_signal_is_sum_of_parts(self):
        pose = self.config.template + 0.1
        sample = simulate_rf(self.config, pose, "B", seed=0)
        contributions = bone_contributions(self.config, pose)
        self.assertEqual(contributions.shape, (5, 8, 32))
        np.testing.assert_allclose(sample.signal, contributions.sum(axis=0) + self.config.offsets["B"])
        self.assertEqual(sample.environment_id, "B")

    def test_bones_are_linear(self):
        pose = self.config.template
        doubled = bone_contributions(self.config, 2 * pose)
        np.testing.assert_allclose(doubled, 2 * bone_contributions(self.config, pose))

    def test_noise_is_seeded(self):
        noisy = make_simulator_config(self.skeleton_map, noise_std=0.1, seed=1)
        first = simulate_rf(noisy, noisy.template, "A", seed=7)
        second = simulate_rf(noisy, noisy.template, "A", seed=7)
        self.assertTrue(np.array_equal(first.signal, second.signal))
        self.assertGreater(np.abs(first.metadata["noise"]).max(), 0.0)

    def test_unknown_domain(self):
        with self.assertRaises(ConfigurationError):
            simulate_rf(self.config, self.config.template, "Q", seed=0)

    def test_benchmark_round_trip(self):
        with tempfile.TemporaryDirectory() as root:
            samples = build_synthetic_benchmark(self.config, root, {"A": 6, "Z": 4}, seed=2)
            self.assertEqual(len(samples), 10)
            loaded = load_dataset("synthetic", root)
            self.assertEqual({s.environment_id for s in loaded}, {"A", "Z"})
            truth = load_truth(root, "Z-00001")
            sample = next(s for s in loaded if s.sample_id == "Z-00001")
            np.testing.assert_allclose(sample.signal, truth["contributions"].sum(axis=0) + truth["offset"],
                                       atol=1e-4)
            restored = load_simulator_config(os.path.join(root, "simulator.npz"))
            self.assertTrue(np.array_equal(restored.weights, self.config.weights))
            self.assertEqual(restored.skeleton_map, self.skeleton_map)
            np.testing.assert_allclose(restored.offsets["Z"], self.config.offsets["Z"])

    def test_benchmark_needs_two_domains(self):
        with tempfile.TemporaryDirectory() as root:
            with self.assertRaises(ConfigurationError):
                build_synthetic_benchmark(self.config, root, {"A": 3})


if __name__ == '__main__':
    unittest.main()
