#!/usr/bin/env python3
"""
Tests for run configuration loading, overrides and stage hashes.
"""

import os
import sys
import tempfile
import unittest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from rf2pose.config import RunConfig, load_run_config, parse_override
from rf2pose.core.errors import ConfigurationError, ParseError


class RunConfigTest(unittest.TestCase):

    def test_defaults(self):
        config = load_run_config()
        self.assertEqual(config.data.source, "synthetic")
        self.assertEqual(config.diffusion.steps, 1000)
        self.assertEqual(config.hpe.lam, 1.0)
        self.assertTrue(config.counterfactual.shared_noise)

    def test_overrides_are_coerced(self):
        config = load_run_config(overrides=[
            ("hpe.lambda", "0.4"), ("model.filters", "8, 16"), ("experiment.lambda_sweep", "0,0.5,1"),
            ("counterfactual.shared_noise", "no"), ("data.held_out", "p1,p2"), ("diffusion.steps", "200"),
        ])
        self.assertEqual(config.hpe.lam, 0.4)
        self.assertEqual(config.model.filters, (8, 16))
        self.assertEqual(config.experiment.lambda_sweep, (0.0, 0.5, 1.0))
        self.assertFalse(config.counterfactual.shared_noise)
        self.assertEqual(config.data.held_out, ("p1", "p2"))
        self.assertEqual(config.diffusion.steps, 200)

    def test_rejections(self):
        for key, value in (("hpe.lambda", "-1"), ("model.kind", "vae"), ("data.source", "lidar"),
                           ("diffusion.ddim_steps", "0"), ("model.kernels", "4,4,4"), ("nosection", "1"),
                           ("hpe.unknown", "1"), ("diffusion.steps", "many"), ("model.filters", "1,2")):
            with self.subTest(key=key):
                with self.assertRaises(ConfigurationError):
                    load_run_config(overrides=[(key, value)])

    def test_parse_override(self):
        self.assertEqual(parse_override(" hpe.lambda = 0.5 "), ("hpe.lambda", "0.5"))
        with self.assertRaises(ConfigurationError):
            parse_override("hpe.lambda")

    def test_file_round_trip(self):
        config = load_run_config(overrides=[("hpe.lambda", "0.2"), ("model.kind", "cgan")])
        with tempfile.TemporaryDirectory() as root:
            path = os.path.join(root, "run.cfg")
            with open(path, "w") as f:
                f.write("# saved run\n" + config.to_text())
            loaded = load_run_config(path)
            self.assertEqual(loaded, config)
            with open(path, "a") as f:
                f.write("not a setting\n")
            with self.assertRaises(ParseError):
                load_run_config(path)
        with self.assertRaises(ConfigurationError):
            load_run_config(os.path.join(root, "gone.cfg"))

    def test_stage_hashes(self):
        base = RunConfig()
        other = load_run_config(overrides=[("hpe.lambda", "0.5")])
        self.assertEqual(base.generator_hash(), other.generator_hash())
        self.assertEqual(base.targets_hash(), other.targets_hash())
        self.assertNotEqual(base.estimator_hash(), other.estimator_hash())

        seeded = load_run_config(overrides=[("counterfactual.seed", "3")])
        self.assertEqual(base.generator_hash(), seeded.generator_hash())
        self.assertNotEqual(base.targets_hash(), seeded.targets_hash())

        moved = load_run_config(overrides=[("data.root", "/elsewhere"), ("paths.output_dir", "/tmp/x")])
        self.assertEqual(base.estimator_hash(), moved.estimator_hash())

        changed = load_run_config(overrides=[("diffusion.steps", "50"), ("diffusion.ddim_steps", "10")])
        self.assertNotEqual(base.generator_hash(), changed.generator_hash())
        self.assertNotEqual(base.estimator_hash(), changed.estimator_hash())

    def test_samplers_share_the_generator(self):
        base = RunConfig()
        for overrides in ([("model.kind", "ddim")],
                          [("model.kind", "ddim"), ("diffusion.ddim_steps", "50"), ("diffusion.eta", "1")],
                          [("diffusion.eta", "0.5")]):
            with self.subTest(overrides=overrides):
                other = load_run_config(overrides=overrides)
                self.assertEqual(base.generator_hash(), other.generator_hash())
        ddim = load_run_config(overrides=[("model.kind", "ddim")])
        fewer_steps = load_run_config(overrides=[("model.kind", "ddim"), ("diffusion.ddim_steps", "50")])
        self.assertNotEqual(base.targets_hash(), ddim.targets_hash())
        self.assertNotEqual(ddim.targets_hash(), fewer_steps.targets_hash())
        # ddim settings are ignored by the ancestral sampler
        self.assertEqual(base.targets_hash(), load_run_config(overrides=[("diffusion.eta", "0.5")]).targets_hash())

        cgan = load_run_config(overrides=[("model.kind", "cgan")])
        self.assertNotEqual(base.generator_hash(), cgan.generator_hash())


if __name__ == '__main__':
    unittest.main()
