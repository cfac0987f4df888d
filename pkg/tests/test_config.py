# -*- coding: utf-8 -*-
""" Unit tests for Config Module

"""

import os
import shutil
import tempfile
import unittest

from pycarleman import config as cf
from pycarleman.errors import ConfigError

class BasicTests(unittest.TestCase):
    sample = """
[grid]
cells = 16
time_steps = 20

[weights]
lambda = 2.5
method = poisson

[carleman]
s = 1,2,4,8,16
project_source = no

[subdomains]
omega = 0.2:0.8,0.25:0.75

[output]
dir = runs/a
"""

    def setUp(self):
        self.out_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.out_dir)

    def test_defaults(self):
        config = cf.RunConfig().validate()
        self.assertEqual(config.cells, 32)
        self.assertEqual(config.s, (1.0, 2.0, 4.0, 8.0))
        self.assertEqual(config.T, 2.0)
        self.assertIsNone(config.peak)
        self.assertEqual(config.bumps, 10)

    def test_parse_sections(self):
        config = cf.parse_config(self.sample)
        self.assertEqual(config.cells, 16)
        self.assertEqual(config.time_steps, 20)
        self.assertEqual(config.lam, 2.5)
        self.assertEqual(config.method, "poisson")
        self.assertEqual(config.s, (1.0, 2.0, 4.0, 8.0, 16.0))
        self.assertFalse(config.project_source)
        self.assertEqual(config.omega, ((0.2, 0.8), (0.25, 0.75)))
        self.assertEqual(config.out_dir, "runs/a")
        self.assertEqual(config.c0, 1.0)

    def test_unknown_entries_are_rejected(self):
        with self.assertRaises(ConfigError):
            cf.parse_config("[grid]\nsize = 3\n")
        with self.assertRaises(ConfigError):
            cf.parse_config("[mesh]\ncells = 3\n")
        with self.assertRaises(ConfigError):
            cf.parse_config("[grid]\ncells = many\n")
        with self.assertRaises(ConfigError):
            cf.parse_config("cells = 3\n")

    def test_invariants(self):
        with self.assertRaises(ConfigError):
            cf.parse_config("[carleman]\ns = 4,2,8,16\n")
        with self.assertRaises(ConfigError):
            cf.RunConfig().with_overrides(m=-1)
        with self.assertRaises(ConfigError):
            cf.RunConfig().with_overrides(g="two")
        with self.assertRaises(ConfigError):
            cf.RunConfig().with_overrides(bumps=1)

    def test_overrides_skip_missing_values(self):
        config = cf.RunConfig().with_overrides(cells=64, seed=None, out_dir="x")
        self.assertEqual(config.cells, 64)
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.out_dir, "x")

    def test_save_and_load(self):
        original = cf.parse_config(self.sample).with_overrides(peak=1.5, obstruction_center=(0.2, 0.5))
        path = cf.save_config(os.path.join(self.out_dir, "run.ini"), original)
        self.assertEqual(cf.load_config(path), original)

    def test_missing_file(self):
        with self.assertRaises(ConfigError) as context:
            cf.load_config(os.path.join(self.out_dir, "absent.ini"))
        self.assertIn("does not exist", str(context.exception))
        with self.assertRaises(ConfigError):
            cf.load_config("")

if __name__ == "__main__":
    unittest.main()
