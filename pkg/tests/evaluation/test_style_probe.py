"""
Unit tests for style_probe.py
"""
import unittest
import numpy as np
import sys
import os

# Add the parent directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from data.synthetic import DatasetSpec, generate_synthetic_dataset
from evaluation.style_probe import style_probe, style_targets, STYLE_FACTORS
from utils.exceptions import ConfigurationError


class TestStyleProbe(unittest.TestCase):
    """Tests for the held-out ridge probe."""

    def setUp(self):
        """Two independent uniform factors over 400 rows."""
        rng = np.random.default_rng(0)
        self.targets = {'illumination': rng.uniform(0.5, 1.5, 400), 'contrast': rng.uniform(0.7, 1.3, 400)}
        self.rng = rng

    def test_self_probe(self):
        """Features that are the targets themselves are recovered almost exactly."""
        features = np.stack([self.targets['illumination'], self.targets['contrast']], axis=1)
        report = style_probe({'self': features}, self.targets, alpha=1e-8)
        for factor in STYLE_FACTORS:
            self.assertGreater(report.r2['self'][factor], 0.999999)
        self.assertGreater(report.mean_r2('self'), 0.999999)

    def test_unrelated_features(self):
        """Shuffled targets carry no information about the originals."""
        features = np.stack([self.rng.permutation(self.targets['illumination']),
                             self.rng.permutation(self.targets['contrast'])], axis=1)
        report = style_probe({'shuffled': features}, self.targets)
        for factor in STYLE_FACTORS:
            self.assertLessEqual(report.r2['shuffled'][factor], 0.05)

    def test_constant_factor(self):
        """A constant factor is skipped with a note instead of scored."""
        targets = {**self.targets, 'contrast': np.ones(400)}
        with self.assertLogs('dsfad', level='WARNING'):
            report = style_probe({'f': self.rng.normal(size=(400, 3))}, targets)
        self.assertIsNone(report.r2['f']['contrast'])
        self.assertEqual(len(report.notes), 1)
        self.assertIn('contrast', report.notes[0])
        self.assertIsNotNone(report.r2['f']['illumination'])

    def test_same_split_for_every_feature(self):
        """Two identical feature sets get identical scores."""
        features = self.rng.normal(size=(400, 3)) + self.targets['illumination'][:, None]
        report = style_probe({'a': features, 'b': features.copy()}, self.targets, seed=4)
        self.assertEqual(report.r2['a'], report.r2['b'])

    def test_mismatched_rows(self):
        """Feature and target lengths must agree."""
        with self.assertRaises(ConfigurationError):
            style_probe({'f': np.zeros((10, 2))}, self.targets)

    def test_targets_from_records(self):
        """Targets follow record order."""
        dataset = generate_synthetic_dataset(DatasetSpec(num_train_ids=1, num_test_ids=1, images_per_modality=2,
                                                         height=32, width=16, seed=1))
        targets = style_targets(dataset.records)
        self.assertEqual(set(targets), set(STYLE_FACTORS))
        self.assertEqual(targets['illumination'][0], dataset.records[0].style.illumination)
        self.assertEqual(len(targets['contrast']), len(dataset.records))


if __name__ == '__main__':
    unittest.main()
