"""
Unit tests for runner.py
"""
import unittest
import tempfile
import json
import pandas as pd
import sys
import os

# Add the parent directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from config.loader import parse_config
from experiments.runner import (
    variant_config, all_protocols, ablate, sweep, pipeline, load_inputs, run_gradcheck, DEFAULT_GRIDS
)
from utils.exceptions import ConfigurationError, MissingArtifactError
from utils.manifest import read_manifest, MANIFEST_NAME

RUN_SLOW = bool(os.getenv('DSFAD_RUN_SLOW'))

TINY = {
    'dataset.num_train_ids': '4',
    'dataset.num_test_ids': '2',
    'dataset.images_per_modality': '2',
    'dataset.height': '32',
    'dataset.width': '16',
    'model.trunk_widths': '4,8',
    'model.head_width': '8',
    'model.embed_dim': '8',
    'model.se_reduction': '4',
    'model.text_width': '8',
    'model.text_depth': '1',
    'model.text_heads': '2',
    'captions.context_length': '32',
    'trainer.epochs': '1',
    'trainer.drop_epochs': '',
    'trainer.P': '2',
    'trainer.K': '2',
    'trainer.prefetch': 'false',
    'eval.repeats': '2',
}


class TestVariants(unittest.TestCase):
    """Tests for ablation variant wiring."""

    def setUp(self):
        """Set up test cases."""
        self.config = parse_config(TINY)

    def test_baseline(self):
        """No decoupling and no text losses."""
        config = variant_config(self.config, 'baseline')
        self.assertFalse(config.model.decouple)
        self.assertFalse(config.model.restitute)
        self.assertEqual((config.loss.lambda1, config.loss.lambda2, config.loss.lambda3), (0.0, 0.0, 0.0))

    def test_incremental_rows(self):
        """Each row switches on one more component."""
        dsfa = variant_config(self.config, '+dsfa')
        self.assertFalse(dsfa.model.decouple)
        self.assertEqual(dsfa.loss.lambda1, self.config.loss.lambda1)
        self.assertEqual((dsfa.loss.lambda2, dsfa.loss.lambda3), (0.0, 0.0))

        smfd = variant_config(self.config, '+dsfa+smfd')
        self.assertTrue(smfd.model.decouple)
        self.assertFalse(smfd.model.restitute)
        self.assertEqual(smfd.loss.lambda2, self.config.loss.lambda2)
        self.assertEqual(smfd.loss.lambda3, 0.0)

        full = variant_config(self.config, '+dsfa+smfd+scfr')
        self.assertTrue(full.model.restitute)
        self.assertEqual(full.loss, self.config.loss)

    def test_aliases(self):
        """Short names map onto the cumulative rows."""
        self.assertEqual(variant_config(self.config, 'full'), variant_config(self.config, '+dsfa+smfd+scfr'))
        self.assertEqual(variant_config(self.config, '+smfd'), variant_config(self.config, '+dsfa+smfd'))

    def test_fixed_text(self):
        """The fixed-text row only changes the caption mode."""
        config = variant_config(self.config, 'full-fixed-text')
        self.assertEqual(config.captions.text_mode, 'fixed')
        self.assertEqual(config.model, variant_config(self.config, 'full').model)

    def test_unknown_variant(self):
        """Unknown tags are rejected."""
        with self.assertRaises(ConfigurationError):
            variant_config(self.config, '+everything')

    def test_all_protocols(self):
        """Four protocols per direction."""
        self.assertEqual(len(all_protocols(self.config)), 4)
        both = parse_config({**TINY, 'eval.both_directions': 'true'})
        names = {p.name for p in all_protocols(both)}
        self.assertEqual(len(names), 8)
        self.assertIn('indoor-multi-vis_to_ir', names)


class TestHarness(unittest.TestCase):
    """Tests for sweeps, ablations and the full pipeline on a tiny configuration."""

    def setUp(self):
        """Set up test cases."""
        self.config = parse_config(TINY)
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def test_sweep_grid_validation(self):
        """Unknown parameters, empty grids and negative values are rejected before any training."""
        with self.assertRaises(ConfigurationError):
            sweep(self.config, 'lambda4', out_dir=self.tmp.name)
        with self.assertRaises(ConfigurationError):
            sweep(self.config, 'lambda1', grid=[], out_dir=self.tmp.name)
        with self.assertRaises(ConfigurationError):
            sweep(self.config, 'm', grid=[0.5, -1.0], out_dir=self.tmp.name)
        self.assertEqual(os.listdir(self.tmp.name), [])

    def test_default_grids(self):
        """Default grids start at zero."""
        for param, grid in DEFAULT_GRIDS.items():
            self.assertEqual(grid[0], 0.0, param)
            self.assertEqual(list(grid), sorted(grid), param)

    def test_sweep(self):
        """One row per grid value."""
        table = sweep(self.config, 'm', grid=[0.5, 1.0], out_dir=self.tmp.name, workers=1)
        self.assertEqual(list(table['value']), [0.5, 1.0])
        self.assertEqual(list(table.columns), ['value', 'rank1', 'mAP', 'mINP'])
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, 'sweep_m.tsv')))
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, 'sweep_m.png')))

    def test_ablate(self):
        """Median table with deltas against the first row."""
        table = ablate(self.config, ['baseline', 'full'], self.tmp.name, seeds=[1, 2], workers=1, plots=False)
        self.assertEqual(list(table['variant']), ['baseline', '+dsfa+smfd+scfr'])
        self.assertEqual(table['delta_rank1'].iloc[0], 0.0)
        self.assertAlmostEqual(table['delta_mAP'].iloc[1], table['mAP'].iloc[1] - table['mAP'].iloc[0], places=12)
        runs = pd.read_csv(os.path.join(self.tmp.name, 'ablation_runs.tsv'), sep='\t')
        self.assertEqual(len(runs), 4)
        self.assertIn('ablation.tsv', read_manifest(self.tmp.name)['artifacts'])

    def test_pipeline(self):
        """Every stage writes its directory and manifest, listed by a top-level manifest; eval covers four protocols."""
        document = pipeline(self.config, self.tmp.name)
        self.assertEqual(len(document['reports']), 4)
        self.assertIsNotNone(document['style_probe'])
        for stage in ('dataset', 'captions', 'train', 'eval'):
            self.assertEqual(read_manifest(os.path.join(self.tmp.name, stage))['config_hash'],
                             self.config.config_hash())
        top = read_manifest(self.tmp.name)
        self.assertEqual(top['command'], 'pipeline')
        self.assertEqual(top['config_hash'], self.config.config_hash())
        self.assertEqual(top['artifacts'], sorted(os.path.join(stage, MANIFEST_NAME)
                                                  for stage in ('dataset', 'captions', 'train', 'eval')))
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, 'eval', 'rank_curve.png')))
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, 'train', 'training_curves.png')))
        with open(os.path.join(self.tmp.name, 'eval', 'metrics.json')) as handle:
            self.assertEqual(json.load(handle)['checkpoint_config_hash'], self.config.config_hash())

    def test_pipeline_reproducible(self):
        """Two runs with the same seed give identical train logs and metrics."""
        first, second = os.path.join(self.tmp.name, 'a'), os.path.join(self.tmp.name, 'b')
        a = pipeline(self.config, first, plots=False)
        b = pipeline(self.config, second, plots=False)
        self.assertEqual(a, b)
        logs = []
        for root in (first, second):
            with open(os.path.join(root, 'train', 'train_log.tsv')) as handle:
                logs.append(handle.read())
        self.assertEqual(logs[0], logs[1])

    def test_gradcheck(self):
        """The audit of a fresh tiny model passes and is written to disk."""
        report = run_gradcheck(self.config, self.tmp.name, max_entries=32)
        self.assertTrue(report.passed)
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, 'gradcheck.json')))

    def test_missing_captions(self):
        """A captions path that does not exist is a missing artifact."""
        with self.assertRaises(MissingArtifactError):
            load_inputs(self.config, captions_path=os.path.join(self.tmp.name, 'captions.tsv'))


@unittest.skipUnless(RUN_SLOW, 'set DSFAD_RUN_SLOW=1 for reference-scale runs')
class TestReferenceTrends(unittest.TestCase):
    """Directional checks on the default synthetic benchmark."""

    def setUp(self):
        """Set up test cases."""
        self.config = parse_config({}).with_seed(7)
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def test_ablation_trend(self):
        """Median mAP over three seeds: baseline <= +dsfa and the full model gains at least 2 points."""
        table = ablate(self.config, ['baseline', '+dsfa', 'full'], self.tmp.name, seeds=[7, 8, 9], plots=False)
        mAP = dict(zip(table['variant'], table['mAP']))
        self.assertLessEqual(mAP['baseline'], mAP['+dsfa'])
        self.assertGreaterEqual(mAP['+dsfa+smfd+scfr'] - mAP['baseline'], 0.02)

    def test_style_lands_in_discarded_branch(self):
        """After the reference run f_stl predicts illumination and contrast far better than f_res."""
        document = pipeline(self.config, self.tmp.name, plots=False)
        mean_r2 = document['style_probe']['mean_r2']
        self.assertGreater(mean_r2['f_stl'], mean_r2['f_res'])
        self.assertLess(mean_r2['f_res'], 0.5 * mean_r2['f_stl'])


if __name__ == '__main__':
    unittest.main()
