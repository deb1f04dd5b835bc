"""
Unit tests for sampler.py
"""
import unittest
from collections import Counter
import numpy as np
import sys
import os

# Add the parent directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from captions.client import build_corpus
from data.augmentation import AugmentConfig
from data.sampler import pk_sample
from data.synthetic import DatasetSpec, generate_synthetic_dataset, VISIBLE, INFRARED
from utils.exceptions import SamplingError, BatchStructureError


class TestPKSampler(unittest.TestCase):
    """Tests for the cross-modality PK sampler."""

    @classmethod
    def setUpClass(cls):
        """Build one dataset and corpus for every test."""
        cls.dataset = generate_synthetic_dataset(DatasetSpec(num_train_ids=8, num_test_ids=2, images_per_modality=4,
                                                             height=32, width=16, seed=3))
        cls.corpus = build_corpus(cls.dataset, seed=3, context_length=32)

    def test_batch_size_and_order(self):
        """P=8, K=4 gives 64 items, visible block first."""
        batch = pk_sample(self.dataset, self.corpus, P=8, K=4, rng=np.random.default_rng(0))
        batch.check()
        self.assertEqual(len(batch), 64)
        self.assertEqual(batch.pixels.shape, (64, 3, 32, 16))
        modalities = [record.modality for record, _ in batch.items]
        self.assertEqual(modalities[:32], [VISIBLE] * 32)
        self.assertEqual(modalities[32:], [INFRARED] * 32)
        self.assertEqual(list(batch.modalities), [0] * 32 + [1] * 32)

    def test_minimal_batch(self):
        """P=1, K=1 gives one image per modality of the same identity."""
        batch = pk_sample(self.dataset, self.corpus, P=1, K=1, rng=np.random.default_rng(1))
        self.assertEqual(len(batch), 2)
        self.assertEqual(batch.labels[0], batch.labels[1])
        self.assertEqual(batch.items[0][0].modality, VISIBLE)
        self.assertEqual(batch.items[1][0].modality, INFRARED)

    def test_captions_follow_images(self):
        """Every image carries its own caption and tokens."""
        batch = pk_sample(self.dataset, self.corpus, P=2, K=2, rng=np.random.default_rng(2))
        for record, caption in batch.items:
            self.assertEqual(caption.image_key, record.key)
        self.assertEqual(batch.tokens.shape, (8, 32))

    def test_deterministic_under_rng(self):
        """The same generator state gives the same batch, augmentation included."""
        config = AugmentConfig(enabled=True)
        a = pk_sample(self.dataset, self.corpus, 4, 2, np.random.default_rng(5), config)
        b = pk_sample(self.dataset, self.corpus, 4, 2, np.random.default_rng(5), config)
        self.assertEqual([r.key for r, _ in a.items], [r.key for r, _ in b.items])
        self.assertTrue(np.array_equal(a.pixels, b.pixels))

    def test_identity_frequency_is_uniform(self):
        """With P=2 over 8 identities each identity appears in 25% of batches (+-3%)."""
        rng = np.random.default_rng(11)
        counts = Counter()
        trials = 10000
        for _ in range(trials):
            batch = pk_sample(self.dataset, self.corpus, P=2, K=1, rng=rng)
            counts.update(set(int(label) for label in batch.labels))
        for label in range(8):
            self.assertAlmostEqual(counts[label] / trials, 0.25, delta=0.03)

    def test_too_many_identities(self):
        """Asking for more identities than the train split holds names the shortfall."""
        with self.assertRaises(SamplingError) as ctx:
            pk_sample(self.dataset, self.corpus, P=9, K=1)
        self.assertIn('short by 1', str(ctx.exception))

    def test_too_many_images(self):
        """K above the per-identity image count is a sampling error."""
        with self.assertRaises(SamplingError):
            pk_sample(self.dataset, self.corpus, P=2, K=5)

    def test_missing_caption(self):
        """An image without a caption cannot be sampled."""
        with self.assertRaises(SamplingError):
            pk_sample(self.dataset, {}, P=1, K=1, rng=np.random.default_rng(0))

    def test_check_detects_broken_structure(self):
        """Dropping an item breaks the 2PK count."""
        batch = pk_sample(self.dataset, self.corpus, P=2, K=2, rng=np.random.default_rng(4))
        batch.items = batch.items[:-1]
        with self.assertRaises(BatchStructureError):
            batch.check()


if __name__ == '__main__':
    unittest.main()
