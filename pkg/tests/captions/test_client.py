"""
Unit tests for client.py
"""
import unittest
import tempfile
import numpy as np
import sys
import os

# Add the parent directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from captions.client import (
    CaptionConfig, DeterministicCaptionClient, request_caption, caption_image, build_corpus,
    caption_dataset, save_corpus, load_corpus
)
from captions.templates import template_bank, render_caption
from data.synthetic import DatasetSpec, generate_synthetic_dataset
from tests.mocks.caption_clients import FailingCaptionClient, EmptyCaptionClient
from utils.exceptions import CaptionSourceError, ConfigurationError, MissingArtifactError


class TestCaptionClient(unittest.TestCase):
    """Tests for caption backends and the corpus."""

    @classmethod
    def setUpClass(cls):
        """Build one small dataset for every test."""
        cls.dataset = generate_synthetic_dataset(DatasetSpec(num_train_ids=3, num_test_ids=2, images_per_modality=2,
                                                             height=32, width=16, seed=5))

    def test_default_client_delegates(self):
        """The deterministic client returns render_caption's output."""
        client = DeterministicCaptionClient(self.dataset)
        template = template_bank()[4]
        for record in self.dataset.records[:6]:
            self.assertEqual(client.describe(record.key, template), render_caption(record.identity, template))

    def test_failing_client_falls_back(self):
        """A raising backend still yields the rendered caption."""
        client = FailingCaptionClient(self.dataset)
        record = self.dataset.records[0]
        template = template_bank()[1]
        with self.assertLogs('dsfad', level='WARNING'):
            caption = caption_image(record, template, client, context_length=32)
        self.assertEqual(caption.text, render_caption(record.identity, template))
        self.assertEqual(client.calls, 1)

    def test_empty_description_is_an_error(self):
        """An empty answer violates the client contract."""
        with self.assertRaises(CaptionSourceError):
            request_caption(EmptyCaptionClient(), 'train_0_visible_0', template_bank()[0])

    def test_corpus_covers_every_image(self):
        """Every image gets one caption keyed by its image key."""
        corpus = build_corpus(self.dataset, seed=1, context_length=32)
        self.assertEqual(set(corpus), {r.key for r in self.dataset.records})
        for key, caption in corpus.items():
            self.assertEqual(caption.image_key, key)
            self.assertEqual(caption.tokens.shape, (32,))

    def test_corpus_deterministic(self):
        """The same seed draws the same templates."""
        a = build_corpus(self.dataset, seed=4, context_length=32)
        b = build_corpus(self.dataset, seed=4, context_length=32)
        self.assertEqual({k: v.template_id for k, v in a.items()}, {k: v.template_id for k, v in b.items()})

    def test_fixed_mode_uses_one_template(self):
        """Fixed text mode always uses template 0."""
        corpus = caption_dataset(self.dataset, CaptionConfig(seed=2, text_mode='fixed', context_length=32))
        self.assertEqual({c.template_id for c in corpus.values()}, {0})

    def test_external_backend(self):
        """The external backend loads module:Class and uses its answers."""
        config = CaptionConfig(seed=2, backend='external', client='tests.mocks.caption_clients:UppercaseCaptionClient',
                               context_length=32)
        with self.assertRaises(ConfigurationError):
            caption_dataset(self.dataset, CaptionConfig(backend='external', client='tests.mocks.caption_clients:Nope'))
        corpus = caption_dataset(self.dataset, config)
        record = self.dataset.records[0]
        self.assertTrue(corpus[record.key].text.isupper())

    def test_config_validation(self):
        """Bad text modes, backends and a missing client are rejected."""
        with self.assertRaises(ConfigurationError):
            CaptionConfig(text_mode='random').validate()
        with self.assertRaises(ConfigurationError):
            CaptionConfig(backend='llava').validate()
        with self.assertRaises(ConfigurationError):
            CaptionConfig(backend='external', client='').validate()

    def test_save_and_load(self):
        """The TSV corpus reads back with the same text, template ids and tokens."""
        corpus = build_corpus(self.dataset, seed=6, context_length=32)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'captions.tsv')
            save_corpus(corpus, self.dataset, path)
            with open(path) as handle:
                first = handle.readline().rstrip('\n').split('\t')
            loaded = load_corpus(path, context_length=32)
        self.assertEqual(len(first), 6)
        self.assertEqual(set(loaded), set(corpus))
        for key, caption in corpus.items():
            self.assertEqual(loaded[key].text, caption.text)
            self.assertEqual(loaded[key].template_id, caption.template_id)
            self.assertTrue(np.array_equal(loaded[key].tokens, caption.tokens))

    def test_load_missing(self):
        """A missing corpus file names the caption stage."""
        with self.assertRaises(MissingArtifactError):
            load_corpus('/nonexistent/captions.tsv')


if __name__ == '__main__':
    unittest.main()
