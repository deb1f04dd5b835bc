"""
Unit tests for templates.py
"""
import re
import unittest
from collections import Counter
import numpy as np
from scipy.stats import chisquare
import sys
import os

# Add the parent directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from captions.templates import template_bank, select_template, render_caption, ATTRIBUTE_PHRASES
from data.synthetic import Identity, ATTRIBUTE_NAMES
from utils.exceptions import RenderingError


class TestTemplateBank(unittest.TestCase):
    """Tests for the template bank and selection."""

    def test_bank_size(self):
        """The bank holds ten templates with ids 0..9."""
        bank = template_bank()
        self.assertEqual(len(bank), 10)
        self.assertEqual([t.template_id for t in bank], list(range(10)))

    def test_skeletons_distinct(self):
        """No two skeletons are the same."""
        skeletons = [t.skeleton for t in template_bank()]
        self.assertEqual(len(set(skeletons)), len(skeletons))

    def test_every_skeleton_names_all_slots(self):
        """Each skeleton references all six attribute slots exactly once."""
        for template in template_bank():
            self.assertEqual(sorted(template.slot_order), sorted(ATTRIBUTE_NAMES), template.skeleton)

    def test_slots_cover_attributes(self):
        """The bank as a whole references every attribute slot."""
        slots = set()
        for template in template_bank():
            slots.update(template.slot_order)
        self.assertEqual(slots, set(ATTRIBUTE_NAMES))
        self.assertEqual(set(ATTRIBUTE_PHRASES), set(ATTRIBUTE_NAMES))

    def test_selection_deterministic(self):
        """The same seed draws the same template sequence."""
        rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
        a = [select_template(rng_a).template_id for _ in range(5)]
        b = [select_template(rng_b).template_id for _ in range(5)]
        self.assertEqual(a, b)

    def test_selection_uniform(self):
        """10,000 draws: every count in [900, 1100] and chi-square does not reject at 0.001."""
        rng = np.random.default_rng(2024)
        counts = Counter(select_template(rng).template_id for _ in range(10000))
        observed = [counts[i] for i in range(10)]
        for count in observed:
            self.assertGreaterEqual(count, 900)
            self.assertLessEqual(count, 1100)
        self.assertGreater(chisquare(observed).pvalue, 0.001)

    def test_single_template_bank(self):
        """A one-template bank always yields that template."""
        bank = template_bank()[3:4]
        rng = np.random.default_rng(0)
        self.assertTrue(all(select_template(rng, bank).template_id == 3 for _ in range(20)))


class TestRenderCaption(unittest.TestCase):
    """Tests for render_caption."""

    def setUp(self):
        """young man, dark hair, gray shirt, khaki shorts, watch."""
        self.identity = Identity.from_values(0, {
            'gender': 'man', 'age': 'young', 'hair': 'dark',
            'upper': 'gray-shirt', 'lower': 'khaki-shorts', 'accessory': 'watch',
        })

    def test_reference_sentence(self):
        """The first template reproduces the reference description."""
        self.assertEqual(
            render_caption(self.identity, template_bank()[0]),
            "A young man with dark hair is outfitted in a gray shirt and khaki shorts, accompanied by a watch.")

    def test_different_templates(self):
        """Two templates give different sentences about the same attributes."""
        a = render_caption(self.identity, template_bank()[0])
        b = render_caption(self.identity, template_bank()[2])
        self.assertNotEqual(a, b)
        for phrase in ('a gray shirt', 'khaki shorts', 'a watch'):
            self.assertIn(phrase, a)
            self.assertIn(phrase, b)

    def test_pure(self):
        """Rendering twice gives the same string."""
        template = template_bank()[5]
        self.assertEqual(render_caption(self.identity, template), render_caption(self.identity, template))

    def test_every_template_renders_every_identity(self):
        """All attribute combinations of the first values render under every template."""
        for template in template_bank():
            text = render_caption(self.identity, template)
            self.assertNotIn('{', text)

    def test_phrase_set_same_across_bank(self):
        """Every template mentions the same attribute phrases for one identity."""
        identities = [self.identity, Identity(label=1, attributes=(1, 2, 3, 5, 3, 4))]
        for identity in identities:
            mentioned = []
            for template in template_bank():
                text = render_caption(identity, template).lower()
                mentioned.append({phrase for phrases in ATTRIBUTE_PHRASES.values() for phrase in phrases.values()
                                  if re.search(r'(?<![\w-])' + re.escape(phrase) + r'(?![\w-])', text)})
            self.assertEqual(len(mentioned[0]), len(ATTRIBUTE_NAMES))
            for phrases in mentioned[1:]:
                self.assertEqual(phrases, mentioned[0])

    def test_missing_slot(self):
        """A template slot without a phrase raises RenderingError."""
        template = template_bank()[0].__class__(template_id=99, skeleton="A {mood} {gender}.")
        with self.assertRaises(RenderingError):
            render_caption(self.identity, template)


if __name__ == '__main__':
    unittest.main()
