"""
Unit tests for main.py
"""
import unittest
from unittest.mock import patch
import contextlib
import io
import logging
import tempfile
import sys
import os

# Add the parent directory to the path so we can import main
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from main import build_parser, main, _csv

TINY_CONFIG = """\
dataset.num_train_ids = 4
dataset.num_test_ids = 2
dataset.images_per_modality = 2
dataset.height = 32
dataset.width = 16
model.trunk_widths = 4,8
model.head_width = 8
model.embed_dim = 8
model.se_reduction = 4
model.text_width = 8
model.text_depth = 1
model.text_heads = 2
captions.context_length = 32
trainer.epochs = 1
trainer.drop_epochs =
trainer.P = 2
trainer.K = 2
"""


class TestParser(unittest.TestCase):
    """Tests for the command-line surface."""

    def setUp(self):
        """Set up test cases."""
        self.parser = build_parser()

    def parse_error(self, argv):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                self.parser.parse_args(argv)

    def test_defaults(self):
        """Each command writes to runs/<command> unless told otherwise."""
        args = self.parser.parse_args(['generate'])
        self.assertEqual(args.out, os.path.join('runs', 'generate'))
        self.assertFalse(args.no_plots)
        self.assertEqual(self.parser.parse_args(['gradcheck']).max_entries, 64)

    def test_required_arguments(self):
        """A command, eval's checkpoint and sweep's parameter are required."""
        self.parse_error([])
        self.parse_error(['eval'])
        self.parse_error(['sweep'])
        self.parse_error(['sweep', '--param', 'alpha'])
        self.parse_error(['eval', '--checkpoint', 'x.ckpt', '--protocol', 'outdoor'])

    def test_lists(self):
        """Comma-separated options are split and typed."""
        self.assertEqual(_csv('0.1, 0.2,', float), [0.1, 0.2])
        self.assertEqual(_csv('baseline,full', str), ['baseline', 'full'])
        self.assertIsNone(_csv(None, int))


@patch('main.setup_logging', return_value=logging.getLogger('dsfad'))
class TestMain(unittest.TestCase):
    """Tests for command execution and exit codes."""

    def setUp(self):
        """A temporary output directory and a tiny experiment file."""
        self.tmp = tempfile.TemporaryDirectory()
        self.config_path = os.path.join(self.tmp.name, 'tiny.env')
        with open(self.config_path, 'w') as handle:
            handle.write(TINY_CONFIG)

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def run_main(self, *argv):
        return main([*argv, '--config', self.config_path, '--out', os.path.join(self.tmp.name, 'out')])

    def test_generate(self, mock_logging):
        """generate writes the dataset, the resolved config and a manifest."""
        self.assertEqual(self.run_main('generate', '--no-plots'), 0)
        out = os.path.join(self.tmp.name, 'out')
        for name in ('meta.json', 'config.txt', 'run_manifest.json'):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)

    def test_missing_dataset(self, mock_logging):
        """A missing input directory exits with 2."""
        self.assertEqual(self.run_main('train', '--dataset', os.path.join(self.tmp.name, 'nope')), 2)

    def test_missing_checkpoint(self, mock_logging):
        """A missing checkpoint exits with 2."""
        self.assertEqual(self.run_main('eval', '--checkpoint', os.path.join(self.tmp.name, 'nope.ckpt')), 2)
        self.assertEqual(self.run_main('train', '--resume', os.path.join(self.tmp.name, 'nope.ckpt')), 2)

    def test_missing_config(self, mock_logging):
        """A missing experiment file exits with 2."""
        self.assertEqual(main(['generate', '--config', os.path.join(self.tmp.name, 'nope.env'),
                               '--out', self.tmp.name]), 2)

    def test_invalid_config(self, mock_logging):
        """Configuration errors exit with 1."""
        with open(self.config_path, 'a') as handle:
            handle.write("loss.lambda1 = -1\n")
        self.assertEqual(self.run_main('generate'), 1)

    def test_gradcheck(self, mock_logging):
        """A passing audit exits with 0."""
        self.assertEqual(self.run_main('gradcheck', '--max-entries', '16'), 0)

    @patch('main.run_generate', side_effect=RuntimeError('disk on fire'))
    def test_unexpected_error(self, mock_generate, mock_logging):
        """Anything else is logged as critical and exits with 1."""
        with self.assertLogs('dsfad', level='CRITICAL'):
            self.assertEqual(self.run_main('generate'), 1)

    @patch('main.run_generate', side_effect=KeyboardInterrupt)
    def test_interrupted(self, mock_generate, mock_logging):
        """Ctrl-C exits with 130."""
        self.assertEqual(self.run_main('generate'), 130)


if __name__ == '__main__':
    unittest.main()
