"""
Test doubles for the external caption backend.
"""
import logging

from captions.client import CaptionClient
from captions.templates import render_caption

logger = logging.getLogger('dsfad')


class FailingCaptionClient(CaptionClient):
    """Raises on every request, like an unreachable service."""

    def __init__(self, dataset=None):
        self.dataset = dataset
        self.calls = 0

    def describe(self, image_path, template):
        self.calls += 1
        raise ConnectionError(f"caption service unavailable for {image_path}")


class EmptyCaptionClient(CaptionClient):
    """Answers every request with an empty description."""

    def __init__(self, dataset=None):
        self.dataset = dataset

    def describe(self, image_path, template):
        return '   '


class UppercaseCaptionClient(CaptionClient):
    """Returns the rendered caption in upper case; loadable through module:Class."""

    def __init__(self, dataset):
        self.dataset = dataset

    def describe(self, image_path, template):
        record = self.dataset.record_by_key(image_path)
        return render_caption(record.identity, template).upper()
