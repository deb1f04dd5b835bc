"""
Caption sources and the caption corpus.

A caption client turns (image, template) into a description. The shipped
client renders attributes deterministically; external backends plug in
through the same interface and fall back to the renderer on failure.
"""
import importlib
import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import pandas as pd

from captions.templates import render_caption, select_template, template_bank
from captions.tokenizer import tokenize
from config.settings import CONTEXT_LENGTH, TEXT_MODE, CAPTION_BACKEND, EXTERNAL_CAPTION_CLIENT, DATASET_SEED
from data.synthetic import MODALITIES
from utils.exceptions import CaptionSourceError, ConfigurationError, MissingArtifactError

logger = logging.getLogger('dsfad')

CORPUS_COLUMNS = ['split', 'identity', 'modality', 'image_idx', 'template_id', 'text']
TEXT_MODES = ('diverse', 'fixed')
BACKENDS = ('deterministic', 'external')


@dataclass(frozen=True)
class CaptionConfig:
    seed: int = DATASET_SEED
    text_mode: str = TEXT_MODE
    backend: str = CAPTION_BACKEND
    client: str = EXTERNAL_CAPTION_CLIENT  # module:Class, used by the external backend
    context_length: int = CONTEXT_LENGTH

    def validate(self):
        if self.text_mode not in TEXT_MODES:
            raise ConfigurationError(f"captions.text_mode must be one of {TEXT_MODES}, got '{self.text_mode}'")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"captions.backend must be one of {BACKENDS}, got '{self.backend}'")
        if self.backend == 'external' and not self.client:
            raise ConfigurationError("captions.backend = external needs captions.client = module:Class")


@dataclass(frozen=True)
class CaptionRecord:
    text: str
    template_id: int
    tokens: np.ndarray
    image_key: str


class CaptionCorpus(dict):
    """Image key -> CaptionRecord."""


class CaptionClient(ABC):
    """Produces a description of one image following one template."""

    @abstractmethod
    def describe(self, image_path, template):
        """
        Describe an image.

        Args:
            image_path (str): Path (or key) of the image tensor
            template (CaptionTemplate): Sentence structure to follow

        Returns:
            str: Non-empty description
        """


class DeterministicCaptionClient(CaptionClient):
    """Renders the image's ground-truth attributes into the template."""

    def __init__(self, dataset):
        self.dataset = dataset

    def describe(self, image_path, template):
        key = os.path.splitext(os.path.basename(image_path))[0]
        record = self.dataset.record_by_key(key)
        return render_caption(record.identity, template)


def load_client(dotted_path, dataset):
    """Instantiate an external client from 'package.module:ClassName'; the class receives the dataset."""
    if not dotted_path or ':' not in dotted_path:
        raise ConfigurationError(f"External caption client must be given as module:Class, got '{dotted_path}'")
    module_name, class_name = dotted_path.split(':', 1)
    try:
        cls = getattr(importlib.import_module(module_name), class_name)
    except (ImportError, AttributeError) as e:
        raise ConfigurationError(f"Cannot load caption client {dotted_path}: {e}") from e
    return cls(dataset)


def request_caption(client, image_path, template):
    """Ask a client for a caption, turning every failure into CaptionSourceError."""
    try:
        text = client.describe(image_path, template)
    except CaptionSourceError:
        raise
    except Exception as e:
        raise CaptionSourceError(f"Caption backend failed for {image_path}: {e}") from e
    if not isinstance(text, str) or not text.strip():
        raise CaptionSourceError(f"Caption backend returned an empty description for {image_path}")
    return text


def caption_image(record, template, client=None, context_length=CONTEXT_LENGTH):
    """
    Caption one image, falling back to the deterministic renderer when the client fails.

    Args:
        record (ImageRecord): Image to describe
        template (CaptionTemplate): Selected sentence structure
        client (CaptionClient): Optional external backend
        context_length (int): Token sequence length

    Returns:
        CaptionRecord: Text, template id and tokens
    """
    text = None
    if client is not None:
        try:
            text = request_caption(client, record.key, template)
        except CaptionSourceError as e:
            logger.warning(f"{e}; falling back to deterministic renderer")
    if text is None:
        text = render_caption(record.identity, template)
    return CaptionRecord(text=text, template_id=template.template_id,
                         tokens=tokenize(text, context_length), image_key=record.key)


def build_corpus(dataset, seed, client=None, text_mode=TEXT_MODE, context_length=CONTEXT_LENGTH):
    """
    Caption every image of a dataset, drawing a template per image.

    Args:
        dataset (Dataset): Images to describe
        seed (int): Seed of the template draws
        client (CaptionClient): Optional external backend
        text_mode (str): 'diverse' draws from the full bank, 'fixed' always uses template 0
        context_length (int): Token sequence length

    Returns:
        CaptionCorpus: Caption per image key
    """
    if text_mode not in TEXT_MODES:
        raise ConfigurationError(f"captions.text_mode must be one of {TEXT_MODES}, got '{text_mode}'")
    bank = template_bank() if text_mode == 'diverse' else template_bank()[:1]
    rng = np.random.default_rng(seed)
    corpus = CaptionCorpus()
    for record in dataset.records:
        template = select_template(rng, bank)
        corpus[record.key] = caption_image(record, template, client, context_length)
    logger.info(f"Captioned {len(corpus)} images ({text_mode} templates, seed={seed})")
    return corpus


def caption_dataset(dataset, config=None):
    """Build a corpus with the backend, seed and template mode of a CaptionConfig."""
    config = config or CaptionConfig()
    config.validate()
    client = load_client(config.client, dataset) if config.backend == 'external' else None
    return build_corpus(dataset, config.seed, client=client, text_mode=config.text_mode,
                        context_length=config.context_length)


def save_corpus(corpus, dataset, path):
    """Write the corpus as tab-separated lines: split, identity, modality, image_idx, template_id, text."""
    rows = []
    for record in dataset.records:
        caption = corpus[record.key]
        rows.append([record.split, record.identity.label, record.modality, record.index,
                     caption.template_id, caption.text])
    pd.DataFrame(rows, columns=CORPUS_COLUMNS).to_csv(path, sep='\t', header=False, index=False)
    logger.info(f"Saved {len(rows)} captions to {path}")


def load_corpus(path, context_length=CONTEXT_LENGTH):
    """Read a corpus written by save_corpus, re-tokenizing every line."""
    if not os.path.exists(path):
        raise MissingArtifactError(f"No caption corpus at {path}; run the caption stage first")
    frame = pd.read_csv(path, sep='\t', header=None, names=CORPUS_COLUMNS,
                        dtype={'split': str, 'modality': str, 'text': str}, keep_default_na=False)
    corpus = CaptionCorpus()
    for row in frame.itertuples(index=False):
        if row.modality not in MODALITIES:
            raise ConfigurationError(f"Unknown modality '{row.modality}' in {path}")
        key = f"{row.split}_{row.identity}_{row.modality}_{row.image_idx}"
        corpus[key] = CaptionRecord(text=row.text, template_id=int(row.template_id),
                                    tokens=tokenize(row.text, context_length), image_key=key)
    return corpus
