"""
Captions package initialization.
"""
from captions.templates import CaptionTemplate, template_bank, select_template, render_caption
from captions.tokenizer import tokenize, detokenize
from captions.client import (
    CaptionConfig, CaptionRecord, CaptionCorpus, CaptionClient, DeterministicCaptionClient,
    build_corpus, caption_dataset
)
