"""
Word-level tokenizer over the closed caption vocabulary.
"""
import functools
import re

import numpy as np

from captions.templates import ATTRIBUTE_PHRASES, template_bank
from config.settings import CONTEXT_LENGTH
from utils.exceptions import TokenizationError, ConfigurationError

PAD, BEGIN, END = 0, 1, 2
SPECIAL_TOKENS = ('<pad>', '<begin>', '<end>')
MIN_CONTEXT_LENGTH = 8

_WORD = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*|[^\sa-z0-9]")
_PUNCTUATION = set(',.:;!?')


def split_words(text):
    return _WORD.findall(text.lower())


@functools.lru_cache(maxsize=1)
def caption_vocabulary():
    """Word -> id for every word of the template skeletons and attribute phrases."""
    words = set()
    for template in template_bank():
        words.update(split_words(re.sub(r"\{[a-z]+\}", ' ', template.skeleton)))
    for phrases in ATTRIBUTE_PHRASES.values():
        for phrase in phrases.values():
            words.update(split_words(phrase))
    vocab = {token: i for i, token in enumerate(SPECIAL_TOKENS)}
    for word in sorted(words):
        vocab[word] = len(vocab)
    return vocab


def vocabulary_size():
    return len(caption_vocabulary())


def tokenize(text, context_length=CONTEXT_LENGTH):
    """
    Convert a caption to a fixed-length token sequence.

    Args:
        text (str): Caption text
        context_length (int): Output length, at least 8

    Returns:
        np.ndarray: int64 ids [BEGIN, words..., END, 0, ...], truncated keeping BEGIN/END
    """
    if context_length < MIN_CONTEXT_LENGTH:
        raise ConfigurationError(f"context_length must be >= {MIN_CONTEXT_LENGTH}, got {context_length}")
    vocab = caption_vocabulary()
    ids = []
    for word in split_words(text):
        if word not in vocab:
            raise TokenizationError(f"Word '{word}' is outside the caption vocabulary")
        ids.append(vocab[word])
    ids = [BEGIN] + ids[:context_length - 2] + [END]
    tokens = np.zeros(context_length, dtype=np.int64)
    tokens[:len(ids)] = ids
    return tokens


def detokenize(tokens):
    """Rebuild caption text from a token sequence (inverse of tokenize for untruncated captions)."""
    inverse = {i: word for word, i in caption_vocabulary().items()}
    words = []
    for token in tokens:
        token = int(token)
        if token == BEGIN:
            continue
        if token in (END, PAD):
            break
        words.append(inverse[token])
    text = ''
    for word in words:
        if word in _PUNCTUATION or not text:
            text += word
        else:
            text += ' ' + word
    return text[:1].upper() + text[1:]
