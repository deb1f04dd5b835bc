"""
Training-time image augmentation: random padding + cropping, horizontal flip
and channel exchange (visible images only).
"""
import logging
from dataclasses import dataclass

import numpy as np

from config.settings import AUGMENT_ENABLED, AUGMENT_PAD, AUGMENT_FLIP_P, AUGMENT_CHANNEL_EXCHANGE_P
from data.synthetic import VISIBLE, LUMA
from utils.exceptions import ConfigurationError

logger = logging.getLogger('dsfad')


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = AUGMENT_ENABLED
    pad: int = AUGMENT_PAD
    flip_p: float = AUGMENT_FLIP_P
    channel_exchange_p: float = AUGMENT_CHANNEL_EXCHANGE_P

    def validate(self):
        if self.pad < 0:
            raise ConfigurationError(f"augment.pad must be >= 0, got {self.pad}")
        for name in ('flip_p', 'channel_exchange_p'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"augment.{name} must be in [0, 1], got {value}")


def random_pad_crop(pixels, pad, rng):
    """Zero-pad by `pad` pixels on each side, then crop back to the original size at a random offset."""
    if pad == 0:
        return pixels
    _, height, width = pixels.shape
    padded = np.pad(pixels, ((0, 0), (pad, pad), (pad, pad)))
    top = int(rng.integers(2 * pad + 1))
    left = int(rng.integers(2 * pad + 1))
    return padded[:, top:top + height, left:left + width]


def channel_exchange(pixels, rng):
    """Replace all channels with one randomly chosen channel or with the luminance image."""
    choice = int(rng.integers(4))
    if choice == 3:
        gray = np.tensordot(LUMA, pixels, axes=1).astype(pixels.dtype)
    else:
        gray = pixels[choice]
    return np.repeat(gray[None], 3, axis=0)


def augment(pixels, modality, rng, config):
    """
    Apply the configured transform stack to one image.

    Args:
        pixels (np.ndarray): Image [3, H, W]
        modality (str): 'visible' or 'infrared'
        rng (np.random.Generator): Random stream owned by the sampler
        config (AugmentConfig): Transform settings

    Returns:
        np.ndarray: Augmented copy of the image
    """
    if not config.enabled:
        return pixels
    out = random_pad_crop(pixels, config.pad, rng)
    if rng.random() < config.flip_p:
        out = out[:, :, ::-1]
    # Draw for every image so the stream stays aligned across modalities
    exchange = rng.random() < config.channel_exchange_p
    if exchange and modality == VISIBLE:
        out = channel_exchange(out, rng)
    return np.ascontiguousarray(out, dtype=np.float32)
