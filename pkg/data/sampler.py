"""
PK cross-modality batch sampler.

A batch holds P training identities, each with K visible and K infrared images,
ordered [visible block, infrared block]; every image travels with its caption.
"""
import logging
from dataclasses import dataclass

import numpy as np

from config.settings import NUM_PIDS, NUM_POS
from data.augmentation import augment
from data.synthetic import VISIBLE, INFRARED, MODALITIES
from utils.exceptions import SamplingError, BatchStructureError

logger = logging.getLogger('dsfad')


@dataclass
class Batch:
    P: int
    K: int
    items: list  # (ImageRecord, CaptionRecord) pairs
    pixels: np.ndarray  # [2PK, 3, H, W], augmented when augmentation is on

    def __len__(self):
        return len(self.items)

    @property
    def labels(self):
        return np.array([record.identity.label for record, _ in self.items], dtype=np.int64)

    @property
    def modalities(self):
        """0 for visible, 1 for infrared."""
        return np.array([MODALITIES.index(record.modality) for record, _ in self.items], dtype=np.int64)

    @property
    def tokens(self):
        return np.stack([caption.tokens for _, caption in self.items]).astype(np.int64)

    def check(self):
        """Raise BatchStructureError if the P x K cross-modality structure is broken."""
        if len(self.items) != 2 * self.P * self.K:
            raise BatchStructureError(f"Batch has {len(self.items)} items, expected 2*P*K = {2 * self.P * self.K}")
        counts = {}
        for record, caption in self.items:
            if caption is None or caption.image_key != record.key:
                raise BatchStructureError(f"Image {record.key} has no paired caption")
            key = (record.identity.label, record.modality)
            counts[key] = counts.get(key, 0) + 1
        labels = {label for label, _ in counts}
        if len(labels) != self.P:
            raise BatchStructureError(f"Batch holds {len(labels)} identities, expected {self.P}")
        for label in labels:
            for modality in MODALITIES:
                if counts.get((label, modality), 0) != self.K:
                    raise BatchStructureError(
                        f"Identity {label} has {counts.get((label, modality), 0)} {modality} images, expected {self.K}")


def _check_feasible(dataset, P, K):
    train_ids = dataset.split_identities('train')
    if P < 1 or K < 1:
        raise SamplingError(f"P and K must be positive, got P={P}, K={K}")
    if len(train_ids) < P:
        raise SamplingError(f"Need {P} train identities, dataset has {len(train_ids)} (short by {P - len(train_ids)})")
    for identity in train_ids:
        for modality in MODALITIES:
            available = len(dataset.records_of('train', identity.label, modality))
            if available < K:
                raise SamplingError(
                    f"Identity {identity.label} has {available} {modality} images, need K={K} (short by {K - available})")
    return train_ids


def pk_sample(dataset, corpus, P=NUM_PIDS, K=NUM_POS, rng=None, augment_config=None):
    """
    Draw one cross-modality PK batch from the train split.

    Args:
        dataset (Dataset): Source dataset
        corpus (CaptionCorpus): Caption for every image, looked up by image key
        P (int): Identities per batch (shared by both modality blocks)
        K (int): Images per identity per modality
        rng (np.random.Generator): Random stream; sampling is deterministic under it
        augment_config (AugmentConfig): Optional training transform stack

    Returns:
        Batch: 2PK image/caption pairs, visible block first
    """
    rng = rng if rng is not None else np.random.default_rng()
    train_ids = _check_feasible(dataset, P, K)
    labels = sorted(identity.label for identity in train_ids)
    chosen = rng.choice(labels, size=P, replace=False)

    items = []
    for modality in (VISIBLE, INFRARED):
        for label in chosen:
            pool = dataset.records_of('train', int(label), modality)
            for position in rng.choice(len(pool), size=K, replace=False):
                record = pool[int(position)]
                caption = corpus.get(record.key)
                if caption is None:
                    raise SamplingError(f"No caption for image {record.key}; run the caption stage on this dataset")
                items.append((record, caption))

    pixels = np.stack([
        augment(record.pixels, record.modality, rng, augment_config) if augment_config is not None else record.pixels
        for record, _ in items
    ])
    batch = Batch(P=P, K=K, items=items, pixels=pixels)
    logger.debug(f"Sampled PK batch with identities {list(map(int, chosen))}")
    return batch
