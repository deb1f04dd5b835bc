"""
Embedding extraction, embedding files and the all/indoor x single/multi-shot
gallery protocols.
"""
import json
import logging
import os
from dataclasses import dataclass, asdict, field, replace

import numpy as np
import pandas as pd
import torch

from config.settings import (
    EVAL_REPEATS, MULTI_SHOT_COUNT, RANKS, PROBE_ALPHA, PROBE_TEST_FRACTION, TRAIN_SEED, INDOOR_CAMERAS
)
from data.synthetic import VISIBLE, INFRARED
from evaluation.metrics import rank_and_map, AP_FORMULA
from utils.exceptions import ConfigurationError, ProtocolError, MissingArtifactError

logger = logging.getLogger('dsfad')

SCHEMA_VERSION = 1
SEARCH_MODES = ('all', 'indoor')
SHOT_MODES = ('single', 'multi')
DIRECTIONS = {'ir_to_vis': (INFRARED, VISIBLE), 'vis_to_ir': (VISIBLE, INFRARED)}
EMBEDDING_KINDS = ('f_res', 'f_stl')


@dataclass(frozen=True)
class GalleryProtocol:
    search: str = 'all'
    shots: str = 'single'
    repeats: int = EVAL_REPEATS
    seed: int = TRAIN_SEED
    multi_shot_count: int = MULTI_SHOT_COUNT
    direction: str = 'ir_to_vis'

    def validate(self):
        if self.search not in SEARCH_MODES:
            raise ConfigurationError(f"eval.search must be one of {SEARCH_MODES}, got '{self.search}'")
        if self.shots not in SHOT_MODES:
            raise ConfigurationError(f"eval.shots must be one of {SHOT_MODES}, got '{self.shots}'")
        if self.direction not in DIRECTIONS:
            raise ConfigurationError(f"eval.direction must be one of {tuple(DIRECTIONS)}, got '{self.direction}'")
        if self.repeats < 1 or self.multi_shot_count < 1:
            raise ConfigurationError(f"eval.repeats and eval.multi_shot_count must be >= 1, "
                                     f"got {self.repeats}, {self.multi_shot_count}")

    @property
    def name(self):
        return f"{self.search}-{self.shots}-{self.direction}"


@dataclass(frozen=True)
class EvalConfig:
    search: str = 'all'
    shots: str = 'single'
    repeats: int = EVAL_REPEATS
    seed: int = TRAIN_SEED
    multi_shot_count: int = MULTI_SHOT_COUNT
    direction: str = 'ir_to_vis'
    both_directions: bool = False
    probe_alpha: float = PROBE_ALPHA
    probe_test_fraction: float = PROBE_TEST_FRACTION

    def protocol(self, **overrides):
        protocol = GalleryProtocol(self.search, self.shots, self.repeats, self.seed,
                                   self.multi_shot_count, self.direction)
        return replace(protocol, **overrides)

    def protocols(self):
        """The configured protocol, in both directions when both_directions is set."""
        if self.both_directions:
            return [self.protocol(direction=d) for d in DIRECTIONS]
        return [self.protocol()]

    def validate(self):
        self.protocol().validate()
        if self.probe_alpha <= 0:
            raise ConfigurationError(f"eval.probe_alpha must be positive, got {self.probe_alpha}")
        if not 0 < self.probe_test_fraction < 1:
            raise ConfigurationError(f"eval.probe_test_fraction must be in (0, 1), got {self.probe_test_fraction}")


@dataclass
class EmbeddingTable:
    """One embedding row per image with its identity, modality and camera."""
    features: np.ndarray
    ids: np.ndarray
    modalities: np.ndarray
    cameras: np.ndarray

    def __len__(self):
        return len(self.ids)

    def subset(self, mask):
        return EmbeddingTable(self.features[mask], self.ids[mask], self.modalities[mask], self.cameras[mask])


def extract_embeddings(model, records, kind='f_res', batch_size=64):
    """
    Run the inference path over records (no augmentation, no captions).

    Args:
        model (DSFADModel): Trained model
        records (list): ImageRecords to embed
        kind (str): 'f_res' (identity embedding) or 'f_stl' (discarded style embedding)
        batch_size (int): Images per forward pass

    Returns:
        EmbeddingTable: Rows in record order
    """
    if kind not in EMBEDDING_KINDS:
        raise ConfigurationError(f"Unknown embedding kind '{kind}', expected one of {EMBEDDING_KINDS}")
    if kind == 'f_stl' and not model.config.decouple:
        raise ConfigurationError("The model has no style branch to extract f_stl from")
    dtype = next(model.parameters()).dtype
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            pixels = np.stack([r.pixels for r in records[start:start + batch_size]])
            images = torch.from_numpy(pixels).to(dtype)
            out = model(images) if kind == 'f_res' else model.style_embedding(images)
            chunks.append(out.cpu().numpy().astype(np.float32))
    features = np.concatenate(chunks) if chunks else np.zeros((0, model.config.embed_dim), dtype=np.float32)
    return EmbeddingTable(
        features=features,
        ids=np.array([r.identity.label for r in records], dtype=np.int64),
        modalities=np.array([r.modality for r in records]),
        cameras=np.array([r.camera for r in records], dtype=np.int64),
    )


def save_embeddings(table, directory, name):
    """Write `<name>.tsv` (id, modality, camera, d per row) and `<name>.bin` (float32 rows)."""
    os.makedirs(directory, exist_ok=True)
    d = table.features.shape[1]
    frame = pd.DataFrame({'id': table.ids, 'modality': table.modalities, 'camera': table.cameras, 'd': d})
    frame.to_csv(os.path.join(directory, f"{name}.tsv"), sep='\t', index=False)
    with open(os.path.join(directory, f"{name}.bin"), 'wb') as handle:
        handle.write(np.ascontiguousarray(table.features, dtype='<f4').tobytes())


def load_embeddings(directory, name):
    tsv = os.path.join(directory, f"{name}.tsv")
    bin_path = os.path.join(directory, f"{name}.bin")
    if not (os.path.exists(tsv) and os.path.exists(bin_path)):
        raise MissingArtifactError(f"Embedding table {name} not found in {directory}")
    frame = pd.read_csv(tsv, sep='\t', dtype={'modality': str})
    d = int(frame['d'].iloc[0]) if len(frame) else 0
    with open(bin_path, 'rb') as handle:
        features = np.frombuffer(handle.read(), dtype='<f4').reshape(len(frame), d).astype(np.float32)
    return EmbeddingTable(features=features, ids=frame['id'].to_numpy(np.int64),
                          modalities=frame['modality'].to_numpy(), cameras=frame['camera'].to_numpy(np.int64))


def sample_gallery(table, protocol, rng):
    """
    Indices of one gallery draw: per identity and gallery camera, one image
    (single-shot) or up to multi_shot_count images (multi-shot).
    """
    _, gallery_modality = DIRECTIONS[protocol.direction]
    candidates = table.modalities == gallery_modality
    if protocol.search == 'indoor':
        candidates &= np.isin(table.cameras, INDOOR_CAMERAS)
    chosen = []
    for label in np.unique(table.ids[candidates]):
        for camera in np.unique(table.cameras[candidates & (table.ids == label)]):
            pool = np.flatnonzero(candidates & (table.ids == label) & (table.cameras == camera))
            count = 1 if protocol.shots == 'single' else min(len(pool), protocol.multi_shot_count)
            chosen.extend(sorted(rng.choice(pool, size=count, replace=False)))
    return np.array(chosen, dtype=np.int64)


@dataclass
class MetricsReport:
    protocol: dict
    rank: dict
    mAP: float
    mINP: float
    per_repeat: list = field(default_factory=list)
    variance: dict = field(default_factory=dict)
    flagged_queries: int = 0
    config_hash: str = ''
    schema_version: int = SCHEMA_VERSION
    ap_formula: str = AP_FORMULA

    def to_dict(self):
        d = asdict(self)
        d['rank'] = {str(k): v for k, v in self.rank.items()}
        return d

    def summary(self):
        ranks = ', '.join(f"R{k}={v:.2%}" for k, v in self.rank.items())
        return f"{self.protocol.get('name', '')}: {ranks}, mAP={self.mAP:.2%}, mINP={self.mINP:.2%}"


def evaluate_table(table, protocol, ranks=RANKS, config_hash=''):
    """
    Score one protocol on a test-split embedding table.

    Every query-modality row is a query; the gallery is redrawn per repeat
    from the other modality and the reported values are repeat means.

    Raises:
        ProtocolError: when the split lacks a modality or the protocol leaves the gallery empty
    """
    protocol.validate()
    query_modality, gallery_modality = DIRECTIONS[protocol.direction]
    query_mask = table.modalities == query_modality
    if not query_mask.any() or not (table.modalities == gallery_modality).any():
        raise ProtocolError(f"Test split needs both {query_modality} and {gallery_modality} images")
    query = table.subset(query_mask)

    rng = np.random.default_rng(protocol.seed)
    per_repeat = []
    for repeat in range(protocol.repeats):
        indices = sample_gallery(table, protocol, rng)
        if len(indices) == 0:
            raise ProtocolError(f"Protocol {protocol.name} has no gallery images "
                                f"(no {gallery_modality} image on an eligible camera)")
        gallery = table.subset(indices)
        result = rank_and_map(query.features, query.ids, query.cameras,
                              gallery.features, gallery.ids, gallery.cameras, ranks)
        per_repeat.append({'repeat': repeat, 'rank': {str(k): v for k, v in result.rank.items()},
                           'mAP': result.mAP, 'mINP': result.mINP, 'flagged': result.flagged,
                           'gallery_size': int(len(indices))})

    frame = pd.DataFrame([{**{f"rank{k}": r['rank'][str(k)] for k in ranks}, 'mAP': r['mAP'], 'mINP': r['mINP']}
                          for r in per_repeat])
    report = MetricsReport(
        protocol={**asdict(protocol), 'name': protocol.name, 'query_count': int(query_mask.sum())},
        rank={k: float(frame[f"rank{k}"].mean()) for k in ranks},
        mAP=float(frame['mAP'].mean()),
        mINP=float(frame['mINP'].mean()),
        per_repeat=per_repeat,
        variance={column: float(frame[column].var(ddof=0)) for column in frame.columns},
        flagged_queries=int(sum(r['flagged'] for r in per_repeat)),
        config_hash=config_hash,
    )
    logger.info(report.summary())
    return report


def run_protocol(model, dataset, protocol, ranks=RANKS, config_hash=''):
    """Extract f_res for the test split and score one gallery protocol."""
    records = dataset.split_records('test')
    if not records:
        raise ProtocolError("Dataset has no test split")
    return evaluate_table(extract_embeddings(model, records), protocol, ranks, config_hash)


def write_report(report, path):
    with open(path, 'w') as handle:
        json.dump(report if isinstance(report, dict) else report.to_dict(), handle, indent=2, sort_keys=True)
