"""
Training objectives: image-text contrastive loss, semantic margin loss,
semantic consistency loss, identity cross-entropy, modality-shared
enhancement loss and their weighted total.
"""
import logging
import math
from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F

from config.settings import MARGIN, LAMBDA1, LAMBDA2, LAMBDA3, CONSISTENCY_MODE, TEMPERATURE
from utils.exceptions import (
    ConfigurationError, DegenerateEmbeddingError, BatchStructureError, TrainingDivergenceError
)

logger = logging.getLogger('dsfad')

CONSISTENCY_MODES = ('signed', 'absolute')
LOSS_TERMS = ('L_id', 'L_mse', 'L_con', 'L_sm', 'L_sc')


@dataclass(frozen=True)
class LossConfig:
    margin: float = MARGIN
    lambda1: float = LAMBDA1
    lambda2: float = LAMBDA2
    lambda3: float = LAMBDA3
    consistency_mode: str = CONSISTENCY_MODE
    temperature: float = TEMPERATURE

    def validate(self):
        if self.margin < 0:
            raise ConfigurationError(f"loss.margin must be >= 0, got {self.margin}")
        for name in ('lambda1', 'lambda2', 'lambda3'):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"loss.{name} must be >= 0, got {getattr(self, name)}")
        if self.consistency_mode not in CONSISTENCY_MODES:
            raise ConfigurationError(f"loss.consistency_mode must be one of {CONSISTENCY_MODES}, "
                                     f"got '{self.consistency_mode}'")
        if self.temperature <= 0:
            raise ConfigurationError(f"loss.temperature must be positive, got {self.temperature}")

    @property
    def uses_text(self):
        return self.lambda1 > 0 or self.lambda2 > 0 or self.lambda3 > 0


def _unit(x, what):
    norms = x.norm(dim=-1, keepdim=True)
    if bool((norms == 0).any()):
        raise DegenerateEmbeddingError(f"{what} contains a zero-norm embedding")
    return x / norms


def cosine_sim(u, v):
    """Cosine similarity of two embeddings (or row-wise for two [n, d] matrices)."""
    return (_unit(u, 'u') * _unit(v, 'v')).sum(dim=-1)


def similarity_matrix(f, t):
    """s[i][j] = cos(f_i, t_j)."""
    return _unit(f, 'image embeddings') @ _unit(t, 'text embeddings').T


def contrastive_loss(f, t, temperature=1.0):
    """
    Symmetric image-to-text and text-to-image softmax cross-entropy over cosine similarities.

    Row i of f pairs with row i of t; each direction is averaged over the n rows
    and the two directions are summed.
    """
    if f.shape != t.shape:
        raise BatchStructureError(f"contrastive_loss: f {tuple(f.shape)} and t {tuple(t.shape)} are not aligned")
    logits = similarity_matrix(f, t) / temperature
    targets = torch.arange(f.shape[0], device=f.device)
    return F.cross_entropy(logits, targets) + F.cross_entropy(logits.T, targets)


def semantic_margin_loss(f_pos, f_neg, t, margin=MARGIN):
    """Mean hinge max(0, m + s(f_neg, t) - s(f_pos, t))."""
    return F.relu(margin + cosine_sim(f_neg, t) - cosine_sim(f_pos, t)).mean()


def semantic_consistency_loss(semantic_f3, semantic_res, t, mode=CONSISTENCY_MODE):
    """
    Gap between the text similarity of pre-decoupling and restored features.

    Both pooled maps arrive projected to the text width by the model's shared
    semantic projection. signed: mean of s(P pool(F3), t) - s(P pool(F_res), t);
    absolute: mean of its magnitude.
    """
    if semantic_f3.shape[-1] != t.shape[-1] or semantic_res.shape[-1] != t.shape[-1]:
        raise ConfigurationError(f"Projected feature widths {semantic_f3.shape[-1]}/{semantic_res.shape[-1]} "
                                 f"do not match the text width {t.shape[-1]}")
    if mode not in CONSISTENCY_MODES:
        raise ConfigurationError(f"Unknown consistency mode '{mode}'")
    gap = cosine_sim(semantic_f3, t) - cosine_sim(semantic_res, t)
    return gap.mean() if mode == 'signed' else gap.abs().mean()


def identity_loss(logits, labels):
    """Mean cross-entropy of the identity classifier."""
    num_classes = logits.shape[-1]
    if bool(((labels < 0) | (labels >= num_classes)).any()):
        raise BatchStructureError(f"Identity labels must lie in [0, {num_classes}), got {labels.tolist()}")
    return F.cross_entropy(logits, labels)


def _pairwise_distance(x):
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(dim=-1)
    positive = sq > 0
    # sqrt has no derivative at 0; coincident points get distance 0 and zero gradient
    return torch.where(positive, torch.sqrt(torch.where(positive, sq, torch.ones_like(sq))), torch.zeros_like(sq))


def modality_shared_enhancement_loss(embeddings, ids, modalities):
    """
    Pull each anchor's mean cross-modality positive distance toward its mean
    intra-modality positive distance.

    Args:
        embeddings (torch.Tensor): [2PK, d]
        ids (torch.Tensor): Identity label per row
        modalities (torch.Tensor): 0 visible / 1 infrared per row

    Returns:
        torch.Tensor: (1/2PK) * sum over anchors of (d_intra - d_inter)^2
    """
    n = embeddings.shape[0]
    dist = _pairwise_distance(embeddings)
    same_id = ids[:, None] == ids[None, :]
    same_mod = modalities[:, None] == modalities[None, :]
    eye = torch.eye(n, dtype=torch.bool, device=embeddings.device)
    intra = same_id & same_mod & ~eye
    inter = same_id & ~same_mod
    intra_count = intra.sum(dim=1)
    inter_count = inter.sum(dim=1)
    if bool((intra_count == 0).any()) or bool((inter_count == 0).any()):
        raise BatchStructureError("Every anchor needs another positive in its own modality and one in the other "
                                  "modality (K >= 2 per identity per modality)")
    d_intra = (dist * intra).sum(dim=1) / intra_count
    d_inter = (dist * inter).sum(dim=1) / inter_count
    return ((d_intra - d_inter) ** 2).sum() / n


@dataclass
class LossParts:
    L_id: object = 0.0
    L_mse: object = 0.0
    L_con: object = 0.0
    L_sm: object = 0.0
    L_sc: object = 0.0

    def as_floats(self):
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def total_loss(parts, config=None):
    """
    L_total = L_id + L_mse + lambda1*L_con + lambda2*L_sm + lambda3*L_sc.

    Raises:
        TrainingDivergenceError: when any part is NaN or infinite
    """
    config = config or LossConfig()
    for name in LOSS_TERMS:
        value = float(getattr(parts, name))
        if not math.isfinite(value):
            logger.error(f"Training diverged: {name} = {value}")
            raise TrainingDivergenceError(name, value)
    return (parts.L_id + parts.L_mse + config.lambda1 * parts.L_con
            + config.lambda2 * parts.L_sm + config.lambda3 * parts.L_sc)


def compute_loss_parts(output, labels, modalities, config):
    """
    Evaluate every term that the model's active branches support.

    Args:
        output (ForwardOutput): Result of DSFADModel.forward_full
        labels (torch.Tensor): Identity labels
        modalities (torch.Tensor): 0 visible / 1 infrared
        config (LossConfig): Margin, weights and consistency mode

    Returns:
        LossParts: Tensors for the active terms, 0.0 for the others
    """
    parts = LossParts(
        L_id=identity_loss(output.logits, labels),
        L_mse=modality_shared_enhancement_loss(output.f_res, labels, modalities),
    )
    if output.t is None:
        return parts
    parts.L_con = contrastive_loss(output.f_res, output.t, config.temperature)
    if output.f_stl is not None:
        parts.L_sm = semantic_margin_loss(output.f_res, output.f_stl, output.t, config.margin)
    if output.gate is not None:
        parts.L_sc = semantic_consistency_loss(output.semantic_f3, output.semantic_res, output.t,
                                               config.consistency_mode)
    return parts
