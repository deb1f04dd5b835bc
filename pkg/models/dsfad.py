"""
The full DSFAD network: shared trunk, IN decoupling, SE restitution, identity
and style heads, identity classifier and text tower.
"""
import logging
from dataclasses import dataclass, asdict
from typing import Optional

import torch
import torch.nn as nn

from captions.tokenizer import vocabulary_size
from config.settings import (
    TRUNK_WIDTHS, HEAD_WIDTH, EMBED_DIM, IN_EPSILON, SE_REDUCTION,
    TEXT_WIDTH, TEXT_DEPTH, TEXT_HEADS, CONTEXT_LENGTH, NUM_TRAIN_IDS
)
from models.encoder import (
    ImageTrunk, InstanceNorm, SEGate, Head, TextEncoder, BRANCHES,
    style_residual, split_style, restitute, init_weights
)
from utils.exceptions import ConfigurationError

logger = logging.getLogger('dsfad')


@dataclass(frozen=True)
class ModelConfig:
    trunk_widths: tuple = tuple(TRUNK_WIDTHS)
    head_width: int = HEAD_WIDTH
    embed_dim: int = EMBED_DIM
    in_epsilon: float = IN_EPSILON
    se_reduction: int = SE_REDUCTION
    text_width: int = TEXT_WIDTH
    text_depth: int = TEXT_DEPTH
    text_heads: int = TEXT_HEADS
    context_length: int = CONTEXT_LENGTH
    num_classes: int = NUM_TRAIN_IDS
    decouple: bool = True  # IN split + style head
    restitute: bool = True  # SE gate puts part of the style back

    def validate(self):
        if self.restitute and not self.decouple:
            raise ConfigurationError("model.restitute requires model.decouple")
        if self.num_classes < 1 or self.embed_dim < 1:
            raise ConfigurationError(f"num_classes and embed_dim must be positive, got {self.num_classes}, {self.embed_dim}")
        if self.text_width % self.text_heads:
            raise ConfigurationError(f"text_width {self.text_width} must be divisible by text_heads {self.text_heads}")

    def to_dict(self):
        d = asdict(self)
        d['trunk_widths'] = list(self.trunk_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d['trunk_widths'] = tuple(d['trunk_widths'])
        return cls(**d)


@dataclass
class ForwardOutput:
    """Every intermediate the losses need; style/text entries are None when their branch is off."""
    f3: torch.Tensor
    f_res_map: torch.Tensor
    f_res: torch.Tensor
    logits: torch.Tensor
    pooled_f3: torch.Tensor
    pooled_res: torch.Tensor
    f_id: Optional[torch.Tensor] = None
    f_st: Optional[torch.Tensor] = None
    gate: Optional[torch.Tensor] = None
    f_stf: Optional[torch.Tensor] = None
    f_stl_map: Optional[torch.Tensor] = None
    f_stl: Optional[torch.Tensor] = None
    t: Optional[torch.Tensor] = None
    semantic_f3: Optional[torch.Tensor] = None
    semantic_res: Optional[torch.Tensor] = None


class DSFADModel(nn.Module):
    """
    Dual-stream re-identification network.

    All sub-modules are always built in the same order so that variants with
    fewer branches share the initial weight draw of the full model.
    """

    def __init__(self, config=None):
        super().__init__()
        self.config = config or ModelConfig()
        self.config.validate()
        c = self.config
        self.trunk = ImageTrunk(c.trunk_widths)
        channels = self.trunk.out_channels
        self.instance_norm = InstanceNorm(channels, c.in_epsilon)
        self.se = SEGate(channels, c.se_reduction)
        self.heads = nn.ModuleDict({branch: Head(channels, c.head_width, c.embed_dim) for branch in BRANCHES})
        self.classifier = nn.Linear(c.embed_dim, c.num_classes, bias=False)
        self.text_encoder = TextEncoder(vocabulary_size(), c.context_length, c.text_width,
                                        c.text_depth, c.text_heads, c.embed_dim)
        self.semantic_projection = nn.Linear(channels, c.embed_dim, bias=False)
        init_weights(self)
        logger.info(f"Initialized DSFAD model: trunk={c.trunk_widths}, d={c.embed_dim}, "
                    f"decouple={c.decouple}, restitute={c.restitute}, classes={c.num_classes}")

    def head(self, features, branch):
        if branch not in self.heads:
            raise ConfigurationError(f"Unknown head branch '{branch}', expected one of {BRANCHES}")
        return self.heads[branch](features)

    def encode_text(self, tokens):
        return self.text_encoder(tokens)

    def _identity_path(self, images):
        f3 = self.trunk(images)
        out = {'f3': f3}
        if not self.config.decouple:
            out['f_res_map'] = f3
            return out
        f_id = self.instance_norm(f3)
        f_st = style_residual(f3, f_id)
        out.update(f_id=f_id, f_st=f_st)
        if self.config.restitute:
            gate = self.se(f_st)
            f_stf, f_stl_map = split_style(f_st, gate)
            out.update(gate=gate, f_stf=f_stf, f_stl_map=f_stl_map, f_res_map=restitute(f_id, f_stf))
        else:
            out.update(f_stl_map=f_st, f_res_map=f_id)
        return out

    def forward_full(self, images, tokens=None):
        """
        Training pass: trunk, IN, residual, SE, split, restitute, heads and optional text tower.

        Args:
            images (torch.Tensor): [B, 3, H, W]
            tokens (torch.Tensor): Optional [B, context_length] caption tokens

        Returns:
            ForwardOutput: Embeddings and intermediates for the losses
        """
        parts = self._identity_path(images)
        f_res = self.head(parts['f_res_map'], 'identity')
        out = ForwardOutput(
            f3=parts['f3'],
            f_res_map=parts['f_res_map'],
            f_res=f_res,
            logits=self.classifier(f_res),
            pooled_f3=parts['f3'].mean(dim=(2, 3)),
            pooled_res=parts['f_res_map'].mean(dim=(2, 3)),
            f_id=parts.get('f_id'),
            f_st=parts.get('f_st'),
            gate=parts.get('gate'),
            f_stf=parts.get('f_stf'),
            f_stl_map=parts.get('f_stl_map'),
        )
        if out.f_stl_map is not None:
            out.f_stl = self.head(out.f_stl_map, 'style')
        if tokens is not None:
            out.t = self.encode_text(tokens)
            # pool(F3) is the reference level; only the restored path reaches the trunk through it
            out.semantic_f3 = self.semantic_projection(out.pooled_f3.detach())
            out.semantic_res = self.semantic_projection(out.pooled_res)
        return out

    def forward(self, images):
        """Inference: the identity embedding f_res only."""
        return self.head(self._identity_path(images)['f_res_map'], 'identity')

    def style_embedding(self, images):
        """f_stl for diagnostics; None when the model has no style branch."""
        if not self.config.decouple:
            return None
        return self.head(self._identity_path(images)['f_stl_map'], 'style')

    def parameter_groups(self):
        """(visual, text) parameter lists for the two learning rates."""
        text = list(self.text_encoder.parameters())
        text_ids = {id(p) for p in text}
        visual = [p for p in self.parameters() if id(p) not in text_ids]
        return visual, text
