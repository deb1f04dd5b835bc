"""
Building blocks of the dual-stream network: image trunk, instance-norm
decoupling, SE-gated restitution, non-shared heads and the text encoder.
"""
import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

from captions.tokenizer import END
from config.settings import (
    TRUNK_WIDTHS, HEAD_WIDTH, EMBED_DIM, IN_EPSILON, SE_REDUCTION,
    TEXT_WIDTH, TEXT_DEPTH, TEXT_HEADS, CONTEXT_LENGTH
)
from utils.exceptions import ShapeError, ConfigurationError, TokenizationError

logger = logging.getLogger('dsfad')

BRANCHES = ('identity', 'style')


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def _conv3x3(in_channels, out_channels, stride=1):
    return nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1)


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = _conv3x3(channels, channels)
        self.conv2 = _conv3x3(channels, channels)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class ImageTrunk(nn.Module):
    """Stand-in for backbone blocks 1-3: one stride-2 conv plus a residual block per stage."""

    def __init__(self, widths=TRUNK_WIDTHS, in_channels=3):
        super().__init__()
        self.widths = tuple(widths)
        stages = []
        previous = in_channels
        for width in self.widths:
            stages.append(nn.Sequential(_conv3x3(previous, width, stride=2), nn.ReLU(), ResidualBlock(width)))
            previous = width
        self.stages = nn.Sequential(*stages)

    @property
    def stride(self):
        return 2 ** len(self.widths)

    @property
    def out_channels(self):
        return self.widths[-1]

    def forward(self, images):
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeError(f"Expected images [B, 3, H, W], got {tuple(images.shape)}")
        height, width = images.shape[2:]
        if height % self.stride or width % self.stride:
            raise ShapeError(f"Image size {height}x{width} must be a multiple of the trunk stride {self.stride}")
        return self.stages(images)


def instance_norm(f3, gamma, beta, eps=IN_EPSILON):
    """Per-sample, per-channel normalisation over spatial positions, then affine gamma/beta."""
    mean = f3.mean(dim=(2, 3), keepdim=True)
    centered = f3 - mean
    var = (centered ** 2).mean(dim=(2, 3), keepdim=True)
    return gamma[None, :, None, None] * centered / torch.sqrt(var + eps) + beta[None, :, None, None]


class InstanceNorm(nn.Module):
    def __init__(self, channels, eps=IN_EPSILON):
        super().__init__()
        if eps <= 0:
            raise ConfigurationError(f"Instance norm epsilon must be positive, got {eps}")
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))

    def forward(self, f3):
        return instance_norm(f3, self.gamma, self.beta, self.eps)


def style_residual(f3, f_id):
    """F_st = F3 - F_id."""
    _check_same_shape(f3, f_id, 'style_residual')
    return f3 - f_id


def split_style(f_st, gate):
    """Split style features into the gated (restored) and the complementary (discarded) part."""
    if gate.dim() != 2 or gate.shape != f_st.shape[:2]:
        raise ShapeError(f"split_style: gate {tuple(gate.shape)} does not match features {tuple(f_st.shape)}")
    a = gate[:, :, None, None]
    return a * f_st, (1 - a) * f_st


def restitute(f_id, f_stf):
    """F_res = F_id + F_stf."""
    _check_same_shape(f_id, f_stf, 'restitute')
    return f_id + f_stf


def se_reduction_for(channels, reduction=SE_REDUCTION):
    return reduction if channels >= reduction else 1


class SEGate(nn.Module):
    """Bias-free squeeze-and-excitation gate computed per sample."""

    def __init__(self, channels, reduction=SE_REDUCTION):
        super().__init__()
        reduction = se_reduction_for(channels, reduction)
        if reduction < 1 or channels % reduction:
            raise ConfigurationError(f"SE reduction {reduction} must divide the channel count {channels}")
        self.channels = channels
        self.reduction = reduction
        self.fc1 = nn.Linear(channels, channels // reduction, bias=False)
        self.fc2 = nn.Linear(channels // reduction, channels, bias=False)

    def forward(self, f_st):
        if f_st.dim() != 4 or f_st.shape[1] != self.channels:
            raise ShapeError(f"SE gate expects [B, {self.channels}, h, w], got {tuple(f_st.shape)}")
        pooled = f_st.mean(dim=(2, 3))
        gate = torch.sigmoid(self.fc2(F.relu(self.fc1(pooled))))
        # Keep the gate strictly inside (0, 1) where the sigmoid saturates
        tiny = torch.finfo(gate.dtype).eps
        return gate.clamp(tiny, 1 - tiny)


class Head(nn.Module):
    """Stand-in for block 4: conv + residual block, global average pool, projection to d."""

    def __init__(self, in_channels, width=HEAD_WIDTH, embed_dim=EMBED_DIM):
        super().__init__()
        self.in_channels = in_channels
        self.conv = _conv3x3(in_channels, width)
        self.block = ResidualBlock(width)
        self.proj = nn.Linear(width, embed_dim)

    def forward(self, features):
        if features.dim() != 4 or features.shape[1] != self.in_channels:
            raise ShapeError(f"Head expects [B, {self.in_channels}, h, w], got {tuple(features.shape)}")
        x = self.block(F.relu(self.conv(features)))
        return self.proj(x.mean(dim=(2, 3)))


class TextEncoder(nn.Module):
    """Token + position embeddings, causal transformer mixer, pooled at the END token."""

    def __init__(self, vocab_size, context_length=CONTEXT_LENGTH, width=TEXT_WIDTH,
                 depth=TEXT_DEPTH, heads=TEXT_HEADS, embed_dim=EMBED_DIM):
        super().__init__()
        self.vocab_size = vocab_size
        self.context_length = context_length
        self.token_embedding = nn.Embedding(vocab_size, width)
        self.positional_embedding = nn.Parameter(torch.empty(context_length, width))
        layer = nn.TransformerEncoderLayer(width, heads, dim_feedforward=2 * width, dropout=0.0,
                                           batch_first=True, norm_first=True)
        self.mixer = nn.TransformerEncoder(layer, depth, enable_nested_tensor=False)
        self.ln_final = nn.LayerNorm(width)
        self.proj = nn.Linear(width, embed_dim, bias=False)
        self.register_buffer('causal_mask', torch.triu(torch.ones(context_length, context_length, dtype=torch.bool), 1),
                             persistent=False)

    def forward(self, tokens):
        if tokens.dim() != 2 or tokens.shape[1] != self.context_length:
            raise ShapeError(f"Expected tokens [B, {self.context_length}], got {tuple(tokens.shape)}")
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise TokenizationError(f"Token ids must lie in [0, {self.vocab_size}), got range "
                                    f"[{int(tokens.min())}, {int(tokens.max())}]")
        x = self.token_embedding(tokens) + self.positional_embedding[None]
        x = self.mixer(x, mask=self.causal_mask)
        x = self.ln_final(x)
        end = (tokens == END).int().argmax(dim=1)
        return self.proj(x[torch.arange(x.shape[0]), end])


def init_weights(module):
    """Variance-scaling init for convolutions and linear maps, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, nonlinearity='relu')
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Embedding):
            nn.init.normal_(m.weight, std=0.02)
        elif isinstance(m, TextEncoder):
            nn.init.normal_(m.positional_embedding, std=0.01)
