"""Factorized temporal-then-spatial transformer for image time series.

Patch tokens are encoded along time first (with one learned class token per
category prepended to every patch sequence), then the per-class temporal
tokens are encoded spatially in K independent streams. The segmentation head
projects each dense spatial token to a patch of per-class pixel logits.

Temporal position enters only through a day-offset embedding table, and
frames flagged invalid are masked out of attention, so any sequence length
in [1, T_max] is accepted without reconfiguration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigurationError


@dataclass
class BackboneConfig:
    image_height: int = 16
    image_width: int = 16
    patch_height: int = 2
    patch_width: int = 2
    num_channels: int = 4
    num_classes: int = 4
    embed_dim: int = 32
    temporal_depth: int = 2
    spatial_depth: int = 2
    heads: int = 4
    mlp_ratio: int = 4
    max_day_offset: int = 128

    def __post_init__(self):
        if self.image_height % self.patch_height or self.image_width % self.patch_width:
            raise ConfigurationError(
                f"image {self.image_height}x{self.image_width} not divisible by "
                f"patch {self.patch_height}x{self.patch_width}")
        if self.embed_dim % self.heads:
            raise ConfigurationError(
                f"embed dim {self.embed_dim} not divisible by {self.heads} heads")

    @property
    def patches_high(self) -> int:
        return self.image_height // self.patch_height

    @property
    def patches_wide(self) -> int:
        return self.image_width // self.patch_width

    @property
    def num_patches(self) -> int:
        return self.patches_high * self.patches_wide

    @property
    def patch_dim(self) -> int:
        return self.patch_height * self.patch_width * self.num_channels


@dataclass
class TemporalOutput:
    """Temporal encoder outputs: per-class tokens first, then per-frame tokens."""

    class_tokens: Tensor    # (B, N, K, d)
    sequence_tokens: Tensor  # (B, N, T, d)


@dataclass
class SpatialOutput:
    """Spatial encoder outputs split into the global and dense parts."""

    global_tokens: Tensor  # (B, K, 1, d)
    dense_tokens: Tensor   # (B, K, N, d)
    full_tokens: Tensor    # (B, K, N + 1, d), class-token slot first


class Backbone(nn.Module):
    def __init__(self, config: BackboneConfig, rng: np.random.Generator,
                 dtype=np.float32):
        c = config
        self.config = c
        self.patch_proj = nn.Linear(rng, c.patch_dim, c.embed_dim, dtype=dtype)
        self.temporal_pos = ad.Parameter(
            nn.trunc_normal(rng, (c.max_day_offset, c.embed_dim), dtype=dtype))
        self.temporal_cls = ad.Parameter(
            nn.trunc_normal(rng, (c.num_classes, c.embed_dim), dtype=dtype))
        self.temporal_encoder = nn.TransformerEncoder(
            rng, c.embed_dim, c.temporal_depth, c.heads, c.mlp_ratio, dtype=dtype)
        self.spatial_pos = ad.Parameter(
            nn.trunc_normal(rng, (c.num_patches, c.embed_dim), dtype=dtype))
        self.spatial_cls = ad.Parameter(
            nn.trunc_normal(rng, (c.num_classes, c.embed_dim), dtype=dtype))
        self.spatial_encoder = nn.TransformerEncoder(
            rng, c.embed_dim, c.spatial_depth, c.heads, c.mlp_ratio, dtype=dtype)
        self.head_norm = nn.LayerNorm(c.embed_dim, dtype=dtype)
        self.head = nn.Linear(rng, c.embed_dim, c.patch_height * c.patch_width,
                              dtype=dtype)
        self.classifier = nn.Linear(rng, c.embed_dim, 1, dtype=dtype)
        self.dtype = dtype

    # -- stages --------------------------------------------------------------

    def tokenize(self, values: np.ndarray) -> Tensor:
        """(B, T, C, H, W) images to patch tokens (B, N, T, d)."""
        c = self.config
        B, T, C, H, W = values.shape
        if (C, H, W) != (c.num_channels, c.image_height, c.image_width):
            raise ConfigurationError(
                f"input {values.shape[1:]} does not match configured geometry")
        patches = values.reshape(B, T, C, c.patches_high, c.patch_height,
                                 c.patches_wide, c.patch_width)
        patches = patches.transpose(0, 3, 5, 1, 4, 6, 2)  # B, Nh, Nw, T, h, w, C
        patches = np.ascontiguousarray(patches, dtype=self.dtype).reshape(
            B, c.num_patches, T, c.patch_dim)
        return self.patch_proj(Tensor(patches))

    def temporal_encode(self, grid: Tensor, day_offsets: np.ndarray,
                        valid_mask: np.ndarray) -> TemporalOutput:
        """Add day-offset embeddings, prepend class tokens, encode along time."""
        c = self.config
        B, N, T, d = grid.shape
        offsets = np.asarray(day_offsets)
        if offsets.max() >= c.max_day_offset or offsets.min() < 0:
            raise IndexError(
                f"day offset {int(offsets.max())} outside position table "
                f"[0, {c.max_day_offset})")
        pos = ad.embedding(self.temporal_pos, offsets)  # (B, T, d)
        x = grid + pos.reshape((B, 1, T, d))
        x = x.reshape((B * N, T, d))
        x = nn.prepend_tokens(self.temporal_cls, x)  # (B*N, K+T, d)

        bias = np.zeros((B, c.num_classes + T), dtype=self.dtype)
        bias[:, c.num_classes:][~np.asarray(valid_mask)] = nn.MASK_BIAS
        bias = np.repeat(bias, N, axis=0).reshape(B * N, 1, 1, c.num_classes + T)

        out = self.temporal_encoder(x, bias)
        K = c.num_classes
        class_tokens = out[:, :K].reshape((B, N, K, d))
        sequence_tokens = out[:, K:].reshape((B, N, T, d))
        return TemporalOutput(class_tokens, sequence_tokens)

    def spatial_encode(self, class_tokens: Tensor) -> SpatialOutput:
        """Encode each class stream across patch positions."""
        c = self.config
        B, N, K, d = class_tokens.shape
        x = class_tokens.transpose((0, 2, 1, 3))  # (B, K, N, d)
        x = x + self.spatial_pos
        x = x.reshape((B * K, N, d))
        stream_cls = ad.embedding(self.spatial_cls, np.tile(np.arange(K), B))
        x = ad.concat([stream_cls.reshape((B * K, 1, d)), x], axis=1)
        out = self.spatial_encoder(x)  # (B*K, N+1, d)
        full = out.reshape((B, K, N + 1, d))
        return SpatialOutput(global_tokens=full[:, :, :1],
                             dense_tokens=full[:, :, 1:],
                             full_tokens=full)

    def segment(self, dense_tokens: Tensor,
                confidence: Tensor | None = None) -> Tensor:
        """Project dense tokens to per-patch pixel logits and unfold to (B, K, H, W).

        `confidence`, when given, is a (B, N, K) per-patch class score added to
        every pixel logit of its patch before unfolding.
        """
        c = self.config
        B, K, N, d = dense_tokens.shape
        logits = self.head(self.head_norm(dense_tokens))  # (B, K, N, h*w)
        if confidence is not None:
            add = confidence.transpose((0, 2, 1))  # (B, K, N)
            logits = logits + add.reshape((B, K, N, 1))
        logits = logits.reshape((B, K, c.patches_high, c.patches_wide,
                                 c.patch_height, c.patch_width))
        logits = logits.transpose((0, 1, 2, 4, 3, 5))
        return logits.reshape((B, K, c.image_height, c.image_width))

    def classify(self, global_tokens: Tensor) -> Tensor:
        """Per-class logits from the global tokens (kept for parity; unused in training)."""
        B, K, _, d = global_tokens.shape
        return self.classifier(global_tokens.reshape((B * K, d))).reshape((B, K))

    # -- convenience ----------------------------------------------------------

    def forward(self, values: np.ndarray, day_offsets: np.ndarray,
                valid_mask: np.ndarray, confidence: Tensor | None = None,
                ) -> tuple[Tensor, TemporalOutput, SpatialOutput]:
        grid = self.tokenize(values)
        temporal = self.temporal_encode(grid, day_offsets, valid_mask)
        spatial = self.spatial_encode(temporal.class_tokens)
        logits = self.segment(spatial.dense_tokens, confidence)
        return logits, temporal, spatial
