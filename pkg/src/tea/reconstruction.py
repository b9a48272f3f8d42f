"""Decode per-frame temporal tokens back to input pixels.

The decoder mirrors the tokenizer at patch granularity: a per-token linear
expansion (optionally through hidden layers) to h*w*C values, followed by the
pixel unfold. The auxiliary loss is a mean squared error restricted to valid
frames, so zero padding contributes no training signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .autodiff import Tensor, as_tensor, gelu
from .errors import ConfigurationError


@dataclass
class ReconDecoderConfig:
    patch_height: int = 2
    patch_width: int = 2
    num_channels: int = 4
    embed_dim: int = 32
    hidden_widths: tuple[int, ...] = (64,)

    @property
    def output_dim(self) -> int:
        return self.patch_height * self.patch_width * self.num_channels


class ReconDecoder(nn.Module):
    def __init__(self, config: ReconDecoderConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        widths = (config.embed_dim,) + tuple(config.hidden_widths) + (config.output_dim,)
        self.layers = [nn.Linear(rng, widths[i], widths[i + 1], dtype=dtype)
                       for i in range(len(widths) - 1)]

    def __call__(self, tokens: Tensor) -> Tensor:
        out = tokens
        for i, layer in enumerate(self.layers):
            out = layer(out)
            if i < len(self.layers) - 1:
                out = gelu(out)
        return out


def reconstruct(sequence_tokens: Tensor, decoder: ReconDecoder,
                patches_high: int, patches_wide: int) -> Tensor:
    """Per-frame tokens (B, N, T, d) to reconstructed values (B, T, C, H, W)."""
    c = decoder.config
    B, N, T, d = sequence_tokens.shape
    if N != patches_high * patches_wide or d != c.embed_dim:
        raise ConfigurationError(
            f"token grid ({N}, {d}) does not match decoder geometry "
            f"({patches_high * patches_wide}, {c.embed_dim})")
    flat = decoder(sequence_tokens)  # (B, N, T, h*w*C)
    out = flat.reshape((B, patches_high, patches_wide, T,
                        c.patch_height, c.patch_width, c.num_channels))
    out = out.transpose((0, 3, 6, 1, 4, 2, 5))  # B, T, C, Nh, h, Nw, w
    return out.reshape((B, T, c.num_channels,
                        patches_high * c.patch_height,
                        patches_wide * c.patch_width))


def reconstruction_loss(original: np.ndarray, reconstructed: Tensor,
                        valid_mask: np.ndarray) -> Tensor:
    """MSE over pixels, channels, and valid frames; padded frames are ignored."""
    reconstructed = as_tensor(reconstructed)
    if tuple(original.shape) != reconstructed.shape:
        raise ConfigurationError(
            f"shape mismatch: original {original.shape} vs reconstructed "
            f"{reconstructed.shape}")
    valid = np.asarray(valid_mask, dtype=bool)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ConfigurationError("reconstruction loss undefined: no valid frames")
    B, T = valid.shape
    weights = valid.astype(reconstructed.dtype).reshape(B, T, 1, 1, 1)
    diff = reconstructed - as_tensor(np.asarray(original, dtype=reconstructed.dtype))
    per_frame_elems = int(np.prod(original.shape[2:]))
    return (diff * diff * Tensor(weights)).sum() * (1.0 / (n_valid * per_frame_elems))
