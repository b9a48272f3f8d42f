"""Learnable temporal class prototypes and cosine-similarity confidence.

Each class owns a row of prototype slots spanning the acquisition calendar;
a frame is matched to the slot covering its absolute day offset, so the same
growth stage lands on the same slot no matter where a crop starts. Cosine
similarity collapses the embedding axis first, then the valid frames are
averaged, giving one confidence score per patch and class.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigurationError, ValidationError

COSINE_EPS = 1e-6


class PrototypeBank(nn.Module):
    """Prototype tensor (K, T_p, D) plus the learnable confidence scale."""

    def __init__(self, num_classes: int, num_slots: int, dim: int,
                 slot_span: int, rng: np.random.Generator, dtype=np.float32):
        if num_slots < 1 or slot_span < 1:
            raise ConfigurationError("prototype bank needs at least one slot")
        self.prototypes = ad.Parameter(
            nn.trunc_normal(rng, (num_classes, num_slots, dim), dtype=dtype))
        self.scale = ad.Parameter(np.ones((), dtype=dtype))
        self.slot_span = slot_span

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def num_slots(self) -> int:
        return self.prototypes.shape[1]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[2]

    def slot_of(self, day_offsets: np.ndarray) -> np.ndarray:
        return np.minimum(np.asarray(day_offsets) // self.slot_span,
                          self.num_slots - 1)


def num_slots_for_span(max_day_offset: int, slot_span: int) -> int:
    """Slots covering the maximum sequence span at one slot per span step."""
    return max(1, -(-max_day_offset // slot_span))


def similarity_map(sequence_tokens: Tensor, day_offsets: np.ndarray,
                   valid_mask: np.ndarray, bank: PrototypeBank) -> Tensor:
    """Per-patch, per-class mean cosine similarity over valid frames.

    sequence_tokens: (B, N, T, d); day_offsets/valid_mask: (B, T).
    Returns a (B, N, K) tensor with entries in [-1, 1].
    """
    B, N, T, d = sequence_tokens.shape
    valid = np.asarray(valid_mask, dtype=bool)
    n_valid = valid.sum(axis=1)
    if np.any(n_valid == 0):
        raise ValidationError("similarity undefined: a sample has no valid frames")

    slots = bank.slot_of(day_offsets)  # (B, T)
    table = bank.prototypes.transpose((1, 0, 2)).reshape(
        (bank.num_slots, bank.num_classes * bank.dim))
    protos = ad.embedding(table, slots).reshape((B, T, bank.num_classes, bank.dim))

    tokens = sequence_tokens.transpose((0, 2, 1, 3))  # (B, T, N, d)
    dots = tokens @ protos.transpose((0, 1, 3, 2))    # (B, T, N, K)
    tok_norm = (tokens * tokens).sum(axis=-1, keepdims=True).sqrt()       # (B, T, N, 1)
    pro_norm = (protos * protos).sum(axis=-1, keepdims=True).sqrt()       # (B, T, K, 1)
    denom = tok_norm * pro_norm.transpose((0, 1, 3, 2)) + COSINE_EPS
    cos = dots / denom  # (B, T, N, K)

    weights = (valid / n_valid[:, None]).astype(sequence_tokens.dtype)
    cos = cos * Tensor(weights.reshape(B, T, 1, 1))
    return cos.sum(axis=1)  # (B, N, K)


def apply_confidence(scores, similarity, scale):
    """Inject class confidence additively: scores + scale * similarity."""
    return scores + ad.as_tensor(similarity) * scale
