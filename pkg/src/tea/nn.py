"""Transformer building blocks on top of the autodiff engine.

Pre-norm blocks, GELU feed-forward, learned embeddings initialized from a
truncated normal (std 0.02). All layers are dtype-agnostic; the training
default is float32 and the numerical test suites run them in float64.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, concat, gelu, softmax

MASK_BIAS = -1e9  # additive pre-softmax bias for masked attention keys


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02,
                 dtype=np.float32) -> np.ndarray:
    """Normal(0, std) truncated to +/- 2 std, resampling the tails."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


class Module:
    """Minimal container tracking named parameters and submodules."""

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        params: dict[str, Parameter] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
            if isinstance(value, Parameter):
                params[key] = value
            elif isinstance(value, Module):
                params.update(value.named_parameters(key))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        params.update(item.named_parameters(f"{key}.{i}"))
        return params

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.zero_grad()


class Linear(Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int,
                 bias: bool = True, dtype=np.float32):
        self.weight = Parameter(trunc_normal(rng, (in_dim, out_dim), dtype=dtype))
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        out = x.reshape((-1, self.in_dim)) @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out.reshape(lead + (self.out_dim,))


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)


class MultiHeadSelfAttention(Module):
    """Self-attention with an optional additive key-mask bias."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int, dtype=np.float32):
        if dim % heads != 0:
            raise ValueError(f"embed dim {dim} not divisible by {heads} heads")
        self.qkv = Linear(rng, dim, dim * 3, dtype=dtype)
        self.proj = Linear(rng, dim, dim, dtype=dtype)
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)

    def __call__(self, x: Tensor, mask_bias: np.ndarray | None = None) -> Tensor:
        rows, seq, dim = x.shape
        qkv = self.qkv(x)
        q = qkv[:, :, :dim]
        k = qkv[:, :, dim:2 * dim]
        v = qkv[:, :, 2 * dim:]

        def to_heads(t: Tensor) -> Tensor:
            return t.reshape((rows, seq, self.heads, self.head_dim)).transpose((0, 2, 1, 3))

        q, k, v = to_heads(q), to_heads(k), to_heads(v)
        scores = (q @ k.swapaxes(-1, -2)) * self.scale
        if mask_bias is not None:
            scores = scores + mask_bias  # (rows, 1, 1, seq) broadcast, no grad
        attn = softmax(scores, axis=-1)
        out = (attn @ v).transpose((0, 2, 1, 3)).reshape((rows, seq, dim))
        return self.proj(out)


class TransformerBlock(Module):
    def __init__(self, rng: np.random.Generator, dim: int, heads: int,
                 mlp_ratio: int = 4, dtype=np.float32):
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.attn = MultiHeadSelfAttention(rng, dim, heads, dtype=dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.fc1 = Linear(rng, dim, dim * mlp_ratio, dtype=dtype)
        self.fc2 = Linear(rng, dim * mlp_ratio, dim, dtype=dtype)

    def __call__(self, x: Tensor, mask_bias: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.norm1(x), mask_bias)
        return x + self.fc2(gelu(self.fc1(self.norm2(x))))


class TransformerEncoder(Module):
    def __init__(self, rng: np.random.Generator, dim: int, depth: int, heads: int,
                 mlp_ratio: int = 4, dtype=np.float32):
        self.blocks = [TransformerBlock(rng, dim, heads, mlp_ratio, dtype=dtype)
                       for _ in range(depth)]
        self.norm = LayerNorm(dim, dtype=dtype)

    def __call__(self, x: Tensor, mask_bias: np.ndarray | None = None) -> Tensor:
        for block in self.blocks:
            x = block(x, mask_bias)
        return self.norm(x)


def prepend_tokens(tokens: Parameter, x: Tensor) -> Tensor:
    """Broadcast (n, d) learned tokens across the batch rows and prepend."""
    rows = x.shape[0]
    n, d = tokens.shape
    lead = tokens.reshape((1, n, d)).expand((rows, n, d))
    return concat([lead, x], axis=1)
