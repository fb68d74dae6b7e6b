"""Causally masked multi-head attention.

The mask is strict: a query at frame t attends to key frames <= t only, so
weights above the diagonal are exactly zero and each used row sums to 1.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn


def causal_attention_core(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor):
    """Masked scaled dot-product attention on (B, H, T, D) tensors.

    Returns (output, weights); weights are (B, H, T, T).
    """
    d = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d)
    t = scores.shape[-1]
    mask = torch.triu(torch.ones(t, t, dtype=torch.bool, device=scores.device), 1)
    scores = scores.masked_fill(mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return weights @ v, weights


class CausalMultiheadAttention(nn.Module):
    """Multi-head attention with learned Q/K/V/output projections."""

    def __init__(self, embed_dim: int, num_heads: int):
        super().__init__()
        if embed_dim % num_heads:
            raise ValueError(
                f"embed dim {embed_dim} not divisible by {num_heads} heads")
        self.embed_dim = embed_dim
        self.num_heads = num_heads
        self.q_proj = nn.Linear(embed_dim, embed_dim)
        self.k_proj = nn.Linear(embed_dim, embed_dim)
        self.v_proj = nn.Linear(embed_dim, embed_dim)
        self.out_proj = nn.Linear(embed_dim, embed_dim)

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.num_heads, -1).transpose(1, 2)

    def forward(self, q, k, v):
        out, _ = causal_attention_core(
            self._split(self.q_proj(q)),
            self._split(self.k_proj(k)),
            self._split(self.v_proj(v)),
        )
        b, h, t, d = out.shape
        return self.out_proj(out.transpose(1, 2).reshape(b, t, h * d))

    def attention_weights(self, q, k, v) -> torch.Tensor:
        """Post-softmax weights, exposed for causality checks."""
        _, weights = causal_attention_core(
            self._split(self.q_proj(q)),
            self._split(self.k_proj(k)),
            self._split(self.v_proj(v)),
        )
        return weights
