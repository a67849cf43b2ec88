"""Temporal transformer heads.

A head pools each frame's spatial grid to a vector, prepends a learnable
global token shared across videos, adds learned position embeddings, and runs
a pre-norm transformer encoder.  The token output summarises the whole clip;
the per-position outputs are the frame features used for matching.  The base
head runs over T frame features, the motion head over T-1 difference
features; they never share weights.

``token_mode`` selects the global-feature variant:
  token  -- learnable token prepended (default),
  tap    -- no token; the global feature is the temporal average of outputs,
  none   -- no token and no global feature (frame features only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from . import tensorops as ops


@dataclass
class HeadOutput:
    token: torch.Tensor | None  # (B, C) global feature, None in 'none' mode
    frames: torch.Tensor  # (B, L, C)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"dim {dim} not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, return_weights: bool = False):
        b, l, c = x.shape
        qkv = self.qkv(x).reshape(b, l, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)  # each (B, H, L, dh)
        scores = ops.matmul(q, k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        attn = ops.softmax(scores, axis=-1)
        out = ops.matmul(attn, v).transpose(1, 2).reshape(b, l, c)
        out = self.proj(out)
        if return_weights:
            return out, attn
        return out


class EncoderLayer(nn.Module):
    """Pre-norm transformer layer: x + attn(ln(x)), then x + ffn(ln(x))."""

    def __init__(self, dim: int, num_heads: int, ffn_mult: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, num_heads)
        self.ln2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, ffn_mult * dim)
        self.fc2 = nn.Linear(ffn_mult * dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.fc2(ops.gelu(self.fc1(self.ln2(x))))


class TemporalHead(nn.Module):
    def __init__(
        self,
        dim: int,
        seq_len: int,
        num_heads: int = 4,
        ffn_mult: int = 4,
        num_layers: int = 1,
        token_mode: str = "token",
    ):
        super().__init__()
        if token_mode not in ("token", "tap", "none"):
            raise ValueError(f"unknown token_mode {token_mode!r}")
        self.seq_len = seq_len
        self.token_mode = token_mode
        if token_mode == "token":
            self.token = nn.Parameter(torch.randn(dim) * 0.02)
        self.pos = nn.Parameter(torch.randn(seq_len + 1, dim) * 0.02)
        self.layers = nn.ModuleList(
            EncoderLayer(dim, num_heads, ffn_mult) for _ in range(num_layers)
        )

    def forward(self, feats: torch.Tensor) -> HeadOutput:
        """(B, L, C, h, w) or (L, C, h, w) -> HeadOutput; pools space first."""
        squeeze = feats.dim() == 4
        if squeeze:
            feats = feats[None]
        pooled = ops.global_avg_pool(feats)  # (B, L, C)
        b, l, _ = pooled.shape
        if l != self.seq_len:
            raise ValueError(
                f"sequence length {l} does not match position table ({self.seq_len})"
            )
        if self.token_mode == "token":
            tok = self.token[None, None, :].expand(b, 1, -1)
            x = ops.concat([tok, pooled], axis=1) + self.pos[None]
        else:
            x = pooled + self.pos[None, 1:]
        for layer in self.layers:
            x = layer(x)
        if self.token_mode == "token":
            token, frames = x[:, 0], x[:, 1:]
        elif self.token_mode == "tap":
            frames = x
            token = frames.mean(dim=1)
        else:
            frames, token = x, None
        if squeeze:
            frames = frames[0]
            token = None if token is None else token[0]
        return HeadOutput(token=token, frames=frames)
