"""Per-frame convolutional encoder.

Three stride-2 blocks of [conv3x3, layer-norm over channels, gelu] take each
frame from (3, S, S) to (C, S/8, S/8).  Frames are encoded independently (the
frame axis rides the conv batch axis), so all temporal modeling is left to the
downstream heads.  The final spatial global-average pool is deliberately
absent: the feature grid feeds the motion pathway.
"""

from __future__ import annotations

import torch
from torch import nn

from . import tensorops as ops


class FrameEncoder(nn.Module):
    def __init__(self, in_channels: int = 3, channels: tuple[int, ...] = (32, 64, 64)):
        super().__init__()
        self.channels = tuple(channels)
        self.total_stride = 2 ** len(self.channels)
        convs = []
        c_in = in_channels
        for c_out in self.channels:
            convs.append(nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1))
            c_in = c_out
        self.convs = nn.ModuleList(convs)
        self.norm_weights = nn.ParameterList(nn.Parameter(torch.ones(c)) for c in self.channels)
        self.norm_biases = nn.ParameterList(nn.Parameter(torch.zeros(c)) for c in self.channels)

    @property
    def out_channels(self) -> int:
        return self.channels[-1]

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, C, H/stride, W/stride)."""
        h_in, w_in = frames.shape[-2:]
        if h_in % self.total_stride or w_in % self.total_stride:
            raise ValueError(
                f"frame size {h_in}x{w_in} not divisible by total stride {self.total_stride}"
            )
        x = frames.to(memory_format=torch.channels_last)
        for conv, w, b in zip(self.convs, self.norm_weights, self.norm_biases):
            x = conv(x)
            x = ops.layer_norm(x, axis=1, weight=w, bias=b)
            x = ops.gelu(x)
        return x

    def encode_clip(self, clip: torch.Tensor) -> torch.Tensor:
        """(T, 3, H, W) -> (T, C, h, w); identical to batched forward."""
        return self.forward(clip)
