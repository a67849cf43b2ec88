"""Motion pathway: feature differencing and the pixel-difference decoder.

``MotionFeatureGenerator`` applies a channel-preserving 3D convolution over
the stacked per-frame feature maps (replicate padding on the time axis, zero
padding in space) and emits adjacent differences g[t+1] - g[t].  Replicate
temporal padding makes a static clip produce exactly-zero motion features;
zero padding would fabricate motion at the clip boundaries.

``MotionDecoder`` upsamples each motion feature map back to input resolution
to regress the raw pixel difference between consecutive frames.  It is a
training-only module: nothing on the classification path reads it.
"""

from __future__ import annotations

import torch
from torch import nn

from . import tensorops as ops


class MotionFeatureGenerator(nn.Module):
    def __init__(self, channels: int, temporal_kernel: int = 3):
        super().__init__()
        if temporal_kernel % 2 == 0:
            raise ValueError("temporal kernel must be odd")
        self.temporal_pad = temporal_kernel // 2
        self.conv = nn.Conv3d(
            channels, channels, kernel_size=(temporal_kernel, 3, 3), padding=0
        )

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        """(B, T, C, h, w) -> (B, T-1, C, h, w) adjacent differences."""
        if feats.shape[1] < 2:
            raise ValueError(f"need at least 2 frames, got {feats.shape[1]}")
        x = feats.permute(0, 2, 1, 3, 4)  # (B, C, T, h, w)
        x = ops.replicate_pad_time(x, self.temporal_pad)
        g = ops.conv3d(x, self.conv.weight, self.conv.bias, padding=(0, 1, 1))
        diff = g[:, :, 1:] - g[:, :, :-1]
        return diff.permute(0, 2, 1, 3, 4)


class MotionDecoder(nn.Module):
    """Stacked [2x nearest upsample, conv3x3, gelu] stages; last stage linear."""

    def __init__(self, in_channels: int, mid_channels: tuple[int, ...] = (32, 16),
                 out_channels: int = 3):
        super().__init__()
        chain = (in_channels, *mid_channels, out_channels)
        self.num_stages = len(chain) - 1
        self.convs = nn.ModuleList(
            nn.Conv2d(chain[i], chain[i + 1], kernel_size=3, padding=1)
            for i in range(self.num_stages)
        )

    @property
    def scale(self) -> int:
        return 2 ** self.num_stages

    def forward(self, motion: torch.Tensor) -> torch.Tensor:
        """(B, T1, C, h, w) -> (B, T1, 3, h*scale, w*scale)."""
        b, t1 = motion.shape[:2]
        x = motion.reshape(b * t1, *motion.shape[2:])
        for i, conv in enumerate(self.convs):
            x = conv(ops.upsample_nearest2x(x))
            if i + 1 < self.num_stages:
                x = ops.gelu(x)
        return x.reshape(b, t1, *x.shape[1:])


def recon_target(frames: torch.Tensor) -> torch.Tensor:
    """Pixel differences of consecutive frames: (B, T, 3, H, W) -> (B, T-1, 3, H, W).

    Always computed from raw pixels, never from features.
    """
    if frames.shape[1] < 2:
        raise ValueError(f"need at least 2 frames, got {frames.shape[1]}")
    return frames[:, 1:] - frames[:, :-1]


def recon_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements."""
    if pred.shape != target.shape:
        raise ValueError(
            f"recon_loss: shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}"
        )
    return (pred - target).pow(2).mean()
