"""The assembled network and the episode-level forward passes shared by
training and evaluation.

Clips inside an episode are laid out class-major: first all N*K support
clips, then all N*Q query clips.  Classification is nearest-prototype under
the fused head distances; prototypes average support frame features per
temporal index (a single support clip is its own prototype).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import RunConfig
from .encoder import FrameEncoder
from .heads import HeadOutput, TemporalHead
from .losses import AuxClassifier, fused_distance
from .metrics import bi_mhm, otam, pairwise_distances
from .motion import MotionDecoder, MotionFeatureGenerator


@dataclass
class EpisodeFeatures:
    base: HeadOutput | None
    motion: HeadOutput | None
    motion_maps: torch.Tensor | None  # (V, T-1, C, h, w)


class MoLoNet(nn.Module):
    def __init__(self, cfg: RunConfig, with_decoder: bool | None = None,
                 with_aux: bool | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        m = cfg.model
        size = cfg.gen.size
        self.encoder = FrameEncoder(3, m.enc_channels)
        stride = self.encoder.total_stride
        if size % stride:
            raise ValueError(f"canvas {size} not divisible by encoder stride {stride}")
        self.grid = size // stride
        dim = m.enc_channels[-1]
        if dim != m.feat_dim:
            raise ValueError(
                f"feat_dim {m.feat_dim} must equal last encoder channel {dim}"
            )
        t = cfg.gen.frames

        if with_decoder is None:
            with_decoder = cfg.use_autodecoder
        if cfg.use_base_head:
            self.base_head = TemporalHead(
                dim, t, m.attn_heads, m.ffn_mult, m.transformer_layers, cfg.token_mode
            )
        needs_motion = cfg.use_motion_head or with_decoder
        if needs_motion:
            self.motion_gen = MotionFeatureGenerator(dim, m.temporal_kernel)
        if cfg.use_motion_head:
            self.motion_head = TemporalHead(
                dim, t - 1, m.attn_heads, m.ffn_mult, m.transformer_layers, cfg.token_mode
            )
        if with_decoder:
            self.decoder = MotionDecoder(dim, m.decoder_channels, 3)
            if self.grid * self.decoder.scale != size:
                raise ValueError(
                    f"decoder upsamples {self.grid} -> {self.grid * self.decoder.scale}, "
                    f"cannot reach canvas {size}; adjust decoder_channels"
                )
        if with_aux is None:
            with_aux = cfg.lambda_aux > 0
        if with_aux:
            self.aux_head = AuxClassifier(dim, cfg.train_classes)

    def frame_features(self, clips: torch.Tensor) -> torch.Tensor:
        """(V, T, 3, H, W) -> (V, T, C, h, w)."""
        v, t = clips.shape[:2]
        feats = self.encoder(clips.reshape(v * t, *clips.shape[2:]))
        return feats.reshape(v, t, *feats.shape[1:])

    def episode_features(self, clips: torch.Tensor) -> EpisodeFeatures:
        feats = self.frame_features(clips)
        base = self.base_head(feats) if hasattr(self, "base_head") else None
        motion_maps = None
        motion = None
        if hasattr(self, "motion_gen"):
            motion_maps = self.motion_gen(feats)
        if hasattr(self, "motion_head"):
            motion = self.motion_head(motion_maps)
        return EpisodeFeatures(base=base, motion=motion, motion_maps=motion_maps)

    def _head_distances(self, out: HeadOutput, n_way: int, k_shot: int) -> torch.Tensor:
        """(V, L, C) head frame features -> (num_queries, n_way) distances."""
        frames = out.frames
        n_support = n_way * k_shot
        protos = frames[:n_support].reshape(n_way, k_shot, *frames.shape[1:]).mean(dim=1)
        queries = frames[n_support:]
        nq = queries.shape[0]
        d = pairwise_distances(
            queries[:, None].expand(nq, n_way, *queries.shape[1:]),
            protos[None].expand(nq, n_way, *protos.shape[1:]),
        )
        if self.cfg.metric == "bimhm":
            return bi_mhm(d)
        return otam(d, self.cfg.otam_gamma)

    def episode_distances(self, feats: EpisodeFeatures, n_way: int,
                          k_shot: int) -> torch.Tensor:
        """Fused support-query distances, (num_queries, n_way)."""
        d_base = d_motion = None
        if feats.base is not None:
            d_base = self._head_distances(feats.base, n_way, k_shot)
        if feats.motion is not None:
            d_motion = self._head_distances(feats.motion, n_way, k_shot)
        if d_base is not None and d_motion is not None:
            return fused_distance(d_base, d_motion, self.cfg.alpha)
        return d_base if d_base is not None else d_motion

    def global_features(self, feats: EpisodeFeatures) -> torch.Tensor:
        """Per-clip global feature for the auxiliary classifier."""
        out = feats.base if feats.base is not None else feats.motion
        if out.token is not None:
            return out.token
        return out.frames.mean(dim=1)


def build_model(cfg: RunConfig, eval_only: bool = False) -> MoLoNet:
    """Construct the network with seeded init; eval models skip the decoder
    and auxiliary classifier entirely."""
    torch.manual_seed(cfg.seed)
    if eval_only:
        model = MoLoNet(cfg, with_decoder=False, with_aux=False)
    else:
        model = MoLoNet(cfg)
    dtype = torch.float64 if cfg.dtype == "f64" else torch.float32
    return model.to(dtype=dtype)


def eval_required_tensors(cfg: RunConfig) -> set[str]:
    """Parameter names evaluation needs; decoder and aux weights are not on
    the classification path and may be absent from a checkpoint."""
    with torch.random.fork_rng():
        model = MoLoNet(cfg, with_decoder=False, with_aux=False)
    return set(model.state_dict().keys())
