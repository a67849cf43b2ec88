"""Few-shot video matching on synthetic motion data.

Temporal transformer heads with a shared learnable global token, long-short
contrastive training, an explicit motion pathway supervised by frame-difference
reconstruction, and differentiable frame-alignment metrics, evaluated under the
episodic N-way K-shot protocol.
"""

from .config import GenConfig, ModelConfig, RunConfig
from .data import Episode, SplitSpec, VideoClip, default_split, generate_clip, sample_episode
from .evaluate import EvalReport, evaluate, evaluate_checkpoint
from .heads import HeadOutput
from .losses import LossBreakdown
from .model import MoLoNet, build_model
from .train import TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "GenConfig",
    "ModelConfig",
    "RunConfig",
    "Episode",
    "SplitSpec",
    "VideoClip",
    "default_split",
    "generate_clip",
    "sample_episode",
    "EvalReport",
    "evaluate",
    "evaluate_checkpoint",
    "HeadOutput",
    "LossBreakdown",
    "MoLoNet",
    "build_model",
    "TrainResult",
    "train",
    "__version__",
]
