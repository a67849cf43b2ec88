"""Episodic end-to-end training.

Each step samples a fresh N-way K-shot episode from the train classes,
augments the clips, runs the full network, composes the loss (classification
cross-entropy, the two contrastive terms, frame-difference reconstruction,
auxiliary semantic term), and takes one Adam step.  (seed, config) fully
determines the trajectory; two runs with the same pair produce bit-identical
checkpoints.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .checkpoint import save_checkpoint
from .data import SplitSpec, augment_clip, generate_clip, plan_episode
from .losses import LossBreakdown, episode_ce, episode_contrastive
from .model import MoLoNet, build_model
from .motion import recon_loss, recon_target

# Sub-stream tags for seed derivation; never reuse one for a new purpose.
STREAM_TRAIN_PLAN = 1
STREAM_AUGMENT = 2
STREAM_EVAL_PLAN = 3

CSV_FIELDS = ("step", "ce", "lg_base", "lg_motion", "recons", "aux", "total", "train_acc")


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; message carries the episode seed."""


def derive_seed(*key: int) -> int:
    """Stable 62-bit stream seed from an integer key path."""
    state = np.random.SeedSequence(tuple(int(k) for k in key)).generate_state(1, np.uint64)
    return int(state[0] & ((1 << 62) - 1))


@dataclass
class TrainResult:
    model: MoLoNet
    checkpoint_path: Path | None
    metrics_path: Path | None
    log_rows: list[dict]


def split_from(cfg: RunConfig) -> SplitSpec:
    return SplitSpec(frozenset(cfg.train_classes), frozenset(cfg.test_classes))


def episode_clips(plan, cfg: RunConfig, aug_rng: np.random.Generator | None) -> np.ndarray:
    """Render one episode class-major into a (V, T, 3, H, W) array.

    Support clips come first.  When ``aug_rng`` is given every clip gets an
    independent crop/jitter draw.
    """
    stacks = []
    for seeds_block in (plan.support_seeds, plan.query_seeds):
        for i, cls in enumerate(plan.classes):
            for s in seeds_block[i]:
                frames = generate_clip(cls, int(s), cfg.gen).frames
                if aug_rng is not None:
                    frames = augment_clip(frames, aug_rng, cfg.gen)
                stacks.append(frames)
    return np.stack(stacks)


def _episode_loss(model: MoLoNet, cfg: RunConfig, clips: torch.Tensor,
                  layout: dict) -> tuple[torch.Tensor, LossBreakdown, float]:
    feats = model.episode_features(clips)
    distances = model.episode_distances(feats, cfg.n_way, cfg.k_shot)
    ce = episode_ce(distances, layout["query_local"])

    lg_base = lg_motion = None
    if cfg.use_contrastive:
        for name, out in (("base", feats.base), ("motion", feats.motion)):
            if out is None:
                continue
            term = episode_contrastive(
                out.token, out.frames, layout["clip_local"], layout["anchor_idx"],
                cfg.contrast_scope, cfg.temperature,
            )
            if name == "base":
                lg_base = term
            else:
                lg_motion = term

    recons = None
    if cfg.use_autodecoder:
        sel = layout["recon_sel"]
        pred = model.decoder(feats.motion_maps[sel])
        recons = recon_loss(pred, recon_target(clips[sel]))

    aux = None
    if hasattr(model, "aux_head"):
        aux = model.aux_head(model.global_features(feats), layout["abs_labels"])

    total = ce
    if lg_base is not None:
        total = total + cfg.lambda_contrast * lg_base
    if lg_motion is not None:
        total = total + cfg.lambda_contrast * lg_motion
    if recons is not None:
        total = total + cfg.lambda_recon * recons
    if aux is not None:
        total = total + cfg.lambda_aux * aux

    parts = {
        "ce": ce.item(),
        "lg_base": 0.0 if lg_base is None else lg_base.item(),
        "lg_motion": 0.0 if lg_motion is None else lg_motion.item(),
        "recons": 0.0 if recons is None else recons.item(),
        "aux": 0.0 if aux is None else aux.item(),
    }
    reported_total = (
        parts["ce"]
        + cfg.lambda_contrast * (parts["lg_base"] + parts["lg_motion"])
        + cfg.lambda_recon * parts["recons"]
        + cfg.lambda_aux * parts["aux"]
    )
    breakdown = LossBreakdown(**parts, total=reported_total)
    with torch.no_grad():
        acc = float((distances.argmin(dim=1) == layout["query_local"]).float().mean())
    return total, breakdown, acc


def episode_layout(cfg: RunConfig) -> dict:
    n, k, q = cfg.n_way, cfg.k_shot, cfg.q_queries
    n_support = n * k
    clip_local = torch.cat(
        [torch.arange(n).repeat_interleave(k), torch.arange(n).repeat_interleave(q)]
    )
    return {
        "clip_local": clip_local,
        "query_local": torch.arange(n).repeat_interleave(q),
        "anchor_idx": torch.arange(n_support, n * (k + q)),
        "recon_sel": slice(0, n_support) if cfg.recon_scope == "support" else slice(None),
        "clip_local_list": clip_local.tolist(),
    }


def train(cfg: RunConfig, out_dir: str | Path | None = None,
          quiet: bool = False) -> TrainResult:
    cfg.validate()
    split = split_from(cfg)
    model = build_model(cfg)
    optim = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    layout = episode_layout(cfg)
    torch_dtype = torch.float64 if cfg.dtype == "f64" else torch.float32

    rows: list[dict] = []
    window: dict[str, float] = {f: 0.0 for f in CSV_FIELDS if f != "step"}
    window_n = 0
    t_start = time.monotonic()

    for ep in range(cfg.train_episodes):
        plan_seed = derive_seed(cfg.seed, STREAM_TRAIN_PLAN, ep)
        plan = plan_episode(split, "train", cfg.n_way, cfg.k_shot, cfg.q_queries, plan_seed)
        aug_rng = np.random.default_rng(derive_seed(cfg.seed, STREAM_AUGMENT, ep))
        clips_np = episode_clips(plan, cfg, aug_rng)
        clips = torch.from_numpy(clips_np).to(torch_dtype)
        layout["abs_labels"] = [plan.classes[i] for i in layout["clip_local_list"]]

        total, breakdown, acc = _episode_loss(model, cfg, clips, layout)
        if not torch.isfinite(total):
            raise TrainingDiverged(
                f"non-finite loss at episode {ep} (plan seed {plan_seed}): {breakdown}"
            )
        assert breakdown.total == breakdown.recombine(
            cfg.lambda_contrast, cfg.lambda_recon, cfg.lambda_aux
        )
        optim.zero_grad(set_to_none=True)
        total.backward()
        optim.step()

        for key in ("ce", "lg_base", "lg_motion", "recons", "aux", "total"):
            window[key] += getattr(breakdown, key)
        window["train_acc"] += acc
        window_n += 1
        if (ep + 1) % cfg.log_every == 0:
            row = {"step": ep + 1}
            row.update({k: v / window_n for k, v in window.items()})
            rows.append(row)
            if not quiet:
                print(
                    f"[train] step {row['step']:>6d}  total {row['total']:.4f}  "
                    f"ce {row['ce']:.4f}  recons {row['recons']:.5f}  "
                    f"acc {row['train_acc']:.3f}",
                    flush=True,
                )
            window = {k: 0.0 for k in window}
            window_n = 0

    if not quiet:
        print(f"[train] {cfg.train_episodes} episodes in {time.monotonic() - t_start:.1f}s")

    ckpt_path = metrics_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = save_checkpoint(out_dir / "model.molo", model.state_dict(), cfg)
        metrics_path = out_dir / "metrics.csv"
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
    return TrainResult(model, ckpt_path, metrics_path, rows)
