"""Episodic evaluation with confidence intervals.

Episodes are sampled from the test classes only, with per-episode seeds
derived from (run seed, episode index), so the outcome is independent of how
episodes are distributed over worker threads.  The decoder and auxiliary
classifier never participate: evaluation models are built without them.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from .config import RunConfig
from .checkpoint import load_checkpoint, validate_names
from .data import plan_episode
from .model import MoLoNet, build_model
from .train import STREAM_EVAL_PLAN, derive_seed, episode_clips, episode_layout, split_from


@dataclass
class EvalReport:
    accuracy: float
    ci95: float  # 1.96 * sd / sqrt(episodes)
    per_class: dict[int, float]
    episodes: int
    config_hash: str
    wall_clock_s: float = field(compare=False)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "ci95": self.ci95,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "episodes": self.episodes,
            "config_hash": self.config_hash,
            "wall_clock_s": self.wall_clock_s,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def eval_workers() -> int:
    cap = os.environ.get("MOLO_THREADS")
    workers = min(4, os.cpu_count() or 1)
    if cap is not None:
        workers = max(1, min(workers, int(cap)))
    return workers


def evaluate(model: MoLoNet, cfg: RunConfig, episodes: int | None = None,
             workers: int | None = None) -> EvalReport:
    cfg.validate()
    episodes = cfg.eval_episodes if episodes is None else episodes
    workers = eval_workers() if workers is None else workers
    split = split_from(cfg)
    layout = episode_layout(cfg)
    query_local = layout["query_local"]
    torch_dtype = torch.float64 if cfg.dtype == "f64" else torch.float32
    model.eval()

    def run_episode(idx: int) -> tuple[float, dict[int, list[int]]]:
        plan = plan_episode(
            split, "test", cfg.n_way, cfg.k_shot, cfg.q_queries,
            derive_seed(cfg.seed, STREAM_EVAL_PLAN, idx),
        )
        clips = torch.from_numpy(episode_clips(plan, cfg, None)).to(torch_dtype)
        with torch.no_grad():
            feats = model.episode_features(clips)
            distances = model.episode_distances(feats, cfg.n_way, cfg.k_shot)
        pred = distances.argmin(dim=1)
        correct = pred == query_local
        tallies: dict[int, list[int]] = {}
        for local, cls in plan.way_labels.items():
            mask = query_local == local
            hits = int(correct[mask].sum())
            bucket = tallies.setdefault(cls, [0, 0])
            bucket[0] += hits
            bucket[1] += int(mask.sum())
        return float(correct.float().mean()), tallies

    t0 = time.monotonic()
    # Parallelism comes from episode workers; keep intra-op single-threaded so
    # results do not depend on the worker count.
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        if workers <= 1:
            results = [run_episode(i) for i in range(episodes)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_episode, range(episodes)))
    finally:
        torch.set_num_threads(prev_threads)
    wall = time.monotonic() - t0

    accs = np.array([r[0] for r in results])
    class_totals: dict[int, list[int]] = {}
    for _, tallies in results:
        for cls, (hit, tot) in tallies.items():
            bucket = class_totals.setdefault(cls, [0, 0])
            bucket[0] += hit
            bucket[1] += tot
    per_class = {cls: hit / tot for cls, (hit, tot) in class_totals.items()}
    sd = float(accs.std(ddof=1)) if episodes > 1 else 0.0
    return EvalReport(
        accuracy=float(accs.mean()),
        ci95=1.96 * sd / math.sqrt(episodes),
        per_class=per_class,
        episodes=episodes,
        config_hash=config_mod.config_hash(cfg),
        wall_clock_s=wall,
    )


def load_eval_model(ckpt_path: str | Path) -> tuple[MoLoNet, RunConfig]:
    """Build a decoder-free model from a checkpoint, validating tensor names."""
    tensors, cfg = load_checkpoint(ckpt_path)
    model = build_model(cfg, eval_only=True)
    required = set(model.state_dict().keys())
    validate_names(tensors, required, "evaluation")
    model.load_state_dict({k: v for k, v in tensors.items() if k in required}, strict=True)
    return model, cfg


def evaluate_checkpoint(ckpt_path: str | Path, episodes: int | None = None,
                        workers: int | None = None,
                        overrides: list[str] | None = None) -> EvalReport:
    model, cfg = load_eval_model(ckpt_path)
    for spec in overrides or []:
        config_mod.apply_override(cfg, spec)
    return evaluate(model, cfg, episodes=episodes, workers=workers)
