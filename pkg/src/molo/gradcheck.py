"""Gradient integrity runner.

Checks every differentiable op in the suite against central finite
differences in f64, then does the same for the complete training loss of a
tiny 2-way 1-shot episode, perturbing every parameter element of a scaled-down
network.  Each op appears exactly once in the report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import torch

from . import tensorops as ops
from .config import GenConfig, ModelConfig, RunConfig
from .data import plan_episode
from .metrics import bi_mhm, otam
from .model import build_model
from .train import (STREAM_TRAIN_PLAN, _episode_loss, derive_seed, episode_clips,
                    episode_layout, split_from)

DEFAULT_THRESHOLD = 1e-5


def _gen(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(seed)
    return g


def _randn(g, *shape):
    return torch.randn(*shape, generator=g, dtype=torch.float64)


def _away_from_zero(g, *shape, margin=0.2, span=1.3):
    mag = margin + span * torch.rand(*shape, generator=g, dtype=torch.float64)
    sign = torch.where(torch.rand(*shape, generator=g) < 0.5, -1.0, 1.0).double()
    return mag * sign


def _weighted(fn: Callable, w: torch.Tensor) -> Callable:
    return lambda x: (fn(x) * w).sum()


def op_cases() -> list[tuple[str, Callable, torch.Tensor]]:
    """(name, scalar-valued f, input tensor) for every op in the suite."""
    cases: list[tuple[str, Callable, torch.Tensor]] = []

    g = _gen(101)
    c = _randn(g, 3, 4)
    w = _randn(g, 3, 4)
    cases.append(("add", _weighted(lambda x: ops.add(x, c), w), _randn(g, 3, 4)))
    cases.append(("sub", _weighted(lambda x: ops.sub(x, c), w), _randn(g, 3, 4)))
    cases.append(("mul", _weighted(lambda x: ops.mul(x, c), w), _randn(g, 3, 4)))
    cases.append(("scalar_mul", _weighted(lambda x: ops.scalar_mul(x, 1.7), w), _randn(g, 3, 4)))

    g = _gen(102)
    m = _randn(g, 4, 5)
    wm = _randn(g, 3, 5)
    cases.append(("matmul", _weighted(lambda x: ops.matmul(x, m), wm), _randn(g, 3, 4)))

    g = _gen(103)
    cw = _randn(g, 3, 2, 3, 3) * 0.5
    cb = _randn(g, 3) * 0.1
    wc = _randn(g, 1, 3, 3, 3)
    cases.append(
        ("conv2d",
         _weighted(lambda x: ops.conv2d(x, cw, cb, stride=2, padding=1), wc),
         _randn(g, 1, 2, 6, 6))
    )

    g = _gen(104)
    c3w = _randn(g, 2, 2, 3, 3, 3) * 0.4
    c3b = _randn(g, 2) * 0.1
    w3 = _randn(g, 1, 2, 2, 2, 2)
    cases.append(
        ("conv3d",
         _weighted(lambda x: ops.conv3d(x, c3w, c3b, padding=(0, 1, 1)), w3),
         _randn(g, 1, 2, 4, 2, 2))
    )

    g = _gen(105)
    w = _randn(g, 4, 5)
    cases.append(("relu", _weighted(ops.relu, w), _away_from_zero(g, 4, 5)))
    cases.append(("gelu", _weighted(ops.gelu, w), _randn(g, 4, 5)))

    g = _gen(106)
    w = _randn(g, 3, 6)
    cases.append(("softmax", _weighted(lambda x: ops.softmax(x, -1), w), _randn(g, 3, 6)))

    g = _gen(107)
    lw = 1.0 + 0.2 * _randn(g, 5)
    lb = 0.1 * _randn(g, 5)
    w = _randn(g, 4, 5, 3)
    cases.append(
        ("layer_norm",
         _weighted(lambda x: ops.layer_norm(x, axis=1, weight=lw, bias=lb), w),
         _randn(g, 4, 5, 3))
    )

    g = _gen(108)
    w = _randn(g, 3)
    cases.append(("mean", _weighted(lambda x: ops.mean(x, axis=1), w), _randn(g, 3, 5)))
    cases.append(("sum", _weighted(lambda x: ops.reduce_sum(x, axis=1), w), _randn(g, 3, 5)))

    g = _gen(109)
    w = _randn(g, 2, 3)
    cases.append(("global_avg_pool", _weighted(ops.global_avg_pool, w), _randn(g, 2, 3, 4, 4)))

    g = _gen(110)
    w = _randn(g, 1, 2, 6, 6)
    cases.append(("upsample_nearest2x", _weighted(ops.upsample_nearest2x, w), _randn(g, 1, 2, 3, 3)))

    g = _gen(111)
    c = _randn(g, 2, 3)
    w = _randn(g, 4, 3)
    cases.append(("concat", _weighted(lambda x: ops.concat([x, c], 0), w), _randn(g, 2, 3)))
    w = _randn(g, 4, 2)
    cases.append(("transpose", _weighted(lambda x: ops.transpose(x, 0, 1), w), _randn(g, 2, 4)))

    g = _gen(112)
    w = _randn(g, 3, 4)
    cases.append(("exp", _weighted(ops.exp, w), _randn(g, 3, 4)))
    cases.append(
        ("log", _weighted(ops.log, w), 0.5 + 1.5 * torch.rand(3, 4, generator=g, dtype=torch.float64))
    )

    g = _gen(113)
    b = _randn(g, 4, 6)
    w = _randn(g, 4)
    cases.append(
        ("cosine_similarity", _weighted(lambda x: ops.cosine_similarity(x, b, -1), w), _randn(g, 4, 6))
    )
    cases.append(("l2_norm", _weighted(lambda x: ops.l2_norm(x, -1), w), _randn(g, 4, 6)))

    # The two sequence metrics are differentiable end to end; check them on a
    # small matrix with a smooth-ish soft-min temperature.
    g = _gen(114)
    d0 = 0.3 + 1.2 * torch.rand(3, 3, generator=g, dtype=torch.float64)
    cases.append(("bi_mhm", lambda x: bi_mhm(x), d0.clone()))
    cases.append(("otam", lambda x: otam(x, gamma=0.5), d0.clone()))
    return cases


def toy_config() -> RunConfig:
    """Scaled-down everything: 8x8 canvas, 3 frames, 8-dim features."""
    cfg = RunConfig(
        n_way=2,
        k_shot=1,
        q_queries=1,
        train_episodes=0,
        eval_episodes=10,
        seed=1234,
        dtype="f64",
        gen=GenConfig(
            frames=3,
            size=8,
            half_min=1.0,
            half_max=1.6,
            margin=0.5,
            translate_min=2.0,
            translate_max=3.0,
            orbit_radius_min=1.0,
            orbit_radius_max=1.6,
            osc_amp_min=0.8,
            osc_amp_max=1.2,
            grow_min=1.4,
            grow_max=1.7,
            crop_size=7,
        ),
        model=ModelConfig(
            feat_dim=8,
            enc_channels=(8, 8, 8),
            attn_heads=2,
            ffn_mult=2,
            decoder_channels=(6, 4),
        ),
    )
    return cfg.validate()


def composite_error(h: float = 1e-5, progress: Callable[[str], None] | None = None) -> float:
    """Finite-difference error of the full episode loss over every parameter."""
    cfg = toy_config()
    model = build_model(cfg)
    split = split_from(cfg)
    layout = episode_layout(cfg)
    plan = plan_episode(split, "train", cfg.n_way, cfg.k_shot, cfg.q_queries,
                        derive_seed(cfg.seed, STREAM_TRAIN_PLAN, 0))
    clips = torch.from_numpy(episode_clips(plan, cfg, None)).to(torch.float64)
    layout["abs_labels"] = [plan.classes[i] for i in layout["clip_local_list"]]

    def loss_fn() -> torch.Tensor:
        total, _, _ = _episode_loss(model, cfg, clips, layout)
        return total

    model.zero_grad()
    loss_fn().backward()
    grads = {n: p.grad.detach().clone() for n, p in model.named_parameters()}
    worst = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.data.reshape(-1)
            gflat = grads[name].reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                hi = float(loss_fn())
                flat[i] = orig - h
                lo = float(loss_fn())
                flat[i] = orig
                fd = (hi - lo) / (2.0 * h)
                g = float(gflat[i])
                err = abs(g - fd) / max(1.0, abs(g))
                if err > worst:
                    worst = err
            if progress is not None:
                progress(f"composite: {name} done (worst {worst:.3e})")
    return worst


@dataclass
class GradcheckEntry:
    name: str
    max_rel_err: float


@dataclass
class GradcheckReport:
    entries: list[GradcheckEntry]
    threshold: float
    runtime_s: float

    @property
    def ok(self) -> bool:
        return all(e.max_rel_err <= self.threshold for e in self.entries)

    def lines(self) -> list[str]:
        out = []
        for e in self.entries:
            status = "ok" if e.max_rel_err <= self.threshold else "FAIL"
            out.append(f"{e.name:<24s} {e.max_rel_err:.3e}  {status}")
        out.append(f"threshold {self.threshold:.0e}   runtime {self.runtime_s:.1f}s   "
                   f"{'PASS' if self.ok else 'FAIL'}")
        return out


def run_gradcheck(h: float = 1e-5, threshold: float = DEFAULT_THRESHOLD,
                  include_composite: bool = True,
                  extra_cases: list[tuple[str, Callable, torch.Tensor]] | None = None,
                  progress: Callable[[str], None] | None = None) -> GradcheckReport:
    t0 = time.monotonic()
    entries = []
    for name, f, x in op_cases() + list(extra_cases or []):
        err = ops.finite_diff_check(f, x, h)
        entries.append(GradcheckEntry(name, err))
        if progress is not None:
            progress(f"{name}: {err:.3e}")
    if include_composite:
        entries.append(GradcheckEntry("episode_loss_composite", composite_error(h, progress)))
    return GradcheckReport(entries, threshold, time.monotonic() - t0)
