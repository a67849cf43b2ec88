"""Training objectives: long-short contrastive terms, episode cross-entropy,
the auxiliary semantic classifier, and head-distance fusion.

The long-short contrastive loss ties a clip's global token to the per-frame
features of same-class clips.  With sim(a, b) = exp(cos(a, b) / tau) it is a
two-term noise-contrastive ratio:

  term A: anchor token against positive frames, versus negative frames;
  term B: anchor frames against each positive token, versus negative frames
          scored against those same tokens.

With one positive and all similarities equal, each term reduces to
log(1 + #negatives).  Anchors are query clips; in 'cross' scope the positives
are every same-class clip in the episode, in 'within' scope only the anchor
itself (negatives are other-class clips in both scopes).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .heads import HeadOutput


@dataclass
class LossBreakdown:
    ce: float
    lg_base: float
    lg_motion: float
    recons: float
    aux: float
    total: float

    def recombine(self, lambda_contrast: float, lambda_recon: float,
                  lambda_aux: float) -> float:
        return (self.ce + lambda_contrast * (self.lg_base + self.lg_motion)
                + lambda_recon * self.recons + lambda_aux * self.aux)


def _unit(x: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    return x / torch.linalg.vector_norm(x, dim=-1, keepdim=True).clamp_min(eps)


def _nce_pair_terms(a_pos, a_neg, b_pos, b_neg) -> torch.Tensor:
    return -torch.log(a_pos / (a_pos + a_neg)) - torch.log(b_pos / (b_pos + b_neg))


def long_short_contrastive(
    query: HeadOutput,
    positives: list[HeadOutput],
    negatives: list[HeadOutput],
    temperature: float = 0.07,
) -> torch.Tensor:
    """Two-term contrastive loss for a single anchor clip.

    ``query`` must carry unbatched (C,) token and (L, C) frame features, as do
    all positives and negatives.
    """
    if not positives or not negatives:
        raise ValueError("long_short_contrastive: need at least one positive and one negative")
    if temperature <= 0:
        raise ValueError("long_short_contrastive: temperature must be > 0")
    if query.token is None or any(p.token is None for p in positives):
        raise ValueError("long_short_contrastive: head outputs carry no global feature")
    q_tok = _unit(query.token)
    q_frames = _unit(query.frames)
    pos_toks = _unit(torch.stack([p.token for p in positives]))  # (P, C)
    pos_frames = _unit(torch.stack([p.frames for p in positives]))  # (P, L, C)
    neg_frames = _unit(torch.stack([n.frames for n in negatives]))  # (G, L, C)

    inv_t = 1.0 / temperature
    a_pos = torch.exp(torch.einsum("c,plc->pl", q_tok, pos_frames) * inv_t).sum()
    a_neg = torch.exp(torch.einsum("c,glc->gl", q_tok, neg_frames) * inv_t).sum()
    b_pos = torch.exp(torch.einsum("lc,pc->pl", q_frames, pos_toks) * inv_t).sum()
    b_neg = torch.exp(torch.einsum("glc,pc->pgl", neg_frames, pos_toks) * inv_t).sum()
    return _nce_pair_terms(a_pos, a_neg, b_pos, b_neg)


def within_video_variant(
    query: HeadOutput, negatives: list[HeadOutput], temperature: float = 0.07
) -> torch.Tensor:
    """Ablation arm: the only positive is the anchor clip itself."""
    return long_short_contrastive(query, [query], negatives, temperature)


def episode_contrastive(
    tokens: torch.Tensor,  # (V, C)
    frames: torch.Tensor,  # (V, L, C)
    clip_class: torch.Tensor,  # (V,) episode-local class index
    anchor_idx: torch.Tensor,  # (A,) indices of anchor clips
    scope: str = "cross",
    temperature: float = 0.07,
) -> torch.Tensor:
    """Mean contrastive loss over anchors, vectorized across the episode."""
    if scope not in ("cross", "within"):
        raise ValueError(f"unknown contrast scope {scope!r}")
    tok = _unit(tokens)
    frm = _unit(frames)
    inv_t = 1.0 / temperature
    # sims[v, u] = sum_i exp(cos(token_v, frame_u_i) / tau)
    cos = torch.einsum("vc,ulc->vul", tok, frm)
    sims = torch.exp(cos * inv_t).sum(dim=-1)  # (V, V)

    same = clip_class[anchor_idx, None] == clip_class[None, :]  # (A, V)
    neg_mask = (~same).to(sims.dtype)
    if scope == "cross":
        pos_mask = same.clone()
        pos_mask[torch.arange(anchor_idx.numel()), anchor_idx] = False
        pos_mask = pos_mask.to(sims.dtype)
    else:
        pos_mask = torch.zeros_like(neg_mask)
        pos_mask[torch.arange(anchor_idx.numel()), anchor_idx] = 1.0

    s_anchor = sims[anchor_idx]  # (A, V): anchor token vs every clip's frames
    a_pos = (s_anchor * pos_mask).sum(dim=1)
    a_neg = (s_anchor * neg_mask).sum(dim=1)
    s_to_anchor = sims[:, anchor_idx].T  # (A, V): each clip's token vs anchor frames
    b_pos = (s_to_anchor * pos_mask).sum(dim=1)
    # For every positive token, score all negatives against it.
    b_neg = (pos_mask * (neg_mask @ sims.T)).sum(dim=1)
    return _nce_pair_terms(a_pos, a_neg, b_pos, b_neg).mean()


def fused_distance(d_base, d_motion, alpha: float):
    """Weighted sum of the two head distances."""
    return d_base + alpha * d_motion


def episode_ce(distances: torch.Tensor, true_class: torch.Tensor) -> torch.Tensor:
    """Softmax cross-entropy with logits = -distances, averaged over queries.

    ``distances`` is (num_queries, n_way); ``true_class`` holds local indices.
    """
    n_way = distances.shape[-1]
    if n_way < 2:
        raise ValueError("episode_ce: need at least 2 classes")
    if true_class.min() < 0 or true_class.max() >= n_way:
        raise IndexError(f"episode_ce: class index out of range [0, {n_way - 1}]")
    return F.cross_entropy(-distances, true_class)


class AuxClassifier(nn.Module):
    """Linear classifier over global features against absolute train-class ids.

    Training-time stabilizer only; refuses labels outside the train split so
    test classes can never leak into its targets.
    """

    def __init__(self, dim: int, train_class_ids: tuple[int, ...]):
        super().__init__()
        self.train_class_ids = tuple(int(c) for c in train_class_ids)
        self._index = {c: i for i, c in enumerate(self.train_class_ids)}
        self.linear = nn.Linear(dim, len(self.train_class_ids))

    def forward(self, feats: torch.Tensor, labels: list[int] | torch.Tensor) -> torch.Tensor:
        if torch.is_tensor(labels):
            labels = labels.tolist()
        unknown = [c for c in labels if c not in self._index]
        if unknown:
            raise ValueError(f"aux classifier got non-train labels {sorted(set(unknown))}")
        target = torch.tensor([self._index[c] for c in labels], device=feats.device)
        return F.cross_entropy(self.linear(feats), target)
