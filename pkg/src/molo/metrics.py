"""Frame-level sequence metrics between support and query clips.

Both metrics consume a pairwise frame-distance matrix d[i][j] = 1 - cosine
similarity and return a scalar distance; both are differentiable.

* ``bi_mhm`` -- bidirectional mean Hausdorff: mean over query frames of the
  nearest support-frame distance, plus the same in the other direction.
  Order-insensitive by construction (mins and means are symmetric).
* ``otam`` -- soft ordered temporal alignment.  The support axis is padded
  with a zero column on each side so the alignment may enter and leave the
  padding freely, and a soft-min dynamic program accumulates cost over
  monotone paths: a cell extends diagonally or vertically from the previous
  query frame anywhere, and horizontally only along the first query row and
  where a padding column is involved.  The two directions are averaged.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .tensorops import softmin2, softmin3


def pairwise_distances(q: torch.Tensor, s: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """1 - cosine similarity for every (query frame, support frame) pair.

    Accepts (..., L, C) batches.  Rows with norm below 1e-12 are rejected;
    norms are floored at ``eps`` for the division.
    """
    if q.shape[-1] != s.shape[-1]:
        raise ValueError(f"feature dims differ: {tuple(q.shape)} vs {tuple(s.shape)}")
    qn = torch.linalg.vector_norm(q, dim=-1, keepdim=True)
    sn = torch.linalg.vector_norm(s, dim=-1, keepdim=True)
    if (qn < 1e-12).any() or (sn < 1e-12).any():
        raise ValueError("pairwise_distances: zero-norm feature row")
    qh = q / qn.clamp_min(eps)
    sh = s / sn.clamp_min(eps)
    return 1.0 - qh @ sh.transpose(-1, -2)


def bi_mhm(d: torch.Tensor) -> torch.Tensor:
    """Mean of row minima plus mean of column minima; batched over (..., Lq, Ls)."""
    if d.shape[-1] == 0 or d.shape[-2] == 0:
        raise ValueError("bi_mhm: empty distance matrix")
    rows = d.min(dim=-1).values.mean(dim=-1)
    cols = d.min(dim=-2).values.mean(dim=-1)
    return rows + cols


def _otam_dir(d: torch.Tensor, gamma: float) -> torch.Tensor:
    """Soft minimum path cost from the top-left to the bottom-right of the
    boundary-padded matrix; batched over leading dims of (..., Lq, Ls)."""
    lq = d.shape[-2]
    padded = F.pad(d, (1, 1))  # zero column on each side of the support axis
    width = padded.shape[-1]
    # First query row: only horizontal chaining is possible.
    row = torch.cumsum(padded[..., 0, :], dim=-1)
    zeros = torch.zeros_like(row[..., 0])
    for i in range(1, lq):
        cost = padded[..., i, :]
        mid = cost[..., 1:-1] + softmin2(row[..., :-2], row[..., 1:-1], gamma)
        # Left boundary column admits a horizontal step out of the padding,
        # whose cumulative cost is exactly zero.
        first = cost[..., 1] + softmin3(row[..., 0], row[..., 1], zeros, gamma)
        last = softmin3(row[..., -2], row[..., -1], mid[..., -1], gamma)
        row = torch.cat(
            [
                zeros[..., None],
                first[..., None],
                mid[..., 1:],
                last[..., None],
            ],
            dim=-1,
        )
        assert row.shape[-1] == width
    return row[..., -1]


def otam(d: torch.Tensor, gamma: float = 0.1) -> torch.Tensor:
    """Symmetrized soft alignment cost: (dp(d) + dp(d^T)) / 2."""
    if gamma <= 0:
        raise ValueError(f"otam: gamma must be > 0, got {gamma}")
    if d.shape[-1] == 0 or d.shape[-2] == 0:
        raise ValueError("otam: empty distance matrix")
    return 0.5 * (_otam_dir(d, gamma) + _otam_dir(d.transpose(-1, -2), gamma))


def sequence_distance(q: torch.Tensor, s: torch.Tensor, kind: str,
                      gamma: float = 0.1) -> torch.Tensor:
    """Metric between frame-feature sequences (..., L, C); batched."""
    d = pairwise_distances(q, s)
    if kind == "bimhm":
        return bi_mhm(d)
    if kind == "otam":
        return otam(d, gamma)
    raise ValueError(f"unknown metric kind {kind!r}")
