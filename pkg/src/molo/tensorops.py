"""Dense tensor op suite with strict shape contracts, plus a finite-difference
gradient oracle.

Tensors are torch tensors; reverse-mode differentiation is torch autograd
(nodes are recorded in construction order and visited once, in reverse, by
``backward``).  The wrappers here add the contracts the rest of the package
relies on: elementwise ops require exactly matching shapes (the only permitted
broadcast is scalar-vs-tensor), errors name the op and both shapes, and an
optional debug mode rejects non-finite outputs.  ``finite_diff_check`` is the
independent oracle: it never consults autograd internals beyond reading the
final gradient.
"""

from __future__ import annotations

import math
from typing import Callable

import torch
import torch.nn.functional as F

_CHECK_FINITE = False


def enable_debug_checks(on: bool = True) -> None:
    """Toggle per-op finiteness checks (slow; off by default)."""
    global _CHECK_FINITE
    _CHECK_FINITE = on


def _finite_guard(name: str, out: torch.Tensor) -> torch.Tensor:
    if _CHECK_FINITE and not torch.isfinite(out).all():
        raise FloatingPointError(f"{name}: non-finite value produced")
    return out


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float)) or (torch.is_tensor(x) and x.dim() == 0)


def _check_same_shape(name: str, a: torch.Tensor, b) -> None:
    if _is_scalar(a) or _is_scalar(b):
        return
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{name}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def add(a, b):
    _check_same_shape("add", a, b)
    return _finite_guard("add", a + b)


def sub(a, b):
    _check_same_shape("sub", a, b)
    return _finite_guard("sub", a - b)


def mul(a, b):
    _check_same_shape("mul", a, b)
    return _finite_guard("mul", a * b)


def scalar_mul(a: torch.Tensor, s) -> torch.Tensor:
    if not _is_scalar(s):
        raise ValueError(f"scalar_mul: scale must be a scalar, got shape {tuple(s.shape)}")
    return _finite_guard("scalar_mul", a * s)


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape[-1] != b.shape[-2 if b.dim() > 1 else -1]:
        raise ValueError(f"matmul: inner dims differ {tuple(a.shape)} vs {tuple(b.shape)}")
    return _finite_guard("matmul", a @ b)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2D convolution, NCHW, zero padding."""
    if x.shape[-3] != weight.shape[1]:
        raise ValueError(
            f"conv2d: input channels {tuple(x.shape)} do not match weight {tuple(weight.shape)}"
        )
    return _finite_guard("conv2d", F.conv2d(x, weight, bias, stride=stride, padding=padding))


def conv3d(x, weight, bias=None, stride=1, padding=0):
    """3D convolution, NCDHW; padding is zero-fill (see ``replicate_pad_time``)."""
    if x.shape[-4] != weight.shape[1]:
        raise ValueError(
            f"conv3d: input channels {tuple(x.shape)} do not match weight {tuple(weight.shape)}"
        )
    return _finite_guard("conv3d", F.conv3d(x, weight, bias, stride=stride, padding=padding))


def replicate_pad_time(x: torch.Tensor, pad: int) -> torch.Tensor:
    """Replicate-pad the depth (time) axis of an NCDHW tensor."""
    return F.pad(x, (0, 0, 0, 0, pad, pad), mode="replicate")


def relu(x):
    return F.relu(x)


def gelu(x):
    return F.gelu(x)


def softmax(x: torch.Tensor, axis: int) -> torch.Tensor:
    return _finite_guard("softmax", F.softmax(x, dim=axis))


def layer_norm(x: torch.Tensor, axis: int, weight=None, bias=None, eps: float = 1e-5):
    """Normalize to zero mean / unit variance along ``axis``, then affine."""
    if axis in (-1, x.dim() - 1):
        return _finite_guard("layer_norm", F.layer_norm(x, (x.shape[-1],), weight, bias, eps))
    moved = x.movedim(axis, -1)
    out = F.layer_norm(moved, (moved.shape[-1],), weight, bias, eps)
    return _finite_guard("layer_norm", out.movedim(-1, axis))


def mean(x: torch.Tensor, axis=None):
    return x.mean() if axis is None else x.mean(dim=axis)


def reduce_sum(x: torch.Tensor, axis=None):
    return x.sum() if axis is None else x.sum(dim=axis)


def global_avg_pool(x: torch.Tensor) -> torch.Tensor:
    """Average over the two trailing spatial axes: (..., C, H, W) -> (..., C)."""
    if x.dim() < 3:
        raise ValueError(f"global_avg_pool: need (..., C, H, W), got {tuple(x.shape)}")
    return x.mean(dim=(-2, -1))


def upsample_nearest2x(x: torch.Tensor) -> torch.Tensor:
    if x.dim() != 4:
        raise ValueError(f"upsample_nearest2x: need NCHW, got {tuple(x.shape)}")
    return F.interpolate(x, scale_factor=2.0, mode="nearest")


def concat(tensors, axis: int) -> torch.Tensor:
    return torch.cat(list(tensors), dim=axis)


def transpose(x: torch.Tensor, a: int, b: int) -> torch.Tensor:
    return x.transpose(a, b)


def exp(x):
    return _finite_guard("exp", torch.exp(x))


def log(x):
    return _finite_guard("log", torch.log(x))


def cosine_similarity(a: torch.Tensor, b: torch.Tensor, axis: int = -1, eps: float = 1e-8):
    _check_same_shape("cosine_similarity", a, b)
    return F.cosine_similarity(a, b, dim=axis, eps=eps)


def l2_norm(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    return torch.linalg.vector_norm(x, dim=axis)


def backward(loss: torch.Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Gradients accumulate into ``.grad`` of every leaf that requires grad;
    repeated calls without zeroing accumulate by design.
    """
    if not torch.is_tensor(loss) or loss.dim() != 0:
        raise ValueError("backward: loss must be a scalar tensor")
    if loss.grad_fn is None:
        raise RuntimeError("backward: loss is detached from any recorded graph")
    loss.backward()


def finite_diff_check(
    f: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, h: float = 1e-5
) -> float:
    """Max relative error between the autograd gradient of ``f`` at ``x`` and
    central finite differences with step ``h``.

    ``f`` must be deterministic and scalar-valued; ``x`` is promoted to f64.
    Relative error is |analytic - fd| / max(1, |analytic|), elementwise.
    """
    x = x.detach().to(torch.float64).clone().requires_grad_(True)
    out = f(x)
    if out.dim() != 0:
        raise ValueError("finite_diff_check: f must return a scalar")
    out.backward()
    grad = x.grad.detach().reshape(-1)
    flat = x.detach().reshape(-1)
    worst = 0.0
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            hi = float(f(x))
            flat[i] = orig - h
            lo = float(f(x))
            flat[i] = orig
            fd = (hi - lo) / (2.0 * h)
            g = float(grad[i])
            err = abs(g - fd) / max(1.0, abs(g))
            if err > worst:
                worst = err
    return worst


def torch_dtype(name: str) -> torch.dtype:
    if name == "f32":
        return torch.float32
    if name == "f64":
        return torch.float64
    raise ValueError(f"unknown dtype {name!r}")


def softmin3(a: torch.Tensor, b: torch.Tensor, c: torch.Tensor, gamma: float) -> torch.Tensor:
    """Smoothed elementwise min of three tensors: -g * log(sum exp(-x/g))."""
    stacked = torch.stack((a, b, c), dim=0)
    return -gamma * torch.logsumexp(-stacked / gamma, dim=0)


def softmin2(a: torch.Tensor, b: torch.Tensor, gamma: float) -> torch.Tensor:
    stacked = torch.stack((a, b), dim=0)
    return -gamma * torch.logsumexp(-stacked / gamma, dim=0)


def gelu_exact(x: float) -> float:
    """Scalar reference gelu (erf form); used by oracles, not by models."""
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))
