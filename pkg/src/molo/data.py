"""MotionShapes: procedural clips whose class is a motion pattern, plus the
episodic N-way K-shot sampler.

Every clip is a single anti-aliased shape (square / circle / triangle / cross,
random color, size and start position) executing one of 16 motion patterns on
a plain background.  Appearance factors are drawn independently of the class,
so motion is the only class signal.  Generation is a pure function of
(class, seed, config): re-rendering is bit-identical.

Three class pairs are exact temporal mirrors by construction: reversing the
frame order of a translate-L clip yields a translate-R clip (same for
grow/shrink and the two fade classes).  ``mirror_params`` builds the matched
twin explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import GenConfig

CLASS_NAMES = (
    "translate-L",
    "translate-R",
    "translate-U",
    "translate-D",
    "grow",
    "shrink",
    "rotate-CW",
    "rotate-CCW",
    "oscillate-H",
    "oscillate-V",
    "appear-then-vanish",
    "vanish-then-appear",
    "diag-UL",
    "diag-UR",
    "diag-DL",
    "diag-DR",
)
CLASS_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}
NUM_CLASSES = len(CLASS_NAMES)

# Time reversal maps each class onto its partner (oscillations are self-paired).
MIRROR_ID = {0: 1, 1: 0, 2: 3, 3: 2, 4: 5, 5: 4, 6: 7, 7: 6, 8: 8, 9: 9,
             10: 11, 11: 10, 12: 15, 13: 14, 14: 13, 15: 12}

SHAPES = ("square", "circle", "triangle", "cross")

_TRANSLATE_DIRS = {
    0: (-1.0, 0.0),
    1: (1.0, 0.0),
    2: (0.0, -1.0),
    3: (0.0, 1.0),
    12: (-0.70710678, -0.70710678),
    13: (0.70710678, -0.70710678),
    14: (-0.70710678, 0.70710678),
    15: (0.70710678, 0.70710678),
}


@dataclass
class ClipParams:
    """Fully-resolved per-frame render inputs; arrays are length T."""

    class_id: int
    shape: str
    color: np.ndarray  # (3,) f32
    bg: float
    centers: np.ndarray  # (T, 2) f32, (x, y) pixel coords
    halves: np.ndarray  # (T,) f32 half-extents
    alphas: np.ndarray  # (T,) f32 opacity


@dataclass
class VideoClip:
    frames: np.ndarray  # (T, 3, H, W) f32 in [0, 1]
    label: int
    seed: int


@dataclass(frozen=True)
class SplitSpec:
    train_classes: frozenset[int]
    test_classes: frozenset[int]

    def __post_init__(self):
        if self.train_classes & self.test_classes:
            raise ValueError("train/test class sets must be disjoint")
        if not (self.train_classes | self.test_classes) <= set(range(NUM_CLASSES)):
            raise ValueError("class ids out of range")

    def classes(self, which: str) -> tuple[int, ...]:
        if which == "train":
            return tuple(sorted(self.train_classes))
        if which == "test":
            return tuple(sorted(self.test_classes))
        raise ValueError(f"split must be 'train' or 'test', got {which!r}")


def default_split(train_classes=(2, 3, 4, 6, 9, 10, 12, 13, 14, 15),
                  test_classes=(0, 1, 5, 7, 8, 11)) -> SplitSpec:
    return SplitSpec(frozenset(train_classes), frozenset(test_classes))


def draw_params(class_id: int, rng: np.random.Generator, cfg: GenConfig) -> ClipParams:
    """Draw appearance and motion parameters for one clip.

    Appearance (shape, color, background, base size) is drawn identically for
    every class before any class-specific magnitude, so the shape-type
    distribution cannot depend on the class.  If the drawn motion cannot fit
    the canvas the magnitudes are re-drawn (bounded retries), then clamped.
    """
    if not 0 <= class_id < NUM_CLASSES:
        raise ValueError(f"class id {class_id} out of range [0, {NUM_CLASSES - 1}]")
    shape = SHAPES[int(rng.integers(0, len(SHAPES)))]
    color = rng.uniform(cfg.color_min, 1.0, size=3).astype(np.float32)
    bg = float(rng.uniform(cfg.bg_min, cfg.bg_max))
    ts = np.linspace(0.0, 1.0, cfg.frames, dtype=np.float64)

    for attempt in range(32):
        half0 = float(rng.uniform(cfg.half_min, cfg.half_max))
        halves = np.full(cfg.frames, half0)
        alphas = np.ones(cfg.frames)
        offsets = np.zeros((cfg.frames, 2))

        if class_id in _TRANSLATE_DIRS:
            dist = float(rng.uniform(cfg.translate_min, cfg.translate_max))
            dx, dy = _TRANSLATE_DIRS[class_id]
            offsets[:, 0] = dx * dist * ts
            offsets[:, 1] = dy * dist * ts
        elif class_id == 4:  # grow
            g = float(rng.uniform(cfg.grow_min, cfg.grow_max))
            halves = half0 * (1.0 + (g - 1.0) * ts)
        elif class_id == 5:  # shrink
            g = float(rng.uniform(cfg.grow_min, cfg.grow_max))
            halves = half0 * (1.0 + (g - 1.0) * (1.0 - ts))
        elif class_id in (6, 7):  # orbit around a pivot, CW / CCW on screen
            radius = float(rng.uniform(cfg.orbit_radius_min, cfg.orbit_radius_max))
            turns = float(rng.uniform(cfg.orbit_turns_min, cfg.orbit_turns_max))
            theta0 = float(rng.uniform(0.0, 2.0 * np.pi))
            sign = 1.0 if class_id == 6 else -1.0
            theta = theta0 + sign * 2.0 * np.pi * turns * ts
            offsets[:, 0] = radius * np.cos(theta)
            offsets[:, 1] = radius * np.sin(theta)
        elif class_id in (8, 9):  # oscillate H / V
            amp = float(rng.uniform(cfg.osc_amp_min, cfg.osc_amp_max))
            cycles = float(rng.uniform(cfg.osc_cycles_min, cfg.osc_cycles_max))
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            wave = amp * np.sin(2.0 * np.pi * cycles * ts + phase) - amp * np.sin(phase)
            offsets[:, 0 if class_id == 8 else 1] = wave
        elif class_id in (10, 11):  # monotone fade in / fade out
            gamma = float(rng.uniform(cfg.fade_gamma_min, cfg.fade_gamma_max))
            alphas = np.power(ts if class_id == 10 else 1.0 - ts, gamma)
        else:  # pragma: no cover
            raise AssertionError(class_id)

        clearance = halves + cfg.margin
        lo = np.max(clearance[:, None] - offsets, axis=0)
        hi = np.min(cfg.size - clearance[:, None] - offsets, axis=0)
        if np.all(lo <= hi):
            anchor = np.array([rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1])])
            centers = anchor[None, :] + offsets
            break
    else:
        # Last resort: centre the anchor and clamp the trajectory in-canvas.
        centers = cfg.size / 2.0 + offsets
        bound = np.stack([clearance, clearance], axis=1)
        centers = np.clip(centers, bound, cfg.size - bound)

    return ClipParams(
        class_id=class_id,
        shape=shape,
        color=color,
        bg=bg,
        centers=centers.astype(np.float32),
        halves=halves.astype(np.float32),
        alphas=alphas.astype(np.float32),
    )


def mirror_params(params: ClipParams) -> ClipParams:
    """Time-reversed twin: reversed per-frame arrays, mirror class label."""
    return ClipParams(
        class_id=MIRROR_ID[params.class_id],
        shape=params.shape,
        color=params.color,
        bg=params.bg,
        centers=params.centers[::-1].copy(),
        halves=params.halves[::-1].copy(),
        alphas=params.alphas[::-1].copy(),
    )


_GRIDS: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    if size not in _GRIDS:
        coords = np.arange(size, dtype=np.float32) + 0.5
        _GRIDS[size] = (coords[None, None, :], coords[None, :, None])  # x over W, y over H
    return _GRIDS[size]


def _box_sdf(dx: np.ndarray, dy: np.ndarray, wx, wy) -> np.ndarray:
    return np.maximum(np.abs(dx) - wx, np.abs(dy) - wy)


def _shape_sdf(shape: str, dx: np.ndarray, dy: np.ndarray, half: np.ndarray) -> np.ndarray:
    if shape == "square":
        return _box_sdf(dx, dy, half, half)
    if shape == "circle":
        return np.sqrt(dx * dx + dy * dy) - half
    if shape == "cross":
        arm = 0.36 * half
        return np.minimum(_box_sdf(dx, dy, half, arm), _box_sdf(dx, dy, arm, half))
    if shape == "triangle":
        # Point-up equilateral triangle via three half-plane distances.
        r = 1.25 * half
        angles = (-np.pi / 2.0, np.pi / 6.0, 5.0 * np.pi / 6.0)
        vx = [r * np.cos(a) for a in angles]
        vy = [r * np.sin(a) for a in angles]
        sdf = None
        for k in range(3):
            ax, ay = vx[k], vy[k]
            bx, by = vx[(k + 1) % 3], vy[(k + 1) % 3]
            ex, ey = bx - ax, by - ay
            inv_len = 1.0 / np.sqrt(ex * ex + ey * ey)
            d = ((dx - ax) * ey - (dy - ay) * ex) * inv_len
            sdf = d if sdf is None else np.maximum(sdf, d)
        return sdf
    raise ValueError(f"unknown shape {shape!r}")


def render_params(params: ClipParams, cfg: GenConfig) -> np.ndarray:
    """Render (T, 3, H, W) float32 frames with a 1-pixel soft edge."""
    xs, ys = _grid(cfg.size)
    cx = params.centers[:, 0][:, None, None]
    cy = params.centers[:, 1][:, None, None]
    half = params.halves[:, None, None]
    sdf = _shape_sdf(params.shape, xs - cx, ys - cy, half)
    coverage = np.clip(0.5 - sdf, 0.0, 1.0)
    weight = coverage * params.alphas[:, None, None]
    frames = params.bg + weight[:, None, :, :] * (
        params.color[None, :, None, None] - params.bg
    )
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def generate_clip(class_id: int, seed: int, cfg: GenConfig) -> VideoClip:
    """Deterministic clip for (class, seed, config)."""
    rng = np.random.default_rng(seed)
    params = draw_params(class_id, rng, cfg)
    return VideoClip(frames=render_params(params, cfg), label=class_id, seed=seed)


# ---------------------------------------------------------------------------
# Episodes


@dataclass
class EpisodePlan:
    """Classes and clip seeds for one episode, before any rendering."""

    classes: tuple[int, ...]  # N episode classes (absolute ids)
    support_seeds: np.ndarray  # (N, K)
    query_seeds: np.ndarray  # (N, Q)

    @property
    def way_labels(self) -> dict[int, int]:
        return {i: c for i, c in enumerate(self.classes)}


@dataclass
class Episode:
    support: list[list[VideoClip]]  # N x K
    query: list[list[VideoClip]]  # N x Q
    way_labels: dict[int, int]


def plan_episode(split: SplitSpec, which: str, n_way: int, k_shot: int,
                 q_queries: int, rng_seed: int) -> EpisodePlan:
    pool = split.classes(which)
    if n_way > len(pool):
        raise ValueError(f"n_way={n_way} exceeds the {len(pool)} classes in the {which} split")
    rng = np.random.default_rng(rng_seed)
    classes = tuple(int(c) for c in rng.choice(pool, size=n_way, replace=False))
    per_class = k_shot + q_queries
    while True:
        seeds = rng.integers(0, 2**62, size=(n_way, per_class), dtype=np.int64)
        if len(set(seeds.ravel().tolist())) == seeds.size:
            break
    return EpisodePlan(
        classes=classes,
        support_seeds=seeds[:, :k_shot].copy(),
        query_seeds=seeds[:, k_shot:].copy(),
    )


def realize_episode(plan: EpisodePlan, cfg: GenConfig) -> Episode:
    support = [
        [generate_clip(c, int(s), cfg) for s in plan.support_seeds[i]]
        for i, c in enumerate(plan.classes)
    ]
    query = [
        [generate_clip(c, int(s), cfg) for s in plan.query_seeds[i]]
        for i, c in enumerate(plan.classes)
    ]
    return Episode(support=support, query=query, way_labels=plan.way_labels)


def sample_episode(split: SplitSpec, which: str, n_way: int, k_shot: int,
                   q_queries: int, rng_seed: int, cfg: GenConfig) -> Episode:
    return realize_episode(
        plan_episode(split, which, n_way, k_shot, q_queries, rng_seed), cfg
    )


# ---------------------------------------------------------------------------
# Train-time augmentation (crop + resize + brightness/contrast, per clip)


def _bilinear_resize(frames: np.ndarray, out_size: int) -> np.ndarray:
    """(T, 3, h, w) -> (T, 3, out, out), separable bilinear."""
    def axis_coords(in_size):
        s = (np.arange(out_size, dtype=np.float32) + 0.5) * in_size / out_size - 0.5
        i0 = np.clip(np.floor(s).astype(np.int64), 0, in_size - 1)
        i1 = np.minimum(i0 + 1, in_size - 1)
        w = np.clip(s - i0, 0.0, 1.0).astype(np.float32)
        return i0, i1, w

    h, w = frames.shape[-2:]
    r0, r1, rw = axis_coords(h)
    tmp = frames[..., r0, :] * (1.0 - rw)[:, None] + frames[..., r1, :] * rw[:, None]
    c0, c1, cw = axis_coords(w)
    return tmp[..., c0] * (1.0 - cw) + tmp[..., c1] * cw


def augment_clip(frames: np.ndarray, rng: np.random.Generator, cfg: GenConfig) -> np.ndarray:
    """Random crop (resized back) and brightness/contrast jitter, one draw per clip."""
    return augment_batch(frames[None], rng, cfg)[0]


def augment_batch(clips: np.ndarray, rng: np.random.Generator, cfg: GenConfig) -> np.ndarray:
    """Augment (V, T, 3, H, W) clips; crop window and jitter are per clip."""
    v = clips.shape[0]
    crop = cfg.crop_size
    max_off = cfg.size - crop
    offs = rng.integers(0, max_off + 1, size=(v, 2))
    cropped = np.empty(clips.shape[:3] + (crop, crop), dtype=np.float32)
    for i in range(v):
        oy, ox = int(offs[i, 0]), int(offs[i, 1])
        cropped[i] = clips[i, :, :, oy:oy + crop, ox:ox + crop]
    out = _bilinear_resize(cropped, cfg.size)
    contrast = (1.0 + rng.uniform(-cfg.jitter, cfg.jitter, size=v)).astype(np.float32)
    brightness = rng.uniform(-cfg.jitter, cfg.jitter, size=v).astype(np.float32)
    shape = (v, 1, 1, 1, 1)
    m = out.mean(axis=(1, 2, 3, 4), dtype=np.float32).reshape(shape)
    out = (out - m) * contrast.reshape(shape) + m + brightness.reshape(shape)
    return np.clip(out, 0.0, 1.0, out=out)


# ---------------------------------------------------------------------------
# Inspection dumps for the gen-data command


def save_png_strip(clip: VideoClip, path: str | Path) -> None:
    """All frames side by side as one PNG (H x T*W)."""
    from PIL import Image

    t, _, h, w = clip.frames.shape
    strip = clip.frames.transpose(2, 0, 3, 1).reshape(h, t * w, 3)
    Image.fromarray((strip * 255.0 + 0.5).astype(np.uint8)).save(str(path))


def save_blob(clip: VideoClip, path: str | Path) -> None:
    """Raw little-endian f32 frames plus a JSON sidecar describing them."""
    path = Path(path)
    clip.frames.astype("<f4").tofile(path)
    sidecar = {
        "shape": list(clip.frames.shape),
        "label": clip.label,
        "class_name": CLASS_NAMES[clip.label],
        "seed": clip.seed,
        "dtype": "<f4",
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
