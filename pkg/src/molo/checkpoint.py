"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   b"MOLO"
    u32     format version (1)
    u32     tensor count
    per tensor, sorted by name:
        u32     name length, then UTF-8 name
        u8      dtype tag (0 = f32, 1 = f64)
        u8      rank
        u32[r]  dims
        raw little-endian scalar payload
    trailing UTF-8 JSON blob: the run config

Saving is canonical (sorted names, sorted JSON keys) so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from .config import RunConfig

MAGIC = b"MOLO"
VERSION = 1
_DTYPE_TAGS = {torch.float32: 0, torch.float64: 1}
_TAG_DTYPES = {0: ("<f4", torch.float32), 1: ("<f8", torch.float64)}


def save_checkpoint(path: str | Path, tensors: dict[str, torch.Tensor],
                    cfg: RunConfig) -> Path:
    path = Path(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(tensors))
    for name in sorted(tensors):
        t = tensors[name].detach().contiguous()
        if t.dtype not in _DTYPE_TAGS:
            raise ValueError(f"checkpoint: unsupported dtype {t.dtype} for {name!r}")
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb)) + nb
        blob += struct.pack("<BB", _DTYPE_TAGS[t.dtype], t.dim())
        blob += struct.pack(f"<{t.dim()}I", *t.shape)
        code = "<f4" if t.dtype == torch.float32 else "<f8"
        blob += t.cpu().numpy().astype(code, copy=False).tobytes()
    blob += config_mod.to_json(cfg).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(blob))
    return path


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], RunConfig]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    tensors: dict[str, torch.Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        tag, rank = struct.unpack_from("<BB", raw, off)
        off += 2
        dims = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        if tag not in _TAG_DTYPES:
            raise CheckpointError(f"{path}: unknown dtype tag {tag} for {name!r}")
        np_code, th_dtype = _TAG_DTYPES[tag]
        numel = 1
        for d in dims:
            numel *= d
        nbytes = numel * (4 if tag == 0 else 8)
        arr = np.frombuffer(raw, dtype=np_code, count=numel, offset=off).copy()
        off += nbytes
        tensors[name] = torch.from_numpy(arr).reshape(dims).to(th_dtype)
    cfg = config_mod.from_json(raw[off:].decode("utf-8"))
    return tensors, cfg


def validate_names(tensors: dict[str, torch.Tensor], expected: set[str],
                   context: str) -> None:
    missing = sorted(expected - set(tensors))
    if missing:
        raise CheckpointError(f"checkpoint missing tensors for {context}: {missing}")
