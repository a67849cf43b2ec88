"""Ablation matrix runner: train + evaluate every combination of the
requested component flags with a shared seed, and tabulate 1-shot / 5-shot
accuracy per row.
"""

from __future__ import annotations

import copy
import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

from .config import ABLATION_FLAGS, CONTRAST_SCOPES, TOKEN_MODES, RunConfig
from .evaluate import EvalReport, evaluate
from .train import train

_AXIS_VALUES = {
    "use_contrastive": (False, True),
    "use_autodecoder": (False, True),
    "use_base_head": (False, True),
    "use_motion_head": (False, True),
    "contrast_scope": CONTRAST_SCOPES,
    "token_mode": TOKEN_MODES,
}


@dataclass
class AblationRow:
    settings: dict
    acc_1shot: float
    ci_1shot: float
    acc_5shot: float
    ci_5shot: float


def _eval_at_k(model, cfg: RunConfig, k_shot: int) -> EvalReport:
    eval_cfg = copy.deepcopy(cfg)
    eval_cfg.k_shot = k_shot
    return evaluate(model, eval_cfg)


def ablate(base_cfg: RunConfig, axes: list[str], out_csv: str | Path | None = None,
           quiet: bool = False) -> list[AblationRow]:
    for axis in axes:
        if axis not in ABLATION_FLAGS:
            raise ValueError(f"unknown ablation axis {axis!r}; choose from {ABLATION_FLAGS}")
    grids = [_AXIS_VALUES[a] for a in axes]
    rows: list[AblationRow] = []
    for combo in itertools.product(*grids):
        settings = dict(zip(axes, combo))
        cfg = copy.deepcopy(base_cfg)
        for key, value in settings.items():
            setattr(cfg, key, value)
        if not (cfg.use_base_head or cfg.use_motion_head):
            print(f"[ablate] skipping {settings}: both heads disabled")
            continue
        try:
            cfg.validate()
        except ValueError as err:
            print(f"[ablate] skipping {settings}: {err}")
            continue
        if not quiet:
            print(f"[ablate] training {settings}")
        result = train(cfg, out_dir=None, quiet=quiet)
        rep1 = _eval_at_k(result.model, cfg, 1)
        rep5 = _eval_at_k(result.model, cfg, 5)
        rows.append(AblationRow(settings, rep1.accuracy, rep1.ci95,
                                rep5.accuracy, rep5.ci95))
        if not quiet:
            print(f"[ablate]   1-shot {rep1.accuracy:.3f} +/- {rep1.ci95:.3f}   "
                  f"5-shot {rep5.accuracy:.3f} +/- {rep5.ci95:.3f}")

    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*axes, "acc_1shot", "ci_1shot", "acc_5shot", "ci_5shot"])
            for row in rows:
                writer.writerow(
                    [*(row.settings[a] for a in axes),
                     f"{row.acc_1shot:.4f}", f"{row.ci_1shot:.4f}",
                     f"{row.acc_5shot:.4f}", f"{row.ci_5shot:.4f}"]
                )
    return rows
