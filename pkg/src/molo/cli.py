"""Command line entry points: train, eval, ablate, gradcheck, gen-data."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod
from .config import RunConfig


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run config (defaults used otherwise)")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--episodes", type=int, help="override the episode count for this command")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override any config field (dotted paths ok)")


def _load_config(args) -> RunConfig:
    cfg = config_mod.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    for spec in args.overrides:
        config_mod.apply_override(cfg, spec)
    return cfg.validate()


def _cmd_train(args) -> int:
    from .train import train

    cfg = _load_config(args)
    if args.episodes is not None:
        cfg.train_episodes = args.episodes
    out = args.out or Path("runs/train")
    result = train(cfg, out_dir=out, quiet=False)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics:    {result.metrics_path}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluate import evaluate_checkpoint

    report = evaluate_checkpoint(args.ckpt, episodes=args.episodes,
                                 overrides=args.overrides)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    print(json.dumps(report.to_dict(), indent=2))
    print(f"report: {out / 'report.json'}")
    return 0


def _cmd_ablate(args) -> int:
    from .ablate import ablate

    cfg = _load_config(args)
    if args.episodes is not None:
        cfg.train_episodes = args.episodes
    axes = [a.strip() for a in args.axes.split(",") if a.strip()]
    out = args.out or Path("runs/ablate")
    out.mkdir(parents=True, exist_ok=True)
    ablate(cfg, axes, out_csv=out / "ablation.csv")
    print(f"table: {out / 'ablation.csv'}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    report = run_gradcheck(progress=lambda line: print(f"  {line}", flush=True))
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def _cmd_gen_data(args) -> int:
    from .data import CLASS_IDS, CLASS_NAMES, generate_clip, save_blob, save_png_strip

    cfg = _load_config(args)
    out = args.out or Path("clips")
    out.mkdir(parents=True, exist_ok=True)
    if args.classes:
        wanted = []
        for token in args.classes.split(","):
            token = token.strip()
            wanted.append(CLASS_IDS[token] if token in CLASS_IDS else int(token))
    else:
        wanted = list(range(len(CLASS_NAMES)))
    seed = cfg.seed
    for cls in wanted:
        for i in range(args.count):
            clip = generate_clip(cls, seed + i, cfg.gen)
            stem = f"{CLASS_NAMES[cls]}_{seed + i}"
            if args.format == "png":
                save_png_strip(clip, out / f"{stem}.png")
            else:
                save_blob(clip, out / f"{stem}.f32")
    print(f"wrote {len(wanted) * args.count} clips to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molo",
        description="Few-shot video matching on synthetic MotionShapes data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model episodically")
    _add_common(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on test episodes")
    p.add_argument("--ckpt", type=Path, required=True, help="path to model.molo")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="train/eval a grid of component flags")
    _add_common(p)
    p.add_argument("--axes", default="use_contrastive,use_autodecoder",
                   help="comma-separated flag names")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    _add_common(p)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("gen-data", help="dump clips as PNG strips or raw f32 blobs")
    _add_common(p)
    p.add_argument("--classes", help="comma-separated class names or ids (default: all)")
    p.add_argument("--count", type=int, default=1, help="clips per class")
    p.add_argument("--format", choices=("png", "blob"), default="png")
    p.set_defaults(fn=_cmd_gen_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
