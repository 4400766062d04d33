"""Command-line entry point.

Subcommands: gen-data, train, train-sharpener, infer, eval, ablate,
spectrum. Configuration comes from one TOML/JSON file; --seed, --out and
--steps override it. Exit code 0 on success; failures print a
machine-readable error JSON to stderr and exit nonzero.
"""

import argparse
import json
import sys
from pathlib import Path

from .. import scenes
from . import ablation, pipeline
from .config import data_section, load_config_file, scene_config_from, train_config_from
from .train import train, train_sharpener


def build_parser():
    parser = argparse.ArgumentParser(prog="geoflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic scene dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="train one flow variant")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--resume", default=None)

    p = sub.add_parser("train-sharpener", help="train the coarse->fine refinement flow")
    p.add_argument("--config", required=True)
    p.add_argument("--core", required=True, help="core predictor checkpoint")
    p.add_argument("--pairs", default=None, help="reuse an existing coarse-pair container")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("infer", help="predict for one image or a dataset split")
    p.add_argument("--core", required=True)
    p.add_argument("--sharpener", default=None)
    p.add_argument("--image", required=True, help="image.ppm file or split directory")
    p.add_argument("--refine-steps", type=int, default=None,
                   help="sharpener Euler steps, 0..10 (0 skips refinement)")
    p.add_argument("--noise-seed", type=int, default=0,
                   help="noise stream for stochastic checkpoints")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--task", choices=["depth", "normal"], default="depth")
    p.add_argument("--out", required=True, help="output prefix for .csv/.json/.png")

    p = sub.add_parser("ablate", help="run the ablation ladder and time-step sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seeds", default="0,1,2", help="comma-separated replicate ids")
    p.add_argument("--arms", default=None, help="comma-separated arm labels (default: all)")
    p.add_argument("--val", default=None, help="validation split directory")
    p.add_argument("--sweep-t", default="1,10,50,100")
    p.add_argument("--sweep-scales", default="0.25,0.5,1.0")

    p = sub.add_parser("spectrum", help="radial power spectrum report")
    p.add_argument("--core", required=True, help="core-only prediction directory")
    p.add_argument("--sharpened", required=True, help="refined prediction directory")
    p.add_argument("--gt", required=True, help="ground-truth split or prediction directory")
    p.add_argument("--out", required=True, help="output prefix for .csv/.png")
    return parser


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip() != ""]


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip() != ""]


def cmd_gen_data(args):
    doc = load_config_file(args.config)
    scene_cfg = scene_config_from(doc)
    data = data_section(doc)
    seed = args.seed if args.seed is not None else data["seed"]
    for split in ("train", "val", "test"):
        count = int(data.get(split, 0))
        if count > 0:
            path = scenes.generate_split(scene_cfg, args.out, split, count, seed)
            print(f"[gen-data] wrote {count} samples to {path}")
    return 0


def _load_train_config(args):
    doc = load_config_file(args.config)
    cfg = train_config_from(doc, out_dir=args.out, steps=args.steps)
    if args.seed is not None:
        cfg.apply_master_seed(args.seed)
    return cfg


def cmd_train(args):
    cfg = _load_train_config(args)
    ckpt = train(cfg, resume=args.resume)
    print(f"[train] checkpoint: {ckpt}")
    return 0


def cmd_train_sharpener(args):
    cfg = _load_train_config(args)
    cfg.variant = "sharpener"
    cfg.train_steps_t = None
    cfg.use_lcm = False
    ckpt = train_sharpener(args.core, cfg, pairs_path=args.pairs)
    print(f"[train-sharpener] checkpoint: {ckpt}")
    return 0


def cmd_infer(args):
    written = pipeline.infer(args.core, args.image, args.out,
                             sharpener_ckpt=args.sharpener,
                             refine_steps=args.refine_steps,
                             noise_seed=args.noise_seed)
    print(f"[infer] wrote {len(written)} prediction(s) to {args.out}")
    return 0


def cmd_eval(args):
    report = pipeline.evaluate(args.pred, args.gt, args.task, out_prefix=args.out)
    agg = report.aggregate()
    summary = " ".join(f"{k}={v:.4f}" for k, v in agg.items())
    print(f"[eval] {len(report.rows)} samples, {len(report.failed)} failed: {summary}")
    return 0


def cmd_ablate(args):
    cfg = _load_train_config(args)
    arms = [a.strip() for a in args.arms.split(",")] if args.arms else None
    doc = ablation.run_ablation(
        cfg, args.out,
        val_dir=args.val,
        arms=arms,
        seeds=_ints(args.seeds),
        sweep_t=_ints(args.sweep_t),
        sweep_scales=_floats(args.sweep_scales),
    )
    failed = [row["label"] for row in doc["table"] if row["status"] != "ok"]
    print(f"[ablate] report at {args.out} (failed arms: {failed or 'none'})")
    return 0


def cmd_spectrum(args):
    pipeline.spectrum_report(args.core, args.sharpened, args.gt, out_prefix=args.out)
    print(f"[spectrum] wrote {Path(args.out).with_suffix('.csv')}")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "train-sharpener": cmd_train_sharpener,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "spectrum": cmd_spectrum,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports all failures as JSON
        payload = {"error": type(e).__name__, "message": str(e)}
        detail = getattr(e, "detail", None)
        if detail is not None:
            payload["detail"] = detail
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
