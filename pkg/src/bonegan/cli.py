"""Command-line entry point.

Verbs: phantom, train, ablate, fid, tsne, progress, vtt-serve.
Exit codes: 0 success, 1 usage error, 2 data/config error, 3 runtime error.
Every failure prints one line starting with ERROR:<category>:.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import metrics, phantom, tsne as tsne_mod, vtt
from .config import (ModelConfig, TrainConfig, VARIANT_FLAGS,
                     desk_train_config, load_train_config, save_train_config)
from .data import bin_age, load_dataset, one_hot
from .errors import (CheckpointError, ConfigurationError, ContractError,
                     DimensionError, IngestionError, AgeRangeError)
from .trainer import load_model_from_checkpoint, train

DATA_ERRORS = (IngestionError, ConfigurationError, CheckpointError,
               FileNotFoundError, NotADirectoryError)
RUNTIME_ERRORS = (ContractError, DimensionError, AgeRangeError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="bonegan", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("phantom", help="emit a procedural phantom dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap-max", type=int, default=10)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--dataset", required=True, help="dataset dir or manifest.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="train-config JSON (flags override fields)")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--variant", choices=sorted(VARIANT_FLAGS))
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--resume", help="checkpoint dir to resume from")

    p = sub.add_parser("ablate", help="train and score the four ablation rows")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", default="test")

    p = sub.add_parser("fid", help="real vs age-invariant-reconstruction distance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--extractor", default=metrics.DESK_EXTRACTOR)
    p.add_argument("--weights", help="inception weights file (pretrained mode)")

    p = sub.add_parser("tsne", help="embed real/generated images to 2-D")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-bin", type=int, default=42)
    p.add_argument("--perplexity", type=float, default=50.0)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train")
    p.add_argument("--caae", help="checkpoint for caae-generated points")
    p.add_argument("--bapgan", help="checkpoint for bapgan-generated points")
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("progress", help="age-shift held-out images and measure gaps")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=int, default=8, help="years, multiple of 4")
    p.add_argument("--source-bin", type=int, required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--split", default="test")

    p = sub.add_parser("vtt-serve", help="run the visual-Turing-test service")
    p.add_argument("--store", required=True)
    p.add_argument("--data-root", required=True)
    p.add_argument("--checkpoint-root", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", help="directory of built rater-ui assets to serve")

    return parser


def _manifest_path(dataset):
    path = Path(dataset)
    if path.is_dir():
        path = path / "manifest.csv"
    if not path.exists():
        raise IngestionError(f"no manifest at {path}")
    return path


def _train_config_from_args(args):
    if args.config:
        if not Path(args.config).exists():
            raise IngestionError(f"config file {args.config} not found")
        cfg = load_train_config(args.config)
    else:
        cfg = desk_train_config()
    model = cfg.model
    if getattr(args, "size", None):
        model = ModelConfig(**{**asdict(model), "image_size": args.size})
    if getattr(args, "base_channels", None):
        model.base_channels = args.base_channels
    if getattr(args, "variant", None):
        model = model.with_variant(args.variant)
    cfg.model = model
    if getattr(args, "steps", None):
        cfg.steps = args.steps
    if getattr(args, "batch", None):
        cfg.batch_size = args.batch
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "no_augment", False):
        cfg.augment = False
    return cfg.validate()


def _cmd_phantom(args):
    manifest = phantom.write_phantom_dataset(
        args.out, n=args.n, size=args.size, seed=args.seed, gap_max_px=args.gap_max)
    print(f"wrote {args.n} phantoms and {manifest}")
    return 0


def _cmd_train(args):
    cfg = _train_config_from_args(args)
    dataset = load_dataset(_manifest_path(args.dataset), cfg.model.image_size,
                           cfg.model.num_bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_train_config(cfg, out / "config.json")
    state, final = train(cfg, dataset, out, resume_from=args.resume)
    print(f"trained {cfg.model.variant_name()} for {state.step} steps -> {final}")
    return 0


def _cmd_ablate(args):
    base = _train_config_from_args(args)
    dataset = load_dataset(_manifest_path(args.dataset), base.model.image_size,
                           base.model.num_bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoints = {}
    for variant in VARIANT_FLAGS:
        cfg = TrainConfig(**{**asdict(base), "model": base.model.with_variant(variant)})
        print(f"[ablate] training {variant} ({cfg.steps} steps)")
        _, final = train(cfg, dataset, out / variant)
        checkpoints[variant] = final
    rows = metrics.ablation_report(dataset, checkpoints, split=args.split)
    metrics.write_ablation_csv(rows, out / "ablation.csv")
    table = metrics.format_ablation_table(rows)
    (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def _cmd_fid(args):
    model, cfg = load_model_from_checkpoint(args.checkpoint)
    dataset = load_dataset(_manifest_path(args.dataset), model.cfg.image_size,
                           model.cfg.num_bins)
    real = dataset.images[args.split]
    if len(real) < 2:
        raise IngestionError(f"split {args.split!r} has {len(real)} images; need >= 2")
    recon = metrics.age_invariant_reconstruct(model, real, dataset.labels(args.split))
    fid = metrics.frechet_between_image_sets(real, recon, args.extractor, args.weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fid.csv", "w", encoding="utf-8") as fh:
        fh.write("split,extractor,n,fid\n")
        fh.write(f"{args.split},{args.extractor},{len(real)},{fid:.6f}\n")
    print(f"fid[{args.split}] = {fid:.4f} ({args.extractor}, n={len(real)})")
    return 0


def _select_per_bin(dataset, split, per_bin, seed):
    bins = dataset.bins[split]
    rng = np.random.default_rng(seed)
    chosen = []
    for b in range(dataset.num_bins):
        idx = np.flatnonzero(bins == b)
        if len(idx) < per_bin:
            raise IngestionError(
                f"bin {b} has {len(idx)} images in split {split!r}; need {per_bin} "
                "(lower --per-bin)")
        chosen.extend(rng.choice(idx, size=per_bin, replace=False).tolist())
    return np.array(chosen)


def _cmd_tsne(args):
    # images enter the embedding normalized to [0, 1]
    first_model = None
    sets = []
    for tag, ckpt in (("caae", args.caae), ("bapgan", args.bapgan)):
        if ckpt:
            model, _ = load_model_from_checkpoint(ckpt)
            first_model = first_model or model
            sets.append((tag, model))
    image_size = first_model.cfg.image_size if first_model else 64
    num_bins = first_model.cfg.num_bins if first_model else 5
    dataset = load_dataset(_manifest_path(args.dataset), image_size, num_bins)
    idx = _select_per_bin(dataset, args.split, args.per_bin, args.seed)
    real = dataset.images[args.split][idx]
    bins = dataset.bins[args.split][idx]
    labels = one_hot(bins, num_bins)

    features = [((real + 1.0) / 2.0).reshape(len(real), -1)]
    sources = ["real"] * len(real)
    all_bins = [bins]
    for tag, model in sets:
        generated = metrics.age_invariant_reconstruct(model, real, labels)
        features.append(((generated + 1.0) / 2.0).reshape(len(generated), -1))
        sources.extend([tag] * len(generated))
        all_bins.append(bins)
    x = np.concatenate(features, axis=0)
    embedding = tsne_mod.tsne_embed(x, perplexity=args.perplexity,
                                    steps=args.steps, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tsne_mod.write_embedding_csv(out / "embedding.csv", embedding,
                                 np.concatenate(all_bins), sources)
    if not args.no_plot:
        tsne_mod.plot_embedding(out / "tsne.png", embedding,
                                np.concatenate(all_bins), sources)
    print(f"embedded {len(x)} points -> {out / 'embedding.csv'}")
    return 0


def _cmd_progress(args):
    model, _ = load_model_from_checkpoint(args.checkpoint)
    dataset = load_dataset(_manifest_path(args.dataset), model.cfg.image_size,
                           model.cfg.num_bins)
    bins = dataset.bins[args.split]
    idx = np.flatnonzero(bins == args.source_bin)[:args.count]
    if len(idx) == 0:
        raise IngestionError(f"no split {args.split!r} images in bin {args.source_bin}")
    images = dataset.images[args.split][idx]
    shifted, target = metrics.progress_image(model, images, args.source_bin, args.delta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "gaps.csv", "w", encoding="utf-8") as fh:
        fh.write("index,source_bin,target_bin,gap_before,gap_after\n")
        for i, (orig, new) in enumerate(zip(images, shifted)):
            vtt.save_png(orig, out / f"src_{i:03d}_bin{args.source_bin}.png")
            vtt.save_png(new, out / f"out_{i:03d}_bin{target}.png")
            fh.write(f"{i},{args.source_bin},{target},"
                     f"{metrics.measure_gap_width(orig)},"
                     f"{metrics.measure_gap_width(new)}\n")
    print(f"shifted {len(idx)} images bin {args.source_bin} -> {target} under {out}")
    return 0


def _cmd_vtt_serve(args):
    from .vtt_http import VttServiceConfig, serve

    config = VttServiceConfig(store_root=args.store, data_root=args.data_root,
                              checkpoint_root=args.checkpoint_root)
    print(f"serving visual-Turing-test API on {args.host}:{args.port}")
    serve(config, host=args.host, port=args.port, ui_dir=args.ui)
    return 0


_COMMANDS = {
    "phantom": _cmd_phantom,
    "train": _cmd_train,
    "ablate": _cmd_ablate,
    "fid": _cmd_fid,
    "tsne": _cmd_tsne,
    "progress": _cmd_progress,
    "vtt-serve": _cmd_vtt_serve,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"ERROR:usage: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.verb](args)
    except DATA_ERRORS as exc:
        print(f"ERROR:data: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"ERROR:runtime: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # trainer divergence, numeric failures
        print(f"ERROR:runtime: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
