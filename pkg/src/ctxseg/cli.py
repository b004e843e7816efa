"""Command-line entry point: gen-synth, train, eval, predict, plot.

Every command reads the documented flat config (--config file plus --seed
override), runs one reproducible step, and embeds the effective config in
its outputs. Exit status 0 means every declared output was written.
"""
import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from ctxseg import data as data_mod
from ctxseg import losses as losses_mod
from ctxseg import plotting
from ctxseg import roi as roi_mod
from ctxseg import training as training_mod
from ctxseg.config import ConfigError, ExperimentConfig
from ctxseg.metrics import evaluate_split
from ctxseg.models import GeneratorConfig


def _load_config(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.set("seed", args.seed)
    return cfg


def _synth_config(cfg):
    return data_mod.SynthConfig(
        image_size=(cfg["synth.height"], cfg["synth.width"]),
        num_classes=cfg["synth.num_classes"],
        object_radius_range=(cfg["synth.radius_min"], cfg["synth.radius_max"]),
        foreground_fraction_target=cfg["synth.fg_fraction"],
        noise_sigma=cfg["synth.noise_sigma"],
        count_train=cfg["synth.count_train"],
        count_val=cfg["synth.count_val"],
        seed=cfg["seed"],
    )


def _train_config(cfg, out_dir=None):
    return training_mod.TrainConfig(
        epochs=cfg["train.epochs"],
        learning_rate=cfg["train.lr"],
        batch_size=cfg["train.batch_size"],
        seed=cfg["seed"],
        loss=losses_mod.LossConfig(
            kind=cfg["loss.kind"],
            lambda_local=cfg["loss.lambda_local"],
            lambda_adv=cfg["loss.lambda_adv"],
            reduction=cfg["loss.reduction"],
            focal_gamma=cfg["loss.focal_gamma"],
        ),
        roi=roi_mod.ROIConfig(
            mode=cfg["roi.mode"],
            static_dims=(cfg["roi.static_h"], cfg["roi.static_w"]),
            margin=cfg["roi.margin"],
            min_size=cfg["roi.min_size"],
        ),
        model=GeneratorConfig(
            in_channels=1,
            num_classes=cfg["data.num_classes"],
            depth=cfg["model.depth"],
            base_channels=cfg["model.base_channels"],
        ),
        disc_head=cfg["model.disc_head"],
        checkpoint_every=cfg["train.checkpoint_every"],
        eval_every=cfg["train.eval_every"],
        hd_percentile=cfg["eval.hd_percentile"],
        out_dir=out_dir,
        config_echo=cfg.echo(),
    )


def _require_out(args):
    if args.out is None:
        raise ConfigError("this command requires --out <dir>")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_synth(args):
    cfg = _load_config(args)
    out = _require_out(args)
    split = data_mod.generate_synthetic(_synth_config(cfg))
    data_mod.write_split(split, out)
    (out / "config_echo.json").write_text(json.dumps(cfg.echo(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(split.train)} train + {len(split.val)} val samples to {out}")
    return 0


def cmd_train(args):
    cfg = _load_config(args)
    out = _require_out(args)
    if cfg["method"] == "seg-glgan" and cfg["loss.kind"] != "ce":
        raise ConfigError(
            f"method seg-glgan trains on multi-class CE; loss.kind={cfg['loss.kind']!r} is not valid here"
        )
    split = data_mod.load_dataset(args.data, num_classes=cfg["data.num_classes"])
    train_cfg = _train_config(cfg, out_dir=out)
    disc = None
    if cfg["method"] == "seg-glgan":
        gen, disc, log = training_mod.train_seg_glgan(train_cfg, split)
    else:
        gen, log = training_mod.train_segmenter(train_cfg, split)
    log.save(out / "trainlog.jsonl")
    if not (out / "best.ckpt").exists():
        training_mod.save_checkpoint(out / "best.ckpt", gen, cfg.echo(), disc)
    if split.val:
        report = evaluate_split(gen, split.val, split.num_classes, hd_percentile=cfg["eval.hd_percentile"])
        (out / "report.json").write_text(report.to_json(config_echo=cfg.echo()))
        best = log.best_val()
        if best:
            print(f"best val dice {best[1]:.4f} at epoch {best[0]}")
        print(f"final: mean dice {report.mean_dice:.4f}, mean hd {report.mean_hd:.2f}")
    else:
        warnings.warn("no validation samples: skipping report.json")
    return 0


def _load_split_for_checkpoint(args, cfg, gen):
    split = data_mod.load_dataset(args.data, num_classes=cfg["data.num_classes"])
    if gen.config.num_classes != split.num_classes:
        raise ConfigError(
            f"checkpoint expects {gen.config.num_classes} classes, dataset has {split.num_classes}"
        )
    return split


def cmd_eval(args):
    cfg = _load_config(args)
    gen, _, echo = training_mod.load_checkpoint(args.checkpoint)
    split = _load_split_for_checkpoint(args, cfg, gen)
    if not split.val:
        raise ConfigError(f"no validation samples under {args.data}")
    report = evaluate_split(gen, split.val, split.num_classes, hd_percentile=cfg["eval.hd_percentile"])
    payload = report.to_json(config_echo=echo)
    print(payload, end="")
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(payload)
    return 0


def cmd_predict(args):
    cfg = _load_config(args)
    out = _require_out(args)
    gen, _, _ = training_mod.load_checkpoint(args.checkpoint)
    split = _load_split_for_checkpoint(args, cfg, gen)
    samples = split.val or split.train
    for sample in samples:
        pred = training_mod.predict(gen, sample.image).astype(np.uint8)
        (out / f"{sample.id}.pred.lbl").write_bytes(np.ascontiguousarray(pred).tobytes())
        meta = {"shape": list(pred.shape), "classes": split.num_classes}
        (out / f"{sample.id}.pred.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    print(f"wrote {len(samples)} predictions to {out}")
    return 0


def cmd_plot(args):
    cfg = _load_config(args)
    out = _require_out(args)
    if not args.checkpoint:
        raise ConfigError("plot needs at least one --checkpoint")
    generators = {}
    split = None
    for path in args.checkpoint:
        gen, _, _ = training_mod.load_checkpoint(path)
        generators[Path(path).stem if len(args.checkpoint) == 1 else str(path)] = gen
        if split is None:
            split = _load_split_for_checkpoint(args, cfg, gen)
    samples = split.val or split.train
    n = cfg["plot.n_examples"] if args.n_examples is None else args.n_examples
    if n > len(samples):
        warnings.warn(f"requested {n} examples but split has {len(samples)}; clamping")
        n = len(samples)
    samples = samples[:n]
    named_predictions = {
        name: [training_mod.predict(gen, s.image) for s in samples]
        for name, gen in generators.items()
    }
    written = plotting.write_overlays(out, samples, named_predictions, scale=cfg["plot.scale"])
    print(f"wrote {len(written)} overlays + legend.json to {out}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value or nested YAML config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")

    parser = argparse.ArgumentParser(prog="ctxseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", parents=[common], help="generate a synthetic class-imbalanced dataset")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", parents=[common], help="train unet or seg-glgan per the config")
    p.add_argument("--data", type=Path, required=True, help="sample-directory dataset root")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the val split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="write predicted label maps")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plot", parents=[common], help="render target/prediction contour overlays")
    p.add_argument("--checkpoint", type=Path, action="append", default=[])
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--n-examples", type=int, default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, training_mod.ConfigError, data_mod.LoadError, data_mod.ValidationError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
