"""Command-line entry point wiring data generation, pretraining, training,
sampling, evaluation, and attention export."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import harness
from .attributes import AttributeVector
from .config import TrainConfig, desk_config, paper_config
from .data.dataset import SyntheticDataset, write_synthetic_dataset
from .data.synthetic import OracleClassifier, SynthSpec
from .errors import AfganError, ConfigError

PRESETS = {"paper": paper_config, "desk": desk_config}

# keys allowed in a config file beyond the TrainConfig fields
EXTRA_CONFIG_KEYS = ("data_dir", "out_dir", "scm_checkpoint")


def load_config_file(path: str | Path) -> tuple[dict, dict]:
    """Split a JSON config file into TrainConfig overrides and extras;
    unknown keys are rejected."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    field_names = {f.name for f in dataclasses.fields(TrainConfig)}
    overrides, extras = {}, {}
    for key, value in data.items():
        if key in field_names:
            overrides[key] = value
        elif key in EXTRA_CONFIG_KEYS:
            extras[key] = value
        else:
            raise ConfigError(f"{path}: unknown config key {key!r}")
    return overrides, extras


def resolve_config(args: argparse.Namespace) -> tuple[TrainConfig, dict]:
    """Precedence: preset defaults, then config file, then explicit flags."""
    overrides, extras = {}, {}
    if getattr(args, "config", None):
        overrides, extras = load_config_file(args.config)
    flag_map = {
        "seed": "seed",
        "epochs": "epochs",
        "batch_size": "batch_size",
        "lambda_scm": "lambda_scm",
        "kl_weight": "kl_weight",
        "gan_loss": "gan_loss",
        "d_update_period": "d_update_period",
        "scm_pretrain_steps": "scm_pretrain_steps",
        "n_attrs": "n_attrs",
    }
    for flag, field in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "single_table", False):
        overrides["single_table_embedding"] = True
    preset = PRESETS[getattr(args, "preset", "paper") or "paper"]
    config = preset(**overrides)
    if getattr(args, "data", None):
        extras["data_dir"] = args.data
    if getattr(args, "out", None):
        extras["out_dir"] = args.out
    if getattr(args, "scm_checkpoint", None):
        extras["scm_checkpoint"] = args.scm_checkpoint
    return config, extras


def echo_config(config: TrainConfig, extras: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = config.to_dict()
    resolved.update(extras)
    (out_dir / "config_resolved.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n"
    )


def parse_attrs(args: argparse.Namespace, names: tuple[str, ...]) -> AttributeVector:
    if args.attrs:
        vec = AttributeVector.parse(args.attrs, names)
        if len(vec) != len(names):
            raise ConfigError(f"expected {len(names)} bits, got {len(vec)}")
        return vec
    return AttributeVector.from_flags(names, args.set or (), args.unset or ())


def _add_common_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory (manifest + images)")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--config", help="JSON config file mirroring the training config")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper",
                   help="base configuration preset (default: paper)")
    p.add_argument("--seed", type=int, help="seed governing all randomness")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="minibatch size")
    p.add_argument("--lambda-scm", dest="lambda_scm", type=float,
                   help="weight of the attribute-image matching loss")
    p.add_argument("--kl-weight", dest="kl_weight", type=float,
                   help="weight of the condition-augmentation regularizer")
    p.add_argument("--gan-loss", dest="gan_loss", choices=["log", "wgan-gp"],
                   help="adversarial loss formulation")
    p.add_argument("--d-update-period", dest="d_update_period", type=int,
                   help="generator updates per discriminator update")
    p.add_argument("--scm-pretrain-steps", dest="scm_pretrain_steps", type=int,
                   help="steps of matching-module pretraining")
    p.add_argument("--n-attrs", dest="n_attrs", type=int, help="attribute count")
    p.add_argument("--single-table", dest="single_table", action="store_true",
                   help="ablation: replace the two-path embedding with one table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afgan",
        description="Attribute-conditioned face synthesis: train, sample, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synth", help="render a synthetic attribute dataset")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--n", type=int, default=1000, help="number of images (default 1000)")
    p.add_argument("--attrs", type=int, default=6, help="attribute count (default 6)")
    p.add_argument("--res", type=int, default=64, help="image resolution (default 64)")
    p.add_argument("--seed", type=int, default=0, help="dataset seed (default 0)")

    p = sub.add_parser("pretrain-scm", help="pretrain the matching module on real pairs")
    _add_common_training_flags(p)

    p = sub.add_parser("train", help="train the full model")
    _add_common_training_flags(p)
    p.add_argument("--scm-checkpoint", dest="scm_checkpoint",
                   help="pretrained matching-module checkpoint (pretrained inline if omitted)")
    p.add_argument("--max-steps", dest="max_steps", type=int,
                   help="stop after this many generator steps")

    p = sub.add_parser("sample", help="generate images from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="directory for the emitted images")
    p.add_argument("--attrs", help="comma-separated bits, e.g. 1,0,1,0,1,0")
    p.add_argument("--set", action="append", help="set a named attribute to 1 (repeatable)")
    p.add_argument("--unset", action="append", help="set a named attribute to 0 (repeatable)")
    p.add_argument("--count", type=int, default=4, help="noise draws (default 4)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="directory for report.json")
    p.add_argument("--samples", type=int, default=500,
                   help="generated samples for accuracy (default 500)")
    p.add_argument("--msssim-samples", dest="msssim_samples", type=int, default=100,
                   help="generated samples for diversity (default 100)")
    p.add_argument("--pairs", type=int, default=100,
                   help="random pairs for the similarity mean (default 100)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("attn-export", help="export per-attribute attention heatmaps")
    p.add_argument("--checkpoint", required=True,
                   help="model or matching-module checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--attrs", help="comma-separated bits")
    p.add_argument("--set", action="append")
    p.add_argument("--unset", action="append")
    p.add_argument("--image", help="PNG to analyze; defaults to a rendered glyph")
    p.add_argument("--data", help="dataset directory to pull the glyph spec from")
    p.add_argument("--index", type=int, default=0,
                   help="dataset image index when --data is given")
    p.add_argument("--seed", type=int, default=0)

    return parser


def _attribute_names(n: int, dataset: SyntheticDataset | None) -> tuple[str, ...]:
    if dataset is not None and dataset.spec.n_attrs == n:
        return dataset.spec.attribute_names
    from .data.synthetic import SYNTH_ATTRIBUTE_NAMES

    if n <= len(SYNTH_ATTRIBUTE_NAMES):
        return SYNTH_ATTRIBUTE_NAMES[:n]
    return tuple(f"attr_{i}" for i in range(n))


def cmd_make_synth(args) -> int:
    spec = SynthSpec(n_attrs=args.attrs, resolution=args.res)
    manifest = write_synthetic_dataset(spec, args.n, args.seed, args.out)
    print(f"wrote {args.n} images and {manifest}")
    return 0


def cmd_pretrain_scm(args) -> int:
    config, extras = resolve_config(args)
    out_dir = Path(extras["out_dir"])
    echo_config(config, extras, out_dir)
    dataset = SyntheticDataset.load(extras["data_dir"])
    harness.pretrain_scm(
        config, dataset,
        out_path=out_dir / "scm.ckpt",
        log_path=out_dir / "scm_metrics.jsonl",
    )
    print(f"wrote {out_dir / 'scm.ckpt'}")
    return 0


def cmd_train(args) -> int:
    config, extras = resolve_config(args)
    out_dir = Path(extras["out_dir"])
    echo_config(config, extras, out_dir)
    dataset = SyntheticDataset.load(extras["data_dir"])
    result = harness.train(
        config, dataset, out_dir,
        scm_checkpoint=extras.get("scm_checkpoint"),
        max_g_steps=args.max_steps,
    )
    print(
        f"trained {result.g_steps} generator steps over {result.epochs} epoch(s); "
        f"final checkpoint {result.checkpoint}"
    )
    return 0


def cmd_sample(args) -> int:
    model, _ = harness.load_model(args.checkpoint)
    names = _attribute_names(model.config.n_attrs, None)
    vec = parse_attrs(args, names)
    stage_images = harness.sample(model, vec, args.count, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for stage, images in enumerate(stage_images):
        arrays = harness.images_to_uint8(images)
        res = arrays.shape[1]
        for k, arr in enumerate(arrays):
            Image.fromarray(arr).save(
                out_dir / f"sample_{k:03d}_stage{stage}_{res}px.png"
            )
            written += 1
    print(f"wrote {written} images to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    model, _ = harness.load_model(args.checkpoint)
    dataset = SyntheticDataset.load(args.data)
    classifier = OracleClassifier(dataset.spec)
    report = harness.eval_attr_accuracy(
        model, dataset, classifier, trials=args.samples, seed=args.seed
    )
    gen = torch.Generator().manual_seed(args.seed + 10)
    attrs = dataset.sample_attrs(args.msssim_samples, gen)
    images = harness.generate_final_images(model, attrs, seed=args.seed + 11)
    report.msssim_mean = harness.eval_msssim(images, pair_count=args.pairs, seed=args.seed + 12)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")

    names = dataset.spec.attribute_names
    width = max(len(n) for n in names)
    print(f"samples            {report.sample_count}")
    print(f"mean accuracy      {report.attr_accuracy:.4f}")
    print(f"pairwise ms-ssim   {report.msssim_mean:.4f}")
    for name, acc in zip(names, report.per_attribute_accuracy):
        print(f"  {name:<{width}}  {acc:.4f}")
    print(f"report written to {out_dir / 'report.json'}")
    return 0


def cmd_attn_export(args) -> int:
    from .checkpoint import load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.meta.get("kind") == "scm":
        model = harness.build_model(ckpt.config)
        harness.load_scm_checkpoint(model, args.checkpoint)
        model.eval()
    else:
        model, _ = harness.load_model(args.checkpoint)

    dataset = SyntheticDataset.load(args.data) if args.data else None
    names = _attribute_names(model.config.n_attrs, dataset)
    vec = parse_attrs(args, names)

    if args.image:
        arr = np.asarray(Image.open(args.image).convert("RGB"))
        image = torch.from_numpy(arr).permute(2, 0, 1).float() / 127.5 - 1.0
    elif dataset is not None:
        image = dataset.images[args.index]
    else:
        from .data.synthetic import render_face

        spec = SynthSpec(
            n_attrs=model.config.n_attrs, resolution=model.config.resolutions[-1]
        )
        arr = render_face(spec, vec.bits, args.seed)
        image = torch.from_numpy(arr).permute(2, 0, 1).float() / 127.5 - 1.0

    paths, _ = harness.export_attention_maps(model, vec, image, args.out)
    print(f"wrote {len(paths)} attention maps to {args.out}")
    return 0


COMMANDS = {
    "make-synth": cmd_make_synth,
    "pretrain-scm": cmd_pretrain_scm,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "attn-export": cmd_attn_export,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except AfganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
