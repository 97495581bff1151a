"""Training loop, checkpointing, sampling, and evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .aem import AttributeEmbedding
from .attributes import AttributeVector
from .checkpoint import Checkpoint, load_checkpoint, load_into_module, save_checkpoint
from .cond_augment import kl_regularizer
from .config import TrainConfig
from .discriminators import build_discriminators, gradient_penalty
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .msssim import pairwise_ms_ssim
from .objective import (
    LossReport,
    discriminator_adversarial_loss,
    generator_adversarial_loss,
    report_json_line,
    total_loss,
)
from .scm import ImageFeatures, ScmImageEncoder, build_encoder, local_match, scm_batch_loss
from .sigm import GeneratorOutput, StackedGenerator

# fixed offsets from config.seed for the independent RNG streams
_NOISE_SEED, _DATA_SEED, _GP_SEED, _PRETRAIN_SEED = 1, 2, 3, 4


class AfganModel(nn.Module):
    """The full model: attribute embedding, stacked generator, per-stage
    discriminators, and the similarity-constraint image encoder."""

    def __init__(self, config: TrainConfig) -> None:
        super().__init__()
        self.config = config
        self.aem = AttributeEmbedding(
            config.n_attrs,
            config.feat_dim,
            attn_gate=config.attn_gate,
            single_table=config.single_table_embedding,
        )
        self.generator = StackedGenerator(
            config.feat_dim,
            config.z_dim,
            config.ca_dim,
            config.stage_channels,
            config.base_resolution,
        )
        self.discriminators = build_discriminators(
            config.resolutions,
            config.feat_dim,
            channels=config.disc_channels,
            patch_grid=config.patch_grid,
            sigmoid_out=(config.gan_loss == "log"),
        )
        backbone = build_encoder(
            config.encoder,
            input_resolution=config.resolutions[-1],
            n_attrs=config.n_attrs,
        )
        self.scm_encoder = ScmImageEncoder(backbone, config.feat_dim)

    def generate(
        self, bits: torch.Tensor, generator: torch.Generator | None = None,
        z: torch.Tensor | None = None,
    ) -> GeneratorOutput:
        global_feat, local_feat = self.aem(bits)
        if z is None:
            z = torch.randn((bits.shape[0], self.config.z_dim), generator=generator)
        return self.generator(z, global_feat, local_feat, generator=generator)


def build_model(config: TrainConfig, seed: int | None = None) -> AfganModel:
    """Construct a model with reproducible parameter initialization."""
    torch.manual_seed(config.seed if seed is None else seed)
    return AfganModel(config)


class TrainResult(NamedTuple):
    checkpoint: Path
    metrics: Path
    g_steps: int
    epochs: int


@dataclass
class EvalReport:
    attr_accuracy: float
    per_attribute_accuracy: tuple[float, ...]
    sample_count: int
    msssim_mean: float | None = None

    def to_dict(self) -> dict:
        return {
            "attr_accuracy": self.attr_accuracy,
            "per_attribute_accuracy": list(self.per_attribute_accuracy),
            "sample_count": self.sample_count,
            "msssim_mean": self.msssim_mean,
        }


# --------------------------------------------------------------------------
# similarity-constraint pretraining

def pretrain_scm(
    config: TrainConfig,
    dataset,
    out_path: str | Path | None = None,
    model: AfganModel | None = None,
    steps: int | None = None,
    log_path: str | Path | None = None,
) -> AfganModel:
    """Train the attribute embedding, the encoder projections, and the toy
    backbone jointly on real (image, attributes) pairs: the batch matching
    loss aligns the two feature spaces, and backbones exposing
    ``predict_logits`` also get an attribute-prediction loss."""
    if len(dataset) == 0:
        raise ConfigError("cannot pretrain on an empty dataset")
    if model is None:
        model = build_model(config)
    steps = config.scm_pretrain_steps if steps is None else steps
    params = list(model.aem.parameters()) + list(model.scm_encoder.parameters())
    opt = torch.optim.Adam(
        params, lr=config.lr_g, betas=(config.adam_beta1, config.adam_beta2)
    )
    data_gen = torch.Generator().manual_seed(config.seed + _PRETRAIN_SEED)
    bce = nn.BCEWithLogitsLoss()
    backbone = model.scm_encoder.backbone
    log_lines = []

    step = 0
    while step < steps:
        for real, attrs in dataset.batches(config.batch_size, data_gen):
            if step >= steps:
                break
            step += 1
            opt.zero_grad()
            global_feat, local_feat = model.aem(attrs)
            feats = model.scm_encoder(real)
            scm = scm_batch_loss(
                local_feat, global_feat, feats,
                config.gamma1, config.gamma2, config.gamma3,
            )
            loss = scm
            bce_val = 0.0
            if hasattr(backbone, "predict_logits"):
                pred = bce(backbone.predict_logits(real), attrs)
                loss = loss + real.shape[0] * pred
                bce_val = float(pred)
            if not math.isfinite(float(loss)):
                raise TrainingDivergedError(f"pretraining loss non-finite at step {step}")
            loss.backward()
            opt.step()
            log_lines.append(json.dumps(
                {"step": step, "scm": float(scm), "bce": bce_val}, sort_keys=True
            ))

    if log_path is not None:
        Path(log_path).write_text("\n".join(log_lines) + "\n")
    if out_path is not None:
        tensors = {f"aem.{k}": v for k, v in model.aem.state_dict().items()}
        tensors.update(
            {f"scm_encoder.{k}": v for k, v in model.scm_encoder.state_dict().items()}
        )
        save_checkpoint(out_path, tensors, config, meta={"kind": "scm", "steps": steps})
    return model


def load_scm_checkpoint(model: AfganModel, path: str | Path) -> None:
    ckpt = load_checkpoint(path)
    if ckpt.config.encoder != model.config.encoder:
        raise CheckpointError(
            f"checkpoint was pretrained with encoder {ckpt.config.encoder!r}, "
            f"model uses {model.config.encoder!r}"
        )
    load_into_module(model.aem, ckpt.tensors, "aem.")
    load_into_module(model.scm_encoder, ckpt.tensors, "scm_encoder.")


# --------------------------------------------------------------------------
# training

def _stage_reals(real: torch.Tensor, n_stages: int) -> list[torch.Tensor]:
    """Downsample full-resolution real images to every stage resolution."""
    reals = [real]
    for _ in range(n_stages - 1):
        reals.append(F.avg_pool2d(reals[-1], 2))
    return reals[::-1]


def generator_step_losses(
    model: AfganModel, attrs: torch.Tensor, noise_gen: torch.Generator | None
) -> tuple[torch.Tensor, list[torch.Tensor], torch.Tensor, torch.Tensor, GeneratorOutput]:
    """Forward pass and all generator-side loss terms for one batch."""
    config = model.config
    global_feat, local_feat = model.aem(attrs)
    z = torch.randn((attrs.shape[0], config.z_dim), generator=noise_gen)
    gen_out = model.generator(z, global_feat, local_feat, generator=noise_gen)
    per_stage = [
        generator_adversarial_loss(disc(img, global_feat), config.gan_loss)
        for disc, img in zip(model.discriminators, gen_out.images)
    ]
    if config.lambda_scm > 0:
        feats = model.scm_encoder(gen_out.images[-1])
        scm = scm_batch_loss(
            local_feat, global_feat, feats,
            config.gamma1, config.gamma2, config.gamma3,
        )
    else:
        scm = torch.zeros(())
    kl = kl_regularizer(gen_out.latent)
    total = sum(per_stage) + config.lambda_scm * scm + config.kl_weight * kl
    return total, per_stage, scm, kl, gen_out


def discriminator_step_losses(
    model: AfganModel,
    real: torch.Tensor,
    fakes: Sequence[torch.Tensor],
    global_feat: torch.Tensor,
    gp_gen: torch.Generator | None,
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """All discriminator-side per-stage losses for one batch; fakes and the
    condition are treated as constants."""
    config = model.config
    cond = global_feat.detach()
    reals = _stage_reals(real, config.n_stages)
    per_stage = []
    for disc, real_i, fake_i in zip(model.discriminators, reals, fakes):
        fake_i = fake_i.detach()
        real_out = disc(real_i, cond)
        fake_out = disc(fake_i, cond)
        if config.gan_loss == "wgan-gp":
            gp = gradient_penalty(lambda x: disc(x, cond), real_i, fake_i, gp_gen)
        else:
            gp = torch.zeros(())
        per_stage.append(
            discriminator_adversarial_loss(
                real_out, fake_out, gp, config.gan_loss, config.gp_weight
            )
        )
    return sum(per_stage), per_stage


def train(
    config: TrainConfig,
    dataset,
    out_dir: str | Path,
    scm_checkpoint: str | Path | None = None,
    max_g_steps: int | None = None,
) -> TrainResult:
    """Run the alternating-update loop, writing per-step metrics, per-epoch
    checkpoints, and a final checkpoint under ``out_dir``.

    Deterministic given the config seed: noise, shuffling, and penalty
    interpolation each use their own fixed stream.
    """
    if len(dataset) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if dataset.resolution != config.resolutions[-1]:
        raise ConfigError(
            f"dataset images are {dataset.resolution}px but the final stage "
            f"emits {config.resolutions[-1]}px"
        )
    if dataset.n_attrs != config.n_attrs:
        raise ConfigError(
            f"dataset has {dataset.n_attrs} attributes, config expects {config.n_attrs}"
        )
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config.to_json() + "\n")

    model = build_model(config)
    if config.lambda_scm > 0:
        if scm_checkpoint is not None:
            load_scm_checkpoint(model, scm_checkpoint)
        else:
            pretrain_scm(
                config, dataset, out_path=out_dir / "scm.ckpt", model=model,
                log_path=out_dir / "scm_metrics.jsonl",
            )
    for p in model.scm_encoder.parameters():
        p.requires_grad_(False)

    g_params = list(model.aem.parameters()) + list(model.generator.parameters())
    betas = (config.adam_beta1, config.adam_beta2)
    g_opt = torch.optim.Adam(g_params, lr=config.lr_g, betas=betas)
    d_opt = torch.optim.Adam(model.discriminators.parameters(), lr=config.lr_d, betas=betas)
    noise_gen = torch.Generator().manual_seed(config.seed + _NOISE_SEED)
    data_gen = torch.Generator().manual_seed(config.seed + _DATA_SEED)
    gp_gen = torch.Generator().manual_seed(config.seed + _GP_SEED)

    def snapshot(path: Path, epoch: int, g_step: int) -> Path:
        return save_checkpoint(
            path, model.state_dict(), config,
            meta={"kind": "model", "epoch": epoch, "g_step": g_step},
        )

    g_step = 0
    epochs_run = 0
    last_d: list[float] = [0.0] * config.n_stages
    stop = False
    with open(out_dir / "metrics.jsonl", "w") as metrics:
        for epoch in range(1, config.epochs + 1):
            for real, attrs in dataset.batches(config.batch_size, data_gen):
                g_step += 1

                g_opt.zero_grad()
                g_total, per_stage_g, scm, kl, gen_out = generator_step_losses(
                    model, attrs, noise_gen
                )
                g_total.backward()
                g_opt.step()

                if (g_step - 1) % config.d_update_period == 0:
                    d_opt.zero_grad()
                    with torch.no_grad():
                        cond = model.aem.embed_global(attrs)
                    d_total, per_stage_d = discriminator_step_losses(
                        model, real, gen_out.images, cond, gp_gen
                    )
                    d_total.backward()
                    d_opt.step()
                    last_d = [float(v) for v in per_stage_d]

                report = total_loss(
                    [float(v) for v in per_stage_g],
                    scm=float(scm),
                    kl=float(kl),
                    lambda_scm=config.lambda_scm,
                    kl_weight=config.kl_weight,
                    per_stage_d=last_d,
                )
                if not (math.isfinite(report.g_total) and math.isfinite(report.d_total)):
                    raise TrainingDivergedError(
                        f"non-finite loss at step {g_step}: "
                        f"g_total={report.g_total}, d_total={report.d_total}"
                    )
                metrics.write(report_json_line(report, g_step) + "\n")

                if max_g_steps is not None and g_step >= max_g_steps:
                    stop = True
                    break
            epochs_run = epoch
            if not stop:
                snapshot(out_dir / "checkpoints" / f"epoch_{epoch:03d}.ckpt", epoch, g_step)
            if stop:
                break

    final = snapshot(out_dir / "final.ckpt", epochs_run, g_step)
    return TrainResult(final, out_dir / "metrics.jsonl", g_step, epochs_run)


# --------------------------------------------------------------------------
# loading and sampling

def load_model(path: str | Path) -> tuple[AfganModel, Checkpoint]:
    ckpt = load_checkpoint(path)
    model = AfganModel(ckpt.config)
    load_into_module(model, ckpt.tensors)
    model.eval()
    return model, ckpt


def _as_bits_tensor(model: AfganModel, attrs) -> torch.Tensor:
    if isinstance(attrs, AttributeVector):
        bits = attrs.to_tensor()
    elif isinstance(attrs, torch.Tensor):
        bits = attrs.float()
    else:
        bits = torch.tensor([int(b) for b in attrs], dtype=torch.float32)
    if bits.dim() != 1 or bits.shape[0] != model.config.n_attrs:
        raise ConfigError(
            f"attribute vector has length {bits.numel()}, "
            f"model expects {model.config.n_attrs}"
        )
    return bits


def sample(
    model: AfganModel, attrs, count: int, seed: int = 0
) -> list[torch.Tensor]:
    """Per-stage image sets for ``count`` noise draws of one attribute vector:
    a list with one (count, 3, H_i, W_i) tensor per stage."""
    bits = _as_bits_tensor(model, attrs).unsqueeze(0).expand(count, -1)
    gen = torch.Generator().manual_seed(seed)
    model.eval()
    with torch.no_grad():
        out = model.generate(bits, generator=gen)
    return list(out.images)


def generate_final_images(
    model: AfganModel, attr_rows: torch.Tensor, seed: int = 0, batch_size: int = 64
) -> torch.Tensor:
    """Final-stage images for a matrix of attribute rows, generated in batches."""
    gen = torch.Generator().manual_seed(seed)
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, attr_rows.shape[0], batch_size):
            out = model.generate(attr_rows[start:start + batch_size], generator=gen)
            chunks.append(out.images[-1])
    return torch.cat(chunks)


def images_to_uint8(images: torch.Tensor) -> np.ndarray:
    """(B, 3, H, W) in [-1, 1] -> (B, H, W, 3) uint8."""
    arr = ((images.clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return arr.permute(0, 2, 3, 1).cpu().numpy()


# --------------------------------------------------------------------------
# evaluation

def eval_msssim(
    images: torch.Tensor, pair_count: int = 100, seed: int = 0
) -> float:
    """Mean pairwise multi-scale structural similarity of a sample set."""
    gen = torch.Generator().manual_seed(seed)
    return pairwise_ms_ssim(images, pair_count=pair_count, generator=gen)


def attribute_agreement(
    images: np.ndarray, attrs: torch.Tensor, classifier: Callable
) -> np.ndarray:
    """Per-attribute agreement between classifier outputs and target bits.

    images: (K, H, W, 3) uint8; attrs: (K, N). Returns (N,) accuracies.
    """
    target = attrs.cpu().numpy().astype(int)
    predicted = np.stack([np.asarray(classifier(img), dtype=int) for img in images])
    if predicted.shape != target.shape:
        raise ConfigError(
            f"classifier produced {predicted.shape[1]} bits for "
            f"{target.shape[1]} attributes"
        )
    return (predicted == target).mean(axis=0)


def eval_attr_accuracy(
    model: AfganModel,
    dataset,
    classifier: Callable,
    trials: int = 500,
    seed: int = 0,
) -> EvalReport:
    """Generate images for attribute vectors drawn from the dataset's
    empirical distribution and report classifier agreement."""
    names = getattr(classifier, "attribute_names", None)
    if names is not None and len(names) != model.config.n_attrs:
        raise ConfigError(
            f"classifier covers {len(names)} attributes, "
            f"model generates {model.config.n_attrs}"
        )
    gen = torch.Generator().manual_seed(seed)
    attrs = dataset.sample_attrs(trials, gen)
    images = generate_final_images(model, attrs, seed=seed + 1)
    per_attr = attribute_agreement(images_to_uint8(images), attrs, classifier)
    return EvalReport(
        attr_accuracy=float(per_attr.mean()),
        per_attribute_accuracy=tuple(float(a) for a in per_attr),
        sample_count=trials,
    )


# --------------------------------------------------------------------------
# attention export

def attention_weights(
    model: AfganModel, attrs, image: torch.Tensor
) -> torch.Tensor:
    """Region-attention rows of the matching module for one image: (N, R),
    each row a distribution over image regions."""
    bits = _as_bits_tensor(model, attrs)
    with torch.no_grad():
        _, local_feat = model.aem(bits.unsqueeze(0))
        feats = model.scm_encoder(image.unsqueeze(0))
        score = local_match(
            local_feat[0],
            ImageFeatures(feats.local[0], feats.global_[0]),
            model.config.gamma1,
            model.config.gamma2,
        )
    return score.region_weights


def export_attention_maps(
    model: AfganModel, attrs, image: torch.Tensor, out_dir: str | Path
) -> tuple[list[Path], torch.Tensor]:
    """Write one grayscale overlay per attribute showing where its attention
    mass falls on the image; files are named by attribute label and bit value.
    Returns the paths and the raw (N, R) weights."""
    from PIL import Image

    bits = _as_bits_tensor(model, attrs)
    weights = attention_weights(model, bits, image)
    names = getattr(attrs, "names", None) or [
        f"attr_{i}" for i in range(model.config.n_attrs)
    ]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    side = image.shape[-1]
    grid = int(math.isqrt(weights.shape[1]))
    gray = ((image.clamp(-1, 1) + 1.0) * 0.5).mean(dim=0)
    paths = []
    for i in range(weights.shape[0]):
        heat = weights[i].view(1, 1, grid, grid)
        heat = F.interpolate(heat, size=(side, side), mode="nearest")[0, 0]
        heat = heat / heat.max().clamp_min(1e-12)
        overlay = (0.35 * gray + 0.65 * heat).clamp(0, 1)
        arr = (overlay * 255).round().to(torch.uint8).cpu().numpy()
        path = out_dir / f"{i:02d}_{names[i]}_bit{int(bits[i])}.png"
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths, weights
