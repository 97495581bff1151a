"""Training configuration: hyperparameters, dimensions, stage resolutions, seeds."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

GAN_LOSS_MODES = ("log", "wgan-gp")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class TrainConfig:
    """All knobs for building and training the model.

    Defaults are the full-scale configuration (attribute feature dimension 256,
    noise dimension 100, stage resolutions 64/128/256, Adam with betas 0.5/0.999,
    30 epochs, one discriminator update per four generator updates). Use
    :func:`desk_config` for the small synthetic-benchmark preset.
    """

    # architecture
    n_attrs: int = 18
    feat_dim: int = 256          # attribute feature dimension C
    z_dim: int = 100             # noise vector dimension
    ca_dim: int = 100            # conditioning-augmentation latent dimension
    base_resolution: int = 64    # stage-0 output; later stages double it
    n_stages: int = 3
    stage_channels: tuple[int, ...] = (64, 32, 16)   # hidden-map channels per stage
    disc_channels: int = 64
    patch_grid: int = 4          # patch-score grid side for the final-stage critic
    attn_gate: bool = False      # learnable gate around attribute self-attention
    single_table_embedding: bool = False   # ablation: drop the off-state table
    encoder: str = "toy"         # image-encoder backbone plug-in name

    # losses
    gan_loss: str = "wgan-gp"
    gp_weight: float = 10.0
    lambda_scm: float = 5.0      # weight of the attribute-image matching loss
    kl_weight: float = 1.0       # weight of the conditioning-augmentation regularizer
    gamma1: float = 5.0
    gamma2: float = 5.0
    gamma3: float = 10.0

    # optimization
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    epochs: int = 30
    batch_size: int = 16
    d_update_period: int = 4     # one discriminator update per this many generator updates
    scm_pretrain_steps: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gan_loss not in GAN_LOSS_MODES:
            raise ConfigError(f"gan_loss must be one of {GAN_LOSS_MODES}, got {self.gan_loss!r}")
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        if len(self.stage_channels) != self.n_stages:
            raise ConfigError(
                f"stage_channels has {len(self.stage_channels)} entries for {self.n_stages} stages"
            )
        positive = {
            "n_attrs": self.n_attrs, "feat_dim": self.feat_dim, "z_dim": self.z_dim,
            "ca_dim": self.ca_dim, "base_resolution": self.base_resolution,
            "n_stages": self.n_stages, "disc_channels": self.disc_channels,
            "patch_grid": self.patch_grid, "gp_weight": self.gp_weight,
            "gamma1": self.gamma1, "gamma2": self.gamma2, "gamma3": self.gamma3,
            "lr_g": self.lr_g, "lr_d": self.lr_d, "epochs": self.epochs,
            "batch_size": self.batch_size, "d_update_period": self.d_update_period,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name, value in (("lambda_scm", self.lambda_scm), ("kl_weight", self.kl_weight),
                            ("scm_pretrain_steps", self.scm_pretrain_steps)):
            if value < 0:
                raise ConfigError(f"{name} must be non-negative, got {value}")
        if any(c <= 0 for c in self.stage_channels):
            raise ConfigError(f"stage_channels must be positive, got {self.stage_channels}")
        if not _is_pow2(self.base_resolution) or self.base_resolution < 8:
            raise ConfigError(f"base_resolution must be a power of two >= 8, got {self.base_resolution}")
        if not _is_pow2(self.patch_grid) or self.patch_grid > self.resolutions[-1] // 4:
            raise ConfigError(
                f"patch_grid must be a power of two <= final resolution / 4, got {self.patch_grid}"
            )

    @property
    def resolutions(self) -> tuple[int, ...]:
        """Per-stage image resolutions; each stage doubles the previous."""
        return tuple(self.base_resolution * 2 ** i for i in range(self.n_stages))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["stage_channels"] = list(self.stage_channels)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.from_json(Path(path).read_text())

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def paper_config(**overrides) -> TrainConfig:
    """Full-scale defaults (64/128/256 stages, 18 attributes)."""
    return TrainConfig(**overrides)


def desk_config(**overrides) -> TrainConfig:
    """Small preset for the synthetic benchmark: 6 attributes, 16/32/64 stages.

    Sized to train end-to-end on a CPU in minutes rather than days. The
    discriminator update period is 1 here (the full-scale default updates the
    discriminator once per four generator steps, which at this scale leaves the
    critic too weak to guide the generator).
    """
    values = dict(
        n_attrs=6,
        feat_dim=64,
        z_dim=64,
        ca_dim=32,
        base_resolution=16,
        stage_channels=(32, 16, 8),
        disc_channels=32,
        patch_grid=4,
        lambda_scm=2.0,
        kl_weight=0.5,
        lr_g=2e-4,
        lr_d=2e-4,
        epochs=10,
        batch_size=8,
        d_update_period=1,
        scm_pretrain_steps=800,
    )
    values.update(overrides)
    return TrainConfig(**values)
