"""Stacked image generation: stage 0 maps (noise, condition) to a base feature
map; later stages refine it with attribute-content attention, each emitting an
image at double the previous resolution."""

from __future__ import annotations

import math
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .cond_augment import CondLatent, ConditioningAugmentation


class GLU(nn.Module):
    """Gated linear unit over channels: splits in half, gates one half."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, b = x.chunk(2, dim=1)
        return a * torch.sigmoid(b)


def conv3x3(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=1, padding=1, bias=False)


def conv1x1(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=1, stride=1, padding=0, bias=False)


def up_block(in_ch: int, out_ch: int) -> nn.Sequential:
    """Nearest-neighbor 2x upsample followed by a gated conv."""
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        conv3x3(in_ch, out_ch * 2),
        nn.BatchNorm2d(out_ch * 2),
        GLU(),
    )


class ResBlock(nn.Module):
    def __init__(self, channels: int) -> None:
        super().__init__()
        self.block = nn.Sequential(
            conv3x3(channels, channels * 2),
            nn.BatchNorm2d(channels * 2),
            GLU(),
            conv3x3(channels, channels),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.block(x)


class StageState(NamedTuple):
    h: torch.Tensor        # (B, D_i, H_i, W_i)
    stage_index: int


class AttentionContext(NamedTuple):
    contexts: torch.Tensor   # (B, D, R), one context vector per spatial region
    weights: torch.Tensor    # (B, R, N), each row a distribution over attributes


class GeneratorOutput(NamedTuple):
    images: list[torch.Tensor]         # per stage, (B, 3, H_i, W_i) in [-1, 1]
    states: list[StageState]
    attn_weights: list[torch.Tensor]   # per refine stage, (B, R, N)
    latent: CondLatent


class AttrContentAttention(nn.Module):
    """For each spatial region of a hidden map, a softmax over attributes and
    the resulting attribute-context vector (projected to the map's channels)."""

    def __init__(self, attr_dim: int, hidden_dim: int) -> None:
        super().__init__()
        self.proj = nn.Conv1d(attr_dim, hidden_dim, kernel_size=1, bias=False)

    def forward(self, local: torch.Tensor, h: torch.Tensor) -> AttentionContext:
        # local: (B, C, N); h: (B, D, H, W)
        projected = self.proj(local)                              # (B, D, N)
        flat = h.flatten(2)                                       # (B, D, R)
        scores = torch.einsum("bdr,bdn->brn", flat, projected)    # s'[j, i]
        weights = F.softmax(scores, dim=2)                        # over attributes
        contexts = torch.einsum("brn,bdn->bdr", weights, projected)
        return AttentionContext(contexts, weights)


class GLU1d(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, b = x.chunk(2, dim=-1)
        return a * torch.sigmoid(b)


class InitialStage(nn.Module):
    """Noise + condition -> (channels, base, base) via a dense reshape to 4x4
    and a chain of 2x upsample blocks with widths halving toward the output."""

    def __init__(self, in_dim: int, channels: int, base_resolution: int) -> None:
        super().__init__()
        n_up = int(math.log2(base_resolution // 4))
        widest = channels * 2 ** n_up
        self.fc = nn.Sequential(
            nn.Linear(in_dim, widest * 4 * 4 * 2, bias=False),
            nn.BatchNorm1d(widest * 4 * 4 * 2),
            GLU1d(),
        )
        self.widest = widest
        ups = []
        c = widest
        for _ in range(n_up):
            ups.append(up_block(c, c // 2))
            c //= 2
        self.ups = nn.Sequential(*ups)

    def forward(self, z: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        x = torch.cat([z, cond], dim=1)
        x = self.fc(x).view(x.shape[0], self.widest, 4, 4)
        return self.ups(x)


class RefineStage(nn.Module):
    """Concatenate the previous hidden map with its attention contexts, run
    residual blocks, and upsample 2x into the next stage's width."""

    def __init__(
        self, attr_dim: int, in_channels: int, out_channels: int, n_res: int = 2
    ) -> None:
        super().__init__()
        self.attn = AttrContentAttention(attr_dim, in_channels)
        mixed = in_channels * 2   # hidden map + per-region contexts
        self.residual = nn.Sequential(*[ResBlock(mixed) for _ in range(n_res)])
        self.up = up_block(mixed, out_channels)

    def forward(
        self, h: torch.Tensor, local: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        ctx = self.attn(local, h)
        grid = ctx.contexts.view(h.shape[0], h.shape[1], h.shape[2], h.shape[3])
        x = torch.cat([h, grid], dim=1)
        x = self.residual(x)
        return self.up(x), ctx.weights


class ImageHead(nn.Module):
    """3x3 conv + tanh emitting an RGB image in [-1, 1]."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.conv = conv3x3(channels, 3)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.conv(h))


class StackedGenerator(nn.Module):
    def __init__(
        self,
        feat_dim: int,
        z_dim: int,
        ca_dim: int,
        stage_channels: tuple[int, ...],
        base_resolution: int,
    ) -> None:
        super().__init__()
        self.n_stages = len(stage_channels)
        self.base_resolution = base_resolution
        self.cond_aug = ConditioningAugmentation(feat_dim, ca_dim)
        self.initial = InitialStage(z_dim + ca_dim, stage_channels[0], base_resolution)
        self.refines = nn.ModuleList(
            RefineStage(feat_dim, stage_channels[i], stage_channels[i + 1])
            for i in range(self.n_stages - 1)
        )
        self.to_rgb = nn.ModuleList(ImageHead(c) for c in stage_channels)

    def stage0(self, z: torch.Tensor, cond_sample: torch.Tensor) -> StageState:
        return StageState(self.initial(z, cond_sample), 0)

    def refine(
        self, state: StageState, local: torch.Tensor
    ) -> tuple[StageState, torch.Tensor]:
        if state.stage_index >= self.n_stages - 1:
            raise ValueError(
                f"cannot refine past the final stage (index {state.stage_index})"
            )
        h, weights = self.refines[state.stage_index](state.h, local)
        return StageState(h, state.stage_index + 1), weights

    def to_image(self, state: StageState) -> torch.Tensor:
        return self.to_rgb[state.stage_index](state.h)

    def forward(
        self,
        z: torch.Tensor,
        global_feat: torch.Tensor,
        local_feat: torch.Tensor,
        generator: torch.Generator | None = None,
    ) -> GeneratorOutput:
        latent = self.cond_aug(global_feat, generator=generator)
        state = self.stage0(z, latent.sample)
        states = [state]
        attn_weights = []
        for _ in range(self.n_stages - 1):
            state, weights = self.refine(state, local_feat)
            states.append(state)
            attn_weights.append(weights)
        images = [self.to_image(s) for s in states]
        return GeneratorOutput(images, states, attn_weights, latent)
