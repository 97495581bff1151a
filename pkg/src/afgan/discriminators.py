"""Per-stage discriminators, each with an unconditional head and a conditional
head on (image, global attribute feature). The final stage scores a grid of
patches instead of the whole image."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

import torch
import torch.nn.functional as F
from torch import nn


class DiscOutput(NamedTuple):
    uncond: torch.Tensor   # (B,) scalar scores, or (B, S, S) patch grids
    cond: torch.Tensor


def down_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
        nn.LeakyReLU(0.2, inplace=True),
    )


class StageDiscriminator(nn.Module):
    """Downsampling conv trunk to a small grid, then two scoring heads.

    In scalar mode the trunk reaches 4x4 and a valid 4x4 conv gives one score
    per image. In patch mode the trunk stops at ``patch_grid`` x ``patch_grid``
    and a 1x1 conv scores each cell, keeping receptive fields strictly smaller
    than the image. The conditional head sees the trunk features concatenated
    with the spatially replicated condition vector. ``sigmoid_out`` maps scores
    through a sigmoid (the log-loss formulation); otherwise scores are raw.
    """

    def __init__(
        self,
        resolution: int,
        cond_dim: int,
        channels: int = 64,
        patch: bool = False,
        patch_grid: int = 4,
        sigmoid_out: bool = False,
    ) -> None:
        super().__init__()
        self.resolution = resolution
        self.patch = patch
        self.sigmoid_out = sigmoid_out
        grid = patch_grid if patch else 4
        n_down = int(math.log2(resolution // grid))
        blocks = []
        c_in, c = 3, channels
        for _ in range(n_down):
            blocks.append(down_block(c_in, c))
            c_in, c = c, min(c * 2, 512)
        self.trunk = nn.Sequential(*blocks)
        self.cond_mix = nn.Sequential(
            nn.Conv2d(c_in + cond_dim, c_in, kernel_size=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        head_kernel = 1 if patch else 4
        self.uncond_head = nn.Conv2d(c_in, 1, kernel_size=head_kernel)
        self.cond_head = nn.Conv2d(c_in, 1, kernel_size=head_kernel)

    def forward(self, image: torch.Tensor, global_feat: torch.Tensor) -> DiscOutput:
        if image.shape[-1] != self.resolution or image.shape[-2] != self.resolution:
            raise ValueError(
                f"stage expects {self.resolution}x{self.resolution} images, "
                f"got {tuple(image.shape[-2:])}"
            )
        feats = self.trunk(image)
        grid = feats.shape[-1]
        tiled = global_feat[:, :, None, None].expand(-1, -1, grid, grid)
        cond_feats = self.cond_mix(torch.cat([feats, tiled], dim=1))
        uncond = self.uncond_head(feats)
        cond = self.cond_head(cond_feats)
        if self.patch:
            uncond, cond = uncond.squeeze(1), cond.squeeze(1)       # (B, S, S)
        else:
            uncond, cond = uncond.flatten(1).squeeze(1), cond.flatten(1).squeeze(1)
        if self.sigmoid_out:
            uncond, cond = torch.sigmoid(uncond), torch.sigmoid(cond)
        return DiscOutput(uncond, cond)


def build_discriminators(
    resolutions: Sequence[int],
    cond_dim: int,
    channels: int = 64,
    patch_grid: int = 4,
    sigmoid_out: bool = False,
) -> nn.ModuleList:
    """One discriminator per stage; only the final stage is patch-based."""
    last = len(resolutions) - 1
    return nn.ModuleList(
        StageDiscriminator(
            res,
            cond_dim,
            channels=channels,
            patch=(i == last),
            patch_grid=patch_grid,
            sigmoid_out=sigmoid_out,
        )
        for i, res in enumerate(resolutions)
    )


def _per_example_scores(raw: torch.Tensor) -> torch.Tensor:
    """Reduce patch grids to one score per example; scalars pass through."""
    return raw.flatten(1).mean(dim=1) if raw.dim() > 1 else raw


def gradient_penalty(
    disc_fn: Callable[[torch.Tensor], torch.Tensor | tuple[torch.Tensor, ...]],
    real: torch.Tensor,
    fake: torch.Tensor,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Mean squared deviation of the critic's input-gradient norm from 1,
    measured at random interpolates of real and fake examples.

    ``disc_fn`` may return one score tensor or a tuple of head outputs; the
    penalty is averaged over heads, all sharing the same interpolates.
    """
    t = torch.rand(
        (real.shape[0],) + (1,) * (real.dim() - 1),
        generator=generator,
        dtype=real.dtype,
        device=real.device,
    )
    x = (t * real.detach() + (1.0 - t) * fake.detach()).requires_grad_(True)
    outputs = disc_fn(x)
    if isinstance(outputs, torch.Tensor):
        outputs = (outputs,)
    penalties = []
    for raw in outputs:
        scores = _per_example_scores(raw)
        if scores.requires_grad:
            (grads,) = torch.autograd.grad(
                scores.sum(), x, create_graph=True, allow_unused=True
            )
        else:
            grads = None   # critic ignores its input entirely
        if grads is None:
            grads = torch.zeros_like(x)
        norms = grads.flatten(1).norm(dim=1)
        penalties.append(((norms - 1.0) ** 2).mean())
    return torch.stack(penalties).mean()
