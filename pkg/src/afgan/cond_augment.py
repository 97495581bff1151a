"""Conditioning augmentation: a reparameterized Gaussian around the global
attribute feature, smoothing the condition manifold and adding diversity."""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import nn


class CondLatent(NamedTuple):
    sample: torch.Tensor    # (B, D) = mu + exp(0.5 * log_var) * eps
    mu: torch.Tensor        # (B, D)
    log_var: torch.Tensor   # (B, D)


class ConditioningAugmentation(nn.Module):
    """Two affine heads produce the mean and log-variance; sampling uses the
    reparameterization trick so the draw is deterministic given a generator."""

    def __init__(self, in_dim: int, out_dim: int) -> None:
        super().__init__()
        self.out_dim = out_dim
        self.heads = nn.Linear(in_dim, out_dim * 2)

    def forward(
        self, global_feat: torch.Tensor, generator: torch.Generator | None = None
    ) -> CondLatent:
        mu, log_var = self.heads(global_feat).chunk(2, dim=-1)
        eps = torch.randn(
            mu.shape, generator=generator, dtype=mu.dtype, device=mu.device
        )
        sample = mu + torch.exp(0.5 * log_var) * eps
        return CondLatent(sample, mu, log_var)


def kl_regularizer(latent: CondLatent) -> torch.Tensor:
    """Mean over dimensions of KL(N(mu, var) || N(0, 1)); always >= 0 and zero
    exactly when mu = 0 and log_var = 0. Batched inputs are averaged."""
    mu, log_var = latent.mu, latent.log_var
    per_dim = 0.5 * (mu * mu + torch.exp(log_var) - log_var - 1.0)
    return per_dim.mean(dim=-1).mean()
