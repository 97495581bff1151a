"""Attribute embedding: converts a binary attribute vector into a global
feature vector and a relation-aware per-attribute feature matrix.

The embedding is two-path: separate tables carry the semantics of each
attribute's on and off states, so an attribute set to 0 still contributes a
learned feature instead of disappearing. A self-attention layer then mixes
information between attributes.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .attributes import validate_bits_tensor


class AttributeFeatures(NamedTuple):
    global_feat: torch.Tensor   # (B, C)
    local_feat: torch.Tensor    # (B, C, N), self-attention enhanced


class AttributeEmbedding(nn.Module):
    """Maps (B, N) attribute bits to global (B, C) and local (B, C, N) features.

    ``single_table`` drops the off-state table (the ablation that reduces the
    two-path embedding to a plain lookup: off attributes embed to zero).
    ``attn_gate`` wraps self-attention in ``local + gamma * attn(local)`` with a
    learnable gamma initialized to 0; off by default, which applies the
    attention output directly.
    """

    def __init__(
        self,
        n_attrs: int,
        feat_dim: int,
        attn_gate: bool = False,
        single_table: bool = False,
        init_std: float = 0.02,
    ) -> None:
        super().__init__()
        self.n_attrs = n_attrs
        self.feat_dim = feat_dim
        self.single_table = single_table

        def table() -> nn.Parameter:
            return nn.Parameter(torch.randn(feat_dim, n_attrs) * init_std)

        self.w_global = table()
        self.embed_on = table()      # columns used where bit = 1
        self.embed_off = table()     # columns used where bit = 0
        self.query = nn.Parameter(torch.randn(feat_dim, feat_dim) * init_std)
        self.key = nn.Parameter(torch.randn(feat_dim, feat_dim) * init_std)
        self.value = nn.Parameter(torch.randn(feat_dim, feat_dim) * init_std)
        self.gate = nn.Parameter(torch.zeros(())) if attn_gate else None

    def embed_global(self, bits: torch.Tensor) -> torch.Tensor:
        """(B, N) bits -> (B, C): a single linear map of the raw bit vector."""
        validate_bits_tensor(bits, self.n_attrs)
        return bits @ self.w_global.t()

    def embed_two_path(self, bits: torch.Tensor) -> torch.Tensor:
        """(B, N) bits -> (B, C, N): column i comes from the on-table where
        bit i is 1 and from the off-table where it is 0."""
        validate_bits_tensor(bits, self.n_attrs)
        on = bits.unsqueeze(1)                      # (B, 1, N)
        if self.single_table:
            return self.embed_on * on
        return self.embed_on * on + self.embed_off * (1.0 - on)

    def self_attention(
        self, local: torch.Tensor, return_weights: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        """(B, C, N) -> (B, C, N), mixing features across attributes.

        Scores s[i, j] = query(col i) . key(col j); weights normalize over the
        first (query) index, so each output column j is a convex combination of
        the value projections sum_i beta[i, j] * value(col i).
        """
        if local.dim() != 3 or local.shape[1] != self.feat_dim:
            raise ValueError(f"expected (B, {self.feat_dim}, N) local features, got {tuple(local.shape)}")
        q = torch.einsum("cd,bdn->bcn", self.query, local)
        k = torch.einsum("cd,bdn->bcn", self.key, local)
        v = torch.einsum("cd,bdn->bcn", self.value, local)
        scores = torch.einsum("bci,bcj->bij", q, k)       # (B, N, N), s[i, j]
        beta = F.softmax(scores, dim=1)                   # each column j sums to 1 over i
        out = torch.einsum("bci,bij->bcj", v, beta)
        if self.gate is not None:
            out = local + self.gate * out
        if return_weights:
            return out, beta
        return out

    def forward(self, bits: torch.Tensor) -> AttributeFeatures:
        local = self.embed_two_path(bits)
        return AttributeFeatures(self.embed_global(bits), self.self_attention(local))
