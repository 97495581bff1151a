"""Similarity constraint: attention-based matching between attribute features
and image features, plus the batch contrastive loss built on it.

Image features come from a pluggable backbone. The in-repo toy backbone is a
small convolutional attribute predictor; adapters for external pretrained
networks can be registered under new names.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .errors import EncoderUnavailableError

COSINE_EPS = 1e-8


class ImageFeatures(NamedTuple):
    local: torch.Tensor     # (B, C, R): one feature column per spatial region
    global_: torch.Tensor   # (B, C)


class MatchScore(NamedTuple):
    r_local: torch.Tensor          # scalar
    r_global: torch.Tensor | None  # scalar, None when only local matching ran
    region_weights: torch.Tensor   # (N, R), each row a distribution over regions


# --------------------------------------------------------------------------
# encoder backbones

ENCODER_REGISTRY: dict[str, Callable[..., nn.Module]] = {}


def register_encoder(name: str):
    def wrap(factory):
        ENCODER_REGISTRY[name] = factory
        return factory
    return wrap


def build_encoder(name: str, **kwargs) -> nn.Module:
    """Build a registered backbone. Backbones expose ``local_dim``,
    ``global_dim``, ``region_count`` and ``features(images)``."""
    if name not in ENCODER_REGISTRY:
        raise EncoderUnavailableError(
            f"image encoder {name!r} is not available; "
            f"registered encoders: {sorted(ENCODER_REGISTRY)}"
        )
    return ENCODER_REGISTRY[name](**kwargs)


@register_encoder("toy")
class ToyAttributeCnn(nn.Module):
    """Small convolutional attribute predictor used as the in-repo backbone.

    Local features are taken at the 4x4 level of the downsampling trunk (a
    64x64 input yields 16 regions); the global feature is a pooled deeper
    layer. ``predict_logits`` is the attribute-prediction head used during
    pretraining. Activations are smooth (GELU) so that finite-difference
    gradient checks through the encoder are well behaved.
    """

    min_resolution = 16

    def __init__(self, input_resolution: int = 64, n_attrs: int = 6, width: int = 32) -> None:
        super().__init__()
        if input_resolution < self.min_resolution:
            raise EncoderUnavailableError(
                f"toy encoder needs inputs of at least {self.min_resolution}px, "
                f"got {input_resolution}"
            )
        self.input_resolution = input_resolution
        n_down = int(math.log2(input_resolution // 4))
        blocks = []
        c_in, c = 3, width
        for _ in range(n_down):
            blocks.append(nn.Sequential(
                nn.Conv2d(c_in, c, kernel_size=4, stride=2, padding=1),
                nn.GELU(),
            ))
            c_in, c = c, min(c * 2, 256)
        self.trunk = nn.Sequential(*blocks)
        self.local_dim = c_in
        self.deep = nn.Sequential(
            nn.Conv2d(c_in, min(c_in * 2, 256), kernel_size=3, stride=1, padding=1),
            nn.GELU(),
        )
        self.global_dim = min(c_in * 2, 256)
        self.region_count = 16   # 4x4 grid
        self.classifier = nn.Linear(self.global_dim, n_attrs)

    def features(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        spatial = self.trunk(images)                     # (B, F_loc, 4, 4)
        local = spatial.flatten(2)                       # (B, F_loc, 16)
        pooled = self.deep(spatial).mean(dim=(2, 3))     # (B, F_glob)
        return local, pooled

    def predict_logits(self, images: torch.Tensor) -> torch.Tensor:
        _, pooled = self.features(images)
        return self.classifier(pooled)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.features(images)


class CallableBackbone(nn.Module):
    """Adapter for an external feature extractor: any callable returning
    (local, global) feature tensors with the declared dimensions."""

    def __init__(
        self,
        fn: Callable[[torch.Tensor], tuple[torch.Tensor, torch.Tensor]],
        local_dim: int,
        global_dim: int,
        region_count: int,
    ) -> None:
        super().__init__()
        self.fn = fn
        self.local_dim = local_dim
        self.global_dim = global_dim
        self.region_count = region_count

    def features(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.fn(images)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.fn(images)


class ScmImageEncoder(nn.Module):
    """Backbone plus learned projections of both feature kinds into the shared
    attribute-feature dimension. The projections are trained with the matching
    loss during pretraining."""

    def __init__(self, backbone: nn.Module, feat_dim: int) -> None:
        super().__init__()
        self.backbone = backbone
        self.feat_dim = feat_dim
        self.proj_local = nn.Conv1d(backbone.local_dim, feat_dim, kernel_size=1)
        self.proj_global = nn.Linear(backbone.global_dim, feat_dim)

    def forward(self, images: torch.Tensor) -> ImageFeatures:
        local, global_ = self.backbone.features(images)
        return ImageFeatures(self.proj_local(local), self.proj_global(global_))

    encode_image = forward


# --------------------------------------------------------------------------
# matching

def cosine_similarity(a: torch.Tensor, b: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Cosine with an epsilon guard: zero-norm inputs score 0."""
    dot = (a * b).sum(dim=dim)
    denom = a.norm(dim=dim) * b.norm(dim=dim)
    return dot / denom.clamp_min(COSINE_EPS)


def attend_regions(weights: torch.Tensor, img_local: torch.Tensor) -> torch.Tensor:
    """Region contexts c_i = sum_j weights[i, j] * region_j.

    weights: (..., N, R); img_local: (..., C, R) -> contexts (..., C, N).
    """
    return torch.einsum("...nr,...cr->...cn", weights, img_local)


def pairwise_local_scores(
    attr_local: torch.Tensor,
    img_local: torch.Tensor,
    gamma1: float,
    gamma2: float,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Local matching degree between every attribute set and every image.

    attr_local: (Ma, C, N); img_local: (Mi, C, R). Returns the (Ma, Mi) score
    matrix and the (Ma, Mi, N, R) region-attention weights behind it.

    Per pair: raw scores s = attr^T regions are softmax-normalized over
    attributes per region, then a temperature-gamma1 softmax over regions per
    attribute gives the attention; each attribute's region context is scored
    against it by cosine, and the per-attribute scores are pooled with a
    temperature-gamma2 log-sum-exp.
    """
    s = torch.einsum("acn,icr->ainr", attr_local, img_local)     # (Ma, Mi, N, R)
    s_norm = F.softmax(s, dim=2)                                 # over attributes
    alpha = F.softmax(gamma1 * s_norm, dim=3)                    # over regions
    contexts = attend_regions(alpha, img_local.unsqueeze(0))     # (Ma, Mi, C, N)
    rel = cosine_similarity(contexts, attr_local.unsqueeze(1), dim=2)   # (Ma, Mi, N)
    scores = torch.logsumexp(gamma2 * rel, dim=2) / gamma2
    return scores, alpha


def pairwise_global_scores(
    attr_global: torch.Tensor, img_global: torch.Tensor
) -> torch.Tensor:
    """(Ma, C) x (Mi, C) -> (Ma, Mi) cosine similarities."""
    return cosine_similarity(
        attr_global.unsqueeze(1), img_global.unsqueeze(0), dim=2
    )


def local_match(
    attr_local: torch.Tensor,
    img: ImageFeatures | torch.Tensor,
    gamma1: float,
    gamma2: float,
) -> MatchScore:
    """Local matching for one (attribute set, image) pair.

    attr_local: (C, N); the image side is an unbatched ImageFeatures or a
    (C, R) local feature matrix.
    """
    img_local = img.local if isinstance(img, ImageFeatures) else img
    scores, alpha = pairwise_local_scores(
        attr_local.unsqueeze(0), img_local.unsqueeze(0), gamma1, gamma2
    )
    return MatchScore(scores[0, 0], None, alpha[0, 0])


def global_match(attr_global: torch.Tensor, img: ImageFeatures | torch.Tensor) -> torch.Tensor:
    """Cosine similarity between the global attribute and image features."""
    img_global = img.global_ if isinstance(img, ImageFeatures) else img
    return cosine_similarity(attr_global, img_global)


def match_score(
    attr_local: torch.Tensor,
    attr_global: torch.Tensor,
    img: ImageFeatures,
    gamma1: float,
    gamma2: float,
) -> MatchScore:
    partial = local_match(attr_local, img, gamma1, gamma2)
    return MatchScore(
        partial.r_local, global_match(attr_global, img), partial.region_weights
    )


# --------------------------------------------------------------------------
# batch loss

def contrastive_terms(scores: torch.Tensor, gamma3: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Negative log-likelihood of the matched pairs on both axes of a score
    matrix: the first term softmaxes each attribute row over images, the
    second each image column over attributes."""
    scaled = gamma3 * scores
    over_images = F.log_softmax(scaled, dim=1)
    over_attrs = F.log_softmax(scaled, dim=0)
    diag = torch.arange(scores.shape[0], device=scores.device)
    return -over_images[diag, diag].sum(), -over_attrs[diag, diag].sum()


def scm_batch_loss(
    attr_local: torch.Tensor,
    attr_global: torch.Tensor,
    img: ImageFeatures,
    gamma1: float,
    gamma2: float,
    gamma3: float,
) -> torch.Tensor:
    """Sum of the four contrastive terms over a batch of matched pairs.

    attr_local: (M, C, N); attr_global: (M, C); img holds (M, C, R), (M, C).
    """
    if attr_local.dim() != 3 or attr_local.shape[0] == 0:
        raise ValueError("batch loss needs a non-empty batch of matched pairs")
    local_scores, _ = pairwise_local_scores(attr_local, img.local, gamma1, gamma2)
    global_scores = pairwise_global_scores(attr_global, img.global_)
    l1_local, l2_local = contrastive_terms(local_scores, gamma3)
    l1_global, l2_global = contrastive_terms(global_scores, gamma3)
    return l1_local + l2_local + l1_global + l2_global
