"""Multi-scale structural similarity, used pairwise over samples as a
diversity proxy (lower mean similarity = more diverse)."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

# canonical five-scale weights; truncated and renormalized when the input
# resolution cannot support the full pyramid
SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def usable_scales(min_side: int, window: int = WINDOW_SIZE) -> int:
    """How many pyramid levels fit: each halving must keep the side >= window."""
    scales = 0
    side = min_side
    while side >= window and scales < len(SCALE_WEIGHTS):
        scales += 1
        side //= 2
    return scales


def _gaussian_window(dtype: torch.dtype, device: torch.device) -> torch.Tensor:
    coords = torch.arange(WINDOW_SIZE, dtype=dtype, device=device) - WINDOW_SIZE // 2
    g = torch.exp(-(coords ** 2) / (2 * WINDOW_SIGMA ** 2))
    return g / g.sum()


def _filter(x: torch.Tensor, win: torch.Tensor) -> torch.Tensor:
    """Separable valid-mode gaussian blur over the spatial dims."""
    c = x.shape[1]
    x = F.conv2d(x, win.view(1, 1, 1, -1).expand(c, 1, 1, -1), groups=c)
    return F.conv2d(x, win.view(1, 1, -1, 1).expand(c, 1, -1, 1), groups=c)


def _ssim_parts(
    x: torch.Tensor, y: torch.Tensor, win: torch.Tensor, data_range: float
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-image mean luminance and contrast-structure terms."""
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_x, mu_y = _filter(x, win), _filter(y, win)
    sxx = _filter(x * x, win) - mu_x * mu_x
    syy = _filter(y * y, win) - mu_y * mu_y
    sxy = _filter(x * y, win) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum.mean(dim=(1, 2, 3)), cs.mean(dim=(1, 2, 3))


def ms_ssim(x: torch.Tensor, y: torch.Tensor, data_range: float = 2.0) -> torch.Tensor:
    """MS-SSIM between image pairs.

    Accepts (3, H, W) singles or (B, 3, H, W) batches; returns a scalar or a
    (B,) vector. ``data_range`` is the value span of the inputs (2.0 for
    images in [-1, 1]). Raises if the resolution supports fewer than 2 scales.
    """
    squeeze = x.dim() == 3
    if squeeze:
        x, y = x.unsqueeze(0), y.unsqueeze(0)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
    scales = usable_scales(min(x.shape[-2:]))
    if scales < 2:
        raise ValueError(
            f"resolution {tuple(x.shape[-2:])} supports {scales} scale(s); "
            "at least 2 are required"
        )
    weights = torch.tensor(
        SCALE_WEIGHTS[:scales], dtype=x.dtype, device=x.device
    )
    weights = weights / weights.sum()
    win = _gaussian_window(x.dtype, x.device)

    terms = []
    for level in range(scales):
        lum, cs = _ssim_parts(x, y, win, data_range)
        terms.append(lum * cs if level == scales - 1 else cs)
        if level < scales - 1:
            x, y = F.avg_pool2d(x, 2), F.avg_pool2d(y, 2)
    stacked = torch.stack([t.clamp_min(0.0) for t in terms], dim=0)   # (L, B)
    value = torch.prod(stacked ** weights.view(-1, 1), dim=0)
    return value[0] if squeeze else value


def pairwise_ms_ssim(
    images: torch.Tensor,
    pair_count: int = 100,
    generator: torch.Generator | None = None,
    data_range: float = 2.0,
) -> float:
    """Mean MS-SSIM over randomly sampled distinct pairs of a sample set."""
    n = images.shape[0]
    if n < 2:
        raise ValueError("need at least 2 images to form pairs")
    first = torch.randint(0, n, (pair_count,), generator=generator)
    shift = torch.randint(1, n, (pair_count,), generator=generator)
    second = (first + shift) % n
    values = ms_ssim(images[first], images[second], data_range=data_range)
    return float(values.mean())
