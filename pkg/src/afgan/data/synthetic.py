"""Procedural face-glyph renderer with a rule-based oracle classifier.

Each attribute bit deterministically alters one region of the glyph:

    0  Smiling            straight lip bar vs. lowered bar with raised corners
    1  Eyeglasses         frame outlines and a bridge around the eyes
    2  Bangs              hair band across the forehead
    3  Pale_Skin          pale vs. tan face fill
    4  Bushy_Eyebrows     thick vs. thin brow bars
    5  Bright_Background  light vs. dark canvas

The seed perturbs nuisance factors only (whole-glyph position jitter and pixel
noise); attribute-relevant geometry never depends on it, so flipping one bit
changes pixels only inside that attribute's territory mask and the oracle
recovers every bit from region statistics. Feature territories avoid each
other with explicit margins, and the oracle first recovers the jitter offset
from the always-present eye dots before probing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

SYNTH_ATTRIBUTE_NAMES = (
    "Smiling",
    "Eyeglasses",
    "Bangs",
    "Pale_Skin",
    "Bushy_Eyebrows",
    "Bright_Background",
)

# colors as float RGB
BG_LIGHT = (0.85, 0.85, 0.87)
BG_DARK = (0.33, 0.33, 0.37)
SKIN_PALE = (0.96, 0.88, 0.80)
SKIN_TAN = (0.70, 0.50, 0.34)
HAIR = (0.14, 0.09, 0.07)
BROW = (0.20, 0.12, 0.06)
EYE = (0.05, 0.05, 0.07)
FRAME = (0.10, 0.10, 0.13)
LIP = (0.45, 0.06, 0.08)

# face center as a fraction of the canvas
CX, CY = 0.5, 0.47
FACE_A, FACE_B = 0.34, 0.45


@dataclass(frozen=True)
class SynthSpec:
    """Geometry/palette parameters of the synthetic dataset."""

    n_attrs: int = 6
    resolution: int = 64
    jitter: int = 2          # max whole-glyph offset in pixels, per axis
    noise_scale: float = 0.01

    def __post_init__(self) -> None:
        if not 1 <= self.n_attrs <= len(SYNTH_ATTRIBUTE_NAMES):
            raise ConfigError(
                f"n_attrs must be in 1..{len(SYNTH_ATTRIBUTE_NAMES)}, got {self.n_attrs}"
            )
        if self.resolution < 32:
            raise ConfigError(f"resolution must be at least 32, got {self.resolution}")
        if self.jitter < 0 or self.jitter > self.resolution // 16:
            raise ConfigError(
                f"jitter must be in 0..{self.resolution // 16} for resolution "
                f"{self.resolution}, got {self.jitter}"
            )

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return SYNTH_ATTRIBUTE_NAMES[: self.n_attrs]


# --------------------------------------------------------------------------
# mask primitives (x = columns, y = rows; fractions are relative to the
# jittered face center)

def _grid(res: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:res, 0:res]
    return xs, ys


def _ellipse(res: int, cx: float, cy: float, a: float, b: float) -> np.ndarray:
    xs, ys = _grid(res)
    return ((xs - cx) / (a * res)) ** 2 + ((ys - cy) / (b * res)) ** 2 <= 1.0


def _rect(res: int, cx: float, cy: float, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    mask = np.zeros((res, res), dtype=bool)
    c0 = max(0, round(cx + x0 * res))
    c1 = min(res, round(cx + x1 * res))
    r0 = max(0, round(cy + y0 * res))
    r1 = min(res, round(cy + y1 * res))
    if c1 > c0 and r1 > r0:
        mask[r0:r1, c0:c1] = True
    return mask


def _disc(res: int, cx: float, cy: float, x: float, y: float, r: float) -> np.ndarray:
    xs, ys = _grid(res)
    return (xs - (cx + x * res)) ** 2 + (ys - (cy + y * res)) ** 2 <= (r * res) ** 2


def _mirrored(res: int, cx: float, cy: float, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    return _rect(res, cx, cy, x0, x1, y0, y1) | _rect(res, cx, cy, -x1, -x0, y0, y1)


# per-feature footprints

def _face(res, cx, cy):
    return _ellipse(res, cx, cy, FACE_A, FACE_B)


def _bangs(res, cx, cy):
    return _rect(res, cx, cy, -0.22, 0.22, -0.44, -0.29)


def _brows(res, cx, cy, thick: bool):
    height = 0.085 if thick else 0.03
    return _mirrored(res, cx, cy, 0.07, 0.20, -0.265, -0.265 + height)


def _eyes(res, cx, cy):
    return _disc(res, cx, cy, -0.13, -0.055, 0.035) | _disc(res, cx, cy, 0.13, -0.055, 0.035)


def _glasses(res, cx, cy):
    frames = np.zeros((res, res), dtype=bool)
    for side in (-1, 1):
        outer = _rect(res, cx, cy, side * 0.13 - 0.075, side * 0.13 + 0.075, -0.13, 0.02)
        inner = _rect(res, cx, cy, side * 0.13 - 0.04, side * 0.13 + 0.04, -0.095, -0.015)
        frames |= outer & ~inner
    bridge = _rect(res, cx, cy, -0.055, 0.055, -0.08, -0.03)
    return frames | bridge


def _mouth(res, cx, cy, smiling: bool):
    if smiling:
        lower = _rect(res, cx, cy, -0.17, 0.17, 0.38, 0.45)
        corners = _mirrored(res, cx, cy, 0.11, 0.17, 0.30, 0.37)
        return lower | corners
    return _rect(res, cx, cy, -0.17, 0.17, 0.30, 0.37)


def _full_bits(spec: SynthSpec, bits) -> tuple[int, ...]:
    bits = tuple(int(b) for b in bits)
    if len(bits) != spec.n_attrs:
        raise ConfigError(f"expected {spec.n_attrs} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"attribute bits must be 0 or 1, got {bits}")
    return bits + (0,) * (len(SYNTH_ATTRIBUTE_NAMES) - len(bits))


def _jitter(spec: SynthSpec, seed: int) -> tuple[np.random.Generator, float, float]:
    rng = np.random.default_rng(seed)
    dx, dy = rng.integers(-spec.jitter, spec.jitter + 1, size=2)
    return rng, CX * spec.resolution + float(dx), CY * spec.resolution + float(dy)


def render_face(spec: SynthSpec, bits, seed: int) -> np.ndarray:
    """Render the glyph for an attribute vector; returns (H, W, 3) uint8.

    Deterministic given (bits, seed). The RNG stream never depends on bits, so
    two renders with the same seed differ only where the flipped bits draw.
    """
    b = _full_bits(spec, bits)
    rng, cx, cy = _jitter(spec, seed)
    res = spec.resolution
    noise = rng.normal(0.0, spec.noise_scale, size=(res, res, 3))

    canvas = np.empty((res, res, 3), dtype=np.float64)
    canvas[:] = BG_LIGHT if b[5] else BG_DARK

    def paint(mask: np.ndarray, color) -> None:
        canvas[mask] = color

    paint(_face(res, cx, cy), SKIN_PALE if b[3] else SKIN_TAN)
    if b[2]:
        paint(_bangs(res, cx, cy), HAIR)
    paint(_brows(res, cx, cy, thick=bool(b[4])), BROW)
    paint(_eyes(res, cx, cy), EYE)
    if b[1]:
        paint(_glasses(res, cx, cy), FRAME)
    paint(_mouth(res, cx, cy, smiling=bool(b[0])), LIP)

    canvas = np.clip(canvas + noise, 0.0, 1.0)
    return (canvas * 255.0).round().astype(np.uint8)


def attribute_masks(spec: SynthSpec, seed: int) -> np.ndarray:
    """Territory masks, one per attribute: the region each bit is allowed to
    change, at the same jitter offset the renderer uses for this seed.
    Returns (n_attrs, H, W) bool."""
    _, cx, cy = _jitter(spec, seed)
    res = spec.resolution
    masks = [
        _rect(res, cx, cy, -0.25, 0.25, 0.28, 0.47),     # Smiling
        _rect(res, cx, cy, -0.25, 0.25, -0.21, 0.02),    # Eyeglasses
        _rect(res, cx, cy, -0.25, 0.25, -0.47, -0.27),   # Bangs
        _face(res, cx, cy),                              # Pale_Skin
        _mirrored(res, cx, cy, 0.055, 0.22, -0.28, -0.17),  # Bushy_Eyebrows
        ~_face(res, cx, cy),                             # Bright_Background
    ]
    return np.stack(masks[: spec.n_attrs])


# --------------------------------------------------------------------------
# oracle classifier

def _luminance(img: np.ndarray, mask: np.ndarray) -> float:
    return float(img[mask].mean()) if mask.any() else 1.0


def _detect_center(spec: SynthSpec, img: np.ndarray) -> tuple[float, float]:
    """Recover the jitter offset by finding the darkest placement of the two
    always-present eye dots."""
    res = spec.resolution
    best, best_center = None, (CX * res, CY * res)
    for dy in range(-spec.jitter, spec.jitter + 1):
        for dx in range(-spec.jitter, spec.jitter + 1):
            cx, cy = CX * res + dx, CY * res + dy
            score = _luminance(img.mean(axis=2), _eyes(res, cx, cy))
            if best is None or score < best:
                best, best_center = score, (cx, cy)
    return best_center


def oracle_classify(spec: SynthSpec, image: np.ndarray) -> tuple[int, ...]:
    """Recover the attribute bits of a rendered glyph from region statistics.

    Exact on renderer outputs; on arbitrary images (e.g. generated samples) it
    still returns a bit per attribute, measured the same way.
    """
    if image.dtype == np.uint8:
        img = image.astype(np.float64) / 255.0
    else:
        img = image.astype(np.float64)
    res = spec.resolution
    if img.shape[:2] != (res, res):
        raise ConfigError(f"expected {res}x{res} image, got {img.shape[:2]}")
    cx, cy = _detect_center(spec, img)
    lum = img.mean(axis=2)

    # mouth: exactly one of the two center bands is lip-dark
    upper = _luminance(lum, _rect(res, cx, cy, -0.06, 0.06, 0.305, 0.365))
    lower = _luminance(lum, _rect(res, cx, cy, -0.06, 0.06, 0.385, 0.445))
    smiling = int(lower < upper)

    # glasses: the bridge region is frame-dark only when present
    bridge = _luminance(lum, _rect(res, cx, cy, -0.045, 0.045, -0.085, -0.025))
    eyeglasses = int(bridge < 0.40)

    # bangs: forehead band is hair-dark only when present
    forehead = _luminance(lum, _rect(res, cx, cy, -0.15, 0.15, -0.42, -0.31))
    bangs = int(forehead < 0.27)

    # skin tone: blue channel of the cheeks separates pale from tan
    cheeks = _mirrored(res, cx, cy, 0.125, 0.215, 0.075, 0.165)
    pale = int(_luminance(img[:, :, 2], cheeks) > 0.57)

    # brows: fraction of dark rows inside the thick-brow footprint
    brow_box = _mirrored(res, cx, cy, 0.09, 0.18, -0.26, -0.175)
    dark_frac = float((lum[brow_box] < 0.33).mean()) if brow_box.any() else 0.0
    bushy = int(dark_frac > 0.60)

    # background: canvas corners are never covered by the glyph
    m = max(2, round(0.02 * res))
    c = round(0.09 * res)
    corners = np.zeros((res, res), dtype=bool)
    for rs in (slice(m, m + c), slice(res - m - c, res - m)):
        for cs in (slice(m, m + c), slice(res - m - c, res - m)):
            corners[rs, cs] = True
    bright = int(_luminance(lum, corners) > 0.60)

    bits = (smiling, eyeglasses, bangs, pale, bushy, bright)
    return bits[: spec.n_attrs]


class OracleClassifier:
    """Callable wrapper with the attribute names attached, for evaluation."""

    def __init__(self, spec: SynthSpec) -> None:
        self.spec = spec
        self.attribute_names = spec.attribute_names

    def __call__(self, image: np.ndarray) -> tuple[int, ...]:
        return oracle_classify(self.spec, image)
