"""
Localized-noise patch simulator: x' = (1 - m) * x + m * delta.

A PatchSpec fixes the square patch size, where it goes (explicit anchor or a
seeded draw inside the border band) and the noise that fills it. All noise is
rendered on the 8-bit grid (k / 255) so patched images survive save/load
unchanged. Random draws come from numpy's Philox counter-based generator,
keyed by the seed.
"""

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from imagecore import ImageRGB, as_image

logger = logging.getLogger(__name__)

PATCH_PRESETS = {
    'lavan42': 42,
    'lavan52': 52,
    'lavan60': 60,
    'patch95': 95,
}

DEFAULT_MARGIN = 75

NOISE_STREAM = 0
LOCATION_STREAM = 1


class GeometryError(ValueError):
    """Patch rectangle out of bounds or border placement infeasible."""


def philox(seed: int, stream: int = NOISE_STREAM) -> np.random.Generator:
    """Philox generator for (seed, stream); the stream occupies the high key word."""
    if seed < 0:
        raise ValueError(f"seed must be >= 0, got {seed}")
    return np.random.Generator(np.random.Philox(key=(stream << 64) | (seed & ((1 << 64) - 1))))


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal['uniform', 'checkerboard', 'solid'] = 'uniform'
    seed: int = Field(0, ge=0)
    period: int = Field(2, ge=1)
    value: float = Field(1.0, ge=0.0, le=1.0)

    def label(self) -> str:
        if self.kind == 'uniform':
            return f"uniform(seed={self.seed})"
        if self.kind == 'checkerboard':
            return f"checkerboard(period={self.period})"
        return f"solid(value={self.value:g})"


class PatchSpec(BaseModel):
    """Square patch geometry plus its noise source."""
    model_config = ConfigDict(frozen=True)

    size: int = Field(..., ge=0)
    placement: Literal['explicit', 'border'] = 'border'
    top: int | None = Field(None, ge=0)
    left: int | None = Field(None, ge=0)
    margin: int = Field(DEFAULT_MARGIN, ge=0)
    seed: int = Field(0, ge=0)
    noise: NoiseSpec = NoiseSpec()
    preset: str | None = None

    @model_validator(mode='before')
    @classmethod
    def _default_margin(cls, data):
        # an unset margin widens to the patch size so every preset fits the band
        if isinstance(data, dict) and data.get('margin') is None:
            data = dict(data)
            size = data.get('size')
            data['margin'] = max(DEFAULT_MARGIN, size) if isinstance(size, int) else DEFAULT_MARGIN
        return data

    @model_validator(mode='after')
    def _explicit_needs_anchor(self):
        if self.placement == 'explicit' and (self.top is None or self.left is None):
            raise ValueError("explicit placement needs both top and left")
        if self.preset is not None and PATCH_PRESETS.get(self.preset) != self.size:
            raise ValueError(f"preset '{self.preset}' does not match size {self.size}")
        return self

    @classmethod
    def from_preset(cls, name: str, **kwargs) -> 'PatchSpec':
        if name not in PATCH_PRESETS:
            raise ValueError(f"Unknown patch preset '{name}' (expected one of {', '.join(PATCH_PRESETS)})")
        return cls(size=PATCH_PRESETS[name], preset=name, **kwargs)

    def label(self) -> str:
        name = self.preset or f"size{self.size}"
        if self.placement == 'explicit':
            where = f"at({self.top},{self.left})"
        else:
            where = f"border(margin={self.margin},seed={self.seed})"
        return f"{name} {where} {self.noise.label()}"


def sample_border_location(size: int, height: int, width: int, margin: int = DEFAULT_MARGIN,
                           seed: int = 0) -> tuple[int, int]:
    """Uniform draw over anchors whose patch avoids the central region.

    The central region is rows [margin, height - margin) x cols [margin, width - margin).
    When that region is empty every in-bounds anchor is valid.
    """
    if size < 0 or size > height or size > width:
        raise GeometryError(f"patch size {size} does not fit a {height}x{width} image")
    if margin < size:
        raise GeometryError(f"border margin {margin} must be at least the patch size {size}")

    tops = np.arange(height - size + 1)
    lefts = np.arange(width - size + 1)

    if height - 2 * margin <= 0 or width - 2 * margin <= 0:
        valid = np.ones((tops.size, lefts.size), dtype=bool)
    else:
        rows_hit = (tops < height - margin) & (tops + size > margin)
        cols_hit = (lefts < width - margin) & (lefts + size > margin)
        valid = ~np.logical_and.outer(rows_hit, cols_hit)

    choices = np.flatnonzero(valid)
    if choices.size == 0:
        raise GeometryError(f"no border location for size {size}, margin {margin} on {height}x{width}")

    pick = choices[philox(seed, LOCATION_STREAM).integers(choices.size)]
    top, left = np.unravel_index(pick, valid.shape)
    return int(top), int(left)


def resolve_location(spec: PatchSpec, height: int, width: int) -> tuple[int, int]:
    if spec.placement == 'border':
        return sample_border_location(spec.size, height, width, spec.margin, spec.seed)

    if spec.top + spec.size > height or spec.left + spec.size > width:
        raise GeometryError(
            f"patch {spec.size}x{spec.size} at ({spec.top}, {spec.left}) exceeds the {height}x{width} image")
    return spec.top, spec.left


def make_mask(spec: PatchSpec, height: int, width: int) -> np.ndarray:
    """Boolean (height, width) mask, True inside the patch rectangle."""
    top, left = resolve_location(spec, height, width)
    mask = np.zeros((height, width), dtype=bool)
    mask[top:top + spec.size, left:left + spec.size] = True
    return mask


def render_noise(noise: NoiseSpec, height: int, width: int) -> ImageRGB:
    """Noise image delta for a height x width box, values on the 8-bit grid."""
    if noise.kind == 'uniform':
        u = philox(noise.seed, NOISE_STREAM).random((height, width, 3))
        return np.floor(256.0 * u) / 255.0

    if noise.kind == 'checkerboard':
        rows = np.arange(height)[:, np.newaxis] // noise.period
        cols = np.arange(width)[np.newaxis, :] // noise.period
        board = ((rows + cols) % 2).astype(np.float64)
        return np.repeat(board[:, :, np.newaxis], 3, axis=2)

    level = np.floor(noise.value * 255.0 + 0.5) / 255.0
    return np.full((height, width, 3), level)


def _bounding_box(mask: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return rows[0], cols[0], rows[-1] + 1, cols[-1] + 1


def apply_patch(img: ImageRGB, mask: np.ndarray, noise) -> ImageRGB:
    """Compose img and noise under mask.

    noise is either a full-size (H, W, 3) array or a NoiseSpec, which is
    rendered over the bounding box of the mask.
    """
    img = as_image(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")

    if isinstance(noise, NoiseSpec):
        delta = np.zeros_like(img)
        if mask.any():
            r0, c0, r1, c1 = _bounding_box(mask)
            delta[r0:r1, c0:c1] = render_noise(noise, r1 - r0, c1 - c0)
    else:
        delta = np.asarray(noise, dtype=np.float64)
        if delta.shape != img.shape:
            raise ValueError(f"noise shape {delta.shape} does not match image {img.shape}")

    return np.where(mask[:, :, np.newaxis], delta, img)


def simulate(img: ImageRGB, spec: PatchSpec) -> tuple[ImageRGB, np.ndarray]:
    """Patched image and its ground-truth mask."""
    img = as_image(img)
    height, width = img.shape[:2]
    mask = make_mask(spec, height, width)
    patched = apply_patch(img, mask, spec.noise)
    logger.debug("Patched %dx%d image with %s", height, width, spec.label())
    return patched, mask
