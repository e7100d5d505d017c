"""
Local gradients smoothing.

Pipeline for one image:
  1. luminance plane -> gradient magnitude -> min-max normalized map g
  2. g is cut into overlapping block x block windows (stride block - overlap,
     last anchor per axis clamped to dim - block)
  3. a window is kept when its mean is strictly above the threshold; a pixel
     keeps its g value when ANY window covering it is kept, otherwise 0 (g_bar)
  4. multiplier M = 1 - clip(lambda * g_bar, 0, 1), applied to all three channels
"""

import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gradients import GradMap, grad_magnitude, normalize
from imagecore import ImageRGB, as_image, to_luminance

logger = logging.getLogger(__name__)


class LgsParams(BaseModel):
    """Smoothing factor, block side, block overlap and block-mean threshold."""
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    lam: float = Field(2.3, alias='lambda', ge=0.0)
    block: int = Field(15, ge=1)
    overlap: int = Field(5, ge=0)
    threshold: float = Field(0.1, ge=0.0, le=1.0)
    windowed: bool = True

    @model_validator(mode='after')
    def _overlap_below_block(self):
        if self.overlap >= self.block:
            raise ValueError(f"overlap ({self.overlap}) must be smaller than block ({self.block})")
        return self

    @property
    def stride(self) -> int:
        return self.block - self.overlap


class BlockGrid(BaseModel):
    """Row and column anchors of the block windows; every block is block_h x block_w."""
    model_config = ConfigDict(frozen=True)

    height: int
    width: int
    block_h: int
    block_w: int
    row_anchors: tuple[int, ...]
    col_anchors: tuple[int, ...]

    @property
    def anchors(self) -> list[tuple[int, int]]:
        return [(h, w) for h in self.row_anchors for w in self.col_anchors]

    def __len__(self) -> int:
        return len(self.row_anchors) * len(self.col_anchors)


class LgsStages(BaseModel):
    """Every intermediate of one LGS pass (the inspection panels)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: LgsParams
    luminance: np.ndarray
    grad: np.ndarray
    grid: BlockGrid | None
    means: np.ndarray | None
    kept: np.ndarray | None
    windowed: np.ndarray
    mask: np.ndarray
    multiplier: np.ndarray
    output: np.ndarray

    @property
    def kept_blocks(self) -> int:
        return 0 if self.kept is None else int(self.kept.sum())


def _axis_anchors(dim: int, block: int, stride: int) -> tuple[int, ...]:
    anchors = list(range(0, dim - block + 1, stride))
    if anchors[-1] != dim - block:
        anchors.append(dim - block)
    return tuple(anchors)


def make_grid(height: int, width: int, params: LgsParams) -> BlockGrid:
    """Block anchors covering a height x width image.

    An image smaller than the block in either axis gets a single block equal
    to the whole image.
    """
    if height < 1 or width < 1:
        raise ValueError(f"Image must be at least 1x1, got {height}x{width}")

    if height < params.block or width < params.block:
        logger.debug("Image %dx%d smaller than block %d, using one block", height, width, params.block)
        return BlockGrid(height=height, width=width, block_h=height, block_w=width,
                         row_anchors=(0,), col_anchors=(0,))

    return BlockGrid(
        height=height,
        width=width,
        block_h=params.block,
        block_w=params.block,
        row_anchors=_axis_anchors(height, params.block, params.stride),
        col_anchors=_axis_anchors(width, params.block, params.stride),
    )


def block_means(g: GradMap, grid: BlockGrid) -> np.ndarray:
    """Mean of g over each block, shape (row anchors, column anchors)."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (grid.height, grid.width):
        raise ValueError(f"Map shape {g.shape} does not match grid {grid.height}x{grid.width}")
    windows = sliding_window_view(g, (grid.block_h, grid.block_w))
    picked = windows[np.ix_(grid.row_anchors, grid.col_anchors)]
    return picked.mean(axis=(-2, -1))


def _kept_mask(kept: np.ndarray, grid: BlockGrid) -> np.ndarray:
    mask = np.zeros((grid.height, grid.width), dtype=bool)
    for i, j in zip(*np.nonzero(kept)):
        h = grid.row_anchors[i]
        w = grid.col_anchors[j]
        mask[h:h + grid.block_h, w:w + grid.block_w] = True
    return mask


def filter_blocks(g: GradMap, grid: BlockGrid, gamma: float) -> GradMap:
    """Zero every pixel not covered by at least one block whose mean exceeds gamma."""
    kept = block_means(g, grid) > gamma
    return np.where(_kept_mask(kept, grid), g, 0.0)


def lgs_stages(img: ImageRGB, params: LgsParams | None = None) -> LgsStages:
    params = params or LgsParams()
    img = as_image(img)
    height, width = img.shape[:2]

    y = to_luminance(img)
    g = normalize(grad_magnitude(y))

    if params.windowed:
        grid = make_grid(height, width, params)
        means = block_means(g, grid)
        kept = means > params.threshold
        mask = _kept_mask(kept, grid)
        g_bar = np.where(mask, g, 0.0)
    else:
        grid = means = kept = None
        mask = g > 0.0
        g_bar = g

    multiplier = 1.0 - np.clip(params.lam * g_bar, 0.0, 1.0)
    output = img * multiplier[:, :, np.newaxis]

    logger.debug("LGS %dx%d: %d/%d blocks kept, mask fraction %.4f",
                 height, width, 0 if kept is None else int(kept.sum()),
                 0 if grid is None else len(grid), mask.mean())

    return LgsStages(
        params=params,
        luminance=y,
        grad=g,
        grid=grid,
        means=means,
        kept=kept,
        windowed=g_bar,
        mask=mask,
        multiplier=multiplier,
        output=output,
    )


def lgs_transform(img: ImageRGB, params: LgsParams | None = None) -> ImageRGB:
    return lgs_stages(img, params).output


def estimate_mask(img: ImageRGB, params: LgsParams | None = None) -> np.ndarray:
    """Boolean noise-location estimate: the union of kept blocks."""
    return lgs_stages(img, params).mask

