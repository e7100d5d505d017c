"""
Comparison defenses and the single dispatch used by the CLI and the metrics harness.

Kinds:
  lgs     local gradients smoothing
  lgs-mf  LGS followed by a median filter inside the estimated mask
  mf      median filter
  gf      Gaussian filter
  bf      bilateral filter
  br      bit depth reduction
  jpeg    lossy JPEG round trip
  tvm     total variation minimization

All filters pad borders by edge replication.
"""

import re
from enum import Enum
from typing import Annotated, Any

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage
from skimage.restoration import denoise_bilateral

from imagecore import ImageRGB, as_image
from jpeg import jpeg_transform
from lgs import LgsParams, lgs_stages
from tvm import DEFAULT_MAX_ITERS, DEFAULT_TOL, tvm_denoise


class DefenseKind(str, Enum):
    LGS = 'lgs'
    LGS_MF = 'lgs-mf'
    MEDIAN = 'mf'
    GAUSSIAN = 'gf'
    BILATERAL = 'bf'
    BIT_DEPTH = 'br'
    JPEG = 'jpeg'
    TVM = 'tvm'


KIND_ALIASES = {
    'lgs': DefenseKind.LGS,
    'lgs-mf': DefenseKind.LGS_MF,
    'lgsmf': DefenseKind.LGS_MF,
    'mf': DefenseKind.MEDIAN,
    'median': DefenseKind.MEDIAN,
    'medianfilter': DefenseKind.MEDIAN,
    'gf': DefenseKind.GAUSSIAN,
    'gaussian': DefenseKind.GAUSSIAN,
    'gaussianfilter': DefenseKind.GAUSSIAN,
    'bf': DefenseKind.BILATERAL,
    'bilateral': DefenseKind.BILATERAL,
    'bilateralfilter': DefenseKind.BILATERAL,
    'br': DefenseKind.BIT_DEPTH,
    'bitdepth': DefenseKind.BIT_DEPTH,
    'jpeg': DefenseKind.JPEG,
    'tvm': DefenseKind.TVM,
    'tmv': DefenseKind.TVM,
}


def _odd_window(window: int) -> int:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 1, got {window}")
    return window


OddWindow = Annotated[int, AfterValidator(_odd_window)]


class MedianParams(BaseModel):
    model_config = ConfigDict(frozen=True)
    window: OddWindow = 3


class GaussianParams(BaseModel):
    model_config = ConfigDict(frozen=True)
    window: OddWindow = 5
    sigma: float | None = Field(None, gt=0.0)


class BilateralParams(BaseModel):
    model_config = ConfigDict(frozen=True)
    window: OddWindow = 5
    sigma_space: float | None = Field(None, gt=0.0)
    sigma_range: float = Field(0.1, gt=0.0)


class BitDepthParams(BaseModel):
    model_config = ConfigDict(frozen=True)
    depth: int = Field(3, ge=1, le=8)


class JpegParams(BaseModel):
    model_config = ConfigDict(frozen=True)
    quality: int = Field(30, ge=1, le=100)


class TvmParams(BaseModel):
    model_config = ConfigDict(frozen=True)
    weight: float = Field(10.0, gt=0.0)
    max_iters: int = Field(DEFAULT_MAX_ITERS, ge=1)
    tol: float = Field(DEFAULT_TOL, ge=0.0)


class LgsMfParams(LgsParams):
    window: OddWindow = 3


PARAM_MODELS: dict[DefenseKind, type[BaseModel]] = {
    DefenseKind.LGS: LgsParams,
    DefenseKind.LGS_MF: LgsMfParams,
    DefenseKind.MEDIAN: MedianParams,
    DefenseKind.GAUSSIAN: GaussianParams,
    DefenseKind.BILATERAL: BilateralParams,
    DefenseKind.BIT_DEPTH: BitDepthParams,
    DefenseKind.JPEG: JpegParams,
    DefenseKind.TVM: TvmParams,
}


def parse_kind(value) -> DefenseKind:
    if isinstance(value, DefenseKind):
        return value
    key = re.sub(r'[\s_]+', '', str(value)).lower()
    if key not in KIND_ALIASES:
        raise ValueError(f"Unknown defense kind '{value}' (expected one of {', '.join(k.value for k in DefenseKind)})")
    return KIND_ALIASES[key]


def _num(value: float) -> str:
    short = f"{value:g}"
    return short if float(short) == value else repr(float(value))


class DefenseConfig(BaseModel):
    """A defense kind plus its validated parameter record.

    Config-file form: {"kind": "jpeg", "params": {"quality": 30}}.
    """
    model_config = ConfigDict(frozen=True)

    kind: DefenseKind
    params: Any = None

    @model_validator(mode='before')
    @classmethod
    def _build_params(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = parse_kind(data.get('kind'))
        data['kind'] = kind
        model = PARAM_MODELS[kind]
        params = data.get('params')
        if params is None:
            params = model()
        elif isinstance(params, dict):
            params = model.model_validate(params)
        elif isinstance(params, BaseModel) and not isinstance(params, model):
            params = model.model_validate(params.model_dump(by_alias=True))
        data['params'] = params
        return data

    @classmethod
    def of(cls, kind, **params) -> 'DefenseConfig':
        return cls(kind=kind, params=params)

    def to_dict(self) -> dict:
        return {'kind': self.kind.value, 'params': self.params.model_dump(by_alias=True)}

    def params_str(self) -> str:
        """Compact key=value rendering of every parameter, for CSV rows."""
        items = self.params.model_dump(by_alias=True)
        return ';'.join(f"{k}={v}" for k, v in sorted(items.items()))

    def label(self) -> str:
        p = self.params
        kind = self.kind
        if kind in (DefenseKind.LGS, DefenseKind.LGS_MF):
            name = 'LGS' if kind == DefenseKind.LGS else 'LGS+MF'
            if not p.windowed:
                name += '-global'
            parts = [f"lambda={_num(p.lam)}"]
            defaults = LgsParams()
            if p.block != defaults.block:
                parts.append(f"block={p.block}")
            if p.overlap != defaults.overlap:
                parts.append(f"overlap={p.overlap}")
            if p.threshold != defaults.threshold:
                parts.append(f"gamma={_num(p.threshold)}")
            if kind == DefenseKind.LGS_MF:
                parts.append(f"window={p.window}")
            return f"{name} [{', '.join(parts)}]"
        if kind == DefenseKind.MEDIAN:
            return f"MF [window={p.window}]"
        if kind == DefenseKind.GAUSSIAN:
            extra = f", sigma={_num(p.sigma)}" if p.sigma is not None else ''
            return f"GF [window={p.window}{extra}]"
        if kind == DefenseKind.BILATERAL:
            extra = f", sigma_space={_num(p.sigma_space)}" if p.sigma_space is not None else ''
            if p.sigma_range != 0.1:
                extra += f", sigma_range={_num(p.sigma_range)}"
            return f"BF [window={p.window}{extra}]"
        if kind == DefenseKind.BIT_DEPTH:
            return f"BR [depth={p.depth}]"
        if kind == DefenseKind.JPEG:
            return f"JPEG [quality={p.quality}]"
        parts = [f"weight={_num(p.weight)}"]
        if p.max_iters != DEFAULT_MAX_ITERS:
            parts.append(f"max_iters={p.max_iters}")
        if p.tol != DEFAULT_TOL:
            parts.append(f"tol={_num(p.tol)}")
        return f"TVM [{', '.join(parts)}]"

    def slug(self) -> str:
        """Filesystem-safe form of the label."""
        return re.sub(r'[^a-z0-9.+]+', '-', self.label().lower()).strip('-')


# Filters

def median_filter(img: ImageRGB, window: int = 3) -> ImageRGB:
    _odd_window(window)
    img = as_image(img)
    if window == 1:
        return img.copy()
    return ndimage.median_filter(img, size=(window, window, 1), mode='nearest')


def gaussian_kernel(window: int, sigma: float | None = None) -> np.ndarray:
    """Truncated 1-D Gaussian of the given odd length, renormalized to unit sum."""
    _odd_window(window)
    sigma = window / 6.0 if sigma is None else sigma
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x = np.arange(window, dtype=np.float64) - window // 2
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_filter(img: ImageRGB, window: int = 5, sigma: float | None = None) -> ImageRGB:
    kernel = gaussian_kernel(window, sigma)
    img = as_image(img)
    out = ndimage.convolve1d(img, kernel, axis=0, mode='nearest')
    out = ndimage.convolve1d(out, kernel, axis=1, mode='nearest')
    return np.clip(out, 0.0, 1.0)


def bilateral_filter(img: ImageRGB, window: int = 5, sigma_space: float | None = None,
                     sigma_range: float = 0.1) -> ImageRGB:
    """Per-channel bilateral filter (scikit-image), edge-replicated borders."""
    _odd_window(window)
    sigma_space = window / 6.0 if sigma_space is None else sigma_space
    if sigma_space <= 0 or sigma_range <= 0:
        raise ValueError(f"sigmas must be > 0, got sigma_space={sigma_space}, sigma_range={sigma_range}")

    img = as_image(img)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        plane = img[:, :, c]
        if plane.min() == plane.max():
            out[:, :, c] = plane
            continue
        out[:, :, c] = denoise_bilateral(plane, win_size=window, sigma_color=sigma_range,
                                         sigma_spatial=sigma_space, mode='edge', channel_axis=None)
    return np.clip(out, 0.0, 1.0)


def bit_depth_reduce(img: ImageRGB, depth: int = 3) -> ImageRGB:
    """Uniform quantization to 2**depth levels, round-half-up."""
    if isinstance(depth, bool) or int(depth) != depth or not 1 <= depth <= 8:
        raise ValueError(f"depth must be an integer in [1, 8], got {depth}")
    levels = 2 ** int(depth) - 1
    img = as_image(img)
    return np.floor(img * levels + 0.5) / levels


def lgs_median(img: ImageRGB, params: LgsMfParams) -> ImageRGB:
    """LGS, then a median filter applied only where the window search flagged noise."""
    stages = lgs_stages(img, params)
    if not stages.mask.any():
        return stages.output
    smoothed = median_filter(stages.output, params.window)
    return np.where(stages.mask[:, :, np.newaxis], smoothed, stages.output)


def apply_defense(img: ImageRGB, defense: DefenseConfig) -> ImageRGB:
    p = defense.params
    kind = defense.kind
    if kind == DefenseKind.LGS:
        return lgs_stages(img, p).output
    if kind == DefenseKind.LGS_MF:
        return lgs_median(img, p)
    if kind == DefenseKind.MEDIAN:
        return median_filter(img, p.window)
    if kind == DefenseKind.GAUSSIAN:
        return gaussian_filter(img, p.window, p.sigma)
    if kind == DefenseKind.BILATERAL:
        return bilateral_filter(img, p.window, p.sigma_space, p.sigma_range)
    if kind == DefenseKind.BIT_DEPTH:
        return bit_depth_reduce(img, p.depth)
    if kind == DefenseKind.JPEG:
        return jpeg_transform(img, p.quality)
    if kind == DefenseKind.TVM:
        return tvm_denoise(img, p.weight, p.max_iters, p.tol)
    raise ValueError(f"Unsupported defense kind: {kind}")


def is_window_search(defense: DefenseConfig) -> bool:
    return defense.kind in (DefenseKind.LGS, DefenseKind.LGS_MF)


# Named grids

def _grid(*entries) -> list[DefenseConfig]:
    return [DefenseConfig(kind=kind, params=params) for kind, params in entries]


LAMBDA_SWEEP = (1.5, 1.7, 1.9, 2.1, 2.3)

GRIDS: dict[str, list[DefenseConfig]] = {
    'table1': _grid(
        *[('lgs', {'lambda': lam}) for lam in (2.3, 2.1, 1.9, 1.7, 1.5)],
        ('mf', {'window': 3}),
        ('gf', {'window': 5}),
        ('bf', {'window': 5}),
        *[('jpeg', {'quality': q}) for q in (80, 60, 40, 30, 20, 10)],
        *[('tvm', {'weight': w}) for w in (10, 20, 30)],
        *[('br', {'depth': d}) for d in (1, 2, 3)],
    ),
    'fair': _grid(
        ('lgs', {'lambda': 2.3}),
        ('mf', {'window': 3}),
        ('jpeg', {'quality': 30}),
        ('tvm', {'weight': 10}),
        ('br', {'depth': 3}),
    ),
    'lambda-sweep': _grid(*[('lgs', {'lambda': lam}) for lam in LAMBDA_SWEEP]),
}


def get_grid(name: str) -> list[DefenseConfig]:
    if name not in GRIDS:
        raise ValueError(f"Unknown defense grid '{name}' (expected one of {', '.join(GRIDS)})")
    return list(GRIDS[name])
