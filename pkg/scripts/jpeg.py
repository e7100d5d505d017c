"""
In-memory JPEG round trip: the lossy half of a baseline JPEG codec.

RGB -> YCbCr (JFIF, 0..255 scale) -> 4:2:0 chroma subsampling -> 8x8 DCT ->
quantize/dequantize with the quality-scaled standard tables -> inverse DCT ->
chroma upsampling -> RGB, clamped to [0, 1].

Entropy coding is lossless and is not performed.
"""

import numpy as np
from scipy.fft import dctn, idctn

from imagecore import ImageRGB, as_image

BLOCK = 8

# ITU-T T.81 Annex K.1, row-major
STD_Y_QT = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
], dtype=np.int64).reshape(BLOCK, BLOCK)

STD_UV_QT = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
], dtype=np.int64).reshape(BLOCK, BLOCK)


def _check_quality(quality: int) -> int:
    if isinstance(quality, bool) or int(quality) != quality or not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality}")
    return int(quality)


def jpeg_quant_tables(quality: int) -> tuple[np.ndarray, np.ndarray]:
    """Luma and chroma divisor tables for a quality setting (libjpeg scaling)."""
    quality = _check_quality(quality)
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality

    def scaled(table):
        return np.clip((table * scale + 50) // 100, 1, 255).astype(np.float64)

    return scaled(STD_Y_QT), scaled(STD_UV_QT)


def rgb_to_ycbcr(rgb255: np.ndarray) -> np.ndarray:
    r, g, b = rgb255[:, :, 0], rgb255[:, :, 1], rgb255[:, :, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return np.stack([y, cb, cr], axis=2)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y = ycc[:, :, 0]
    cb = ycc[:, :, 1] - 128.0
    cr = ycc[:, :, 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=2)


def _pad_to(plane: np.ndarray, multiple: int) -> np.ndarray:
    h, w = plane.shape
    pad_h = -h % multiple
    pad_w = -w % multiple
    if pad_h or pad_w:
        plane = np.pad(plane, ((0, pad_h), (0, pad_w)), mode='edge')
    return plane


def _code_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Quantize/dequantize one 0..255 plane through the 8x8 DCT."""
    h, w = plane.shape
    padded = _pad_to(plane, BLOCK)
    ph, pw = padded.shape

    blocks = padded.reshape(ph // BLOCK, BLOCK, pw // BLOCK, BLOCK).transpose(0, 2, 1, 3) - 128.0
    coeffs = dctn(blocks, axes=(-2, -1), norm='ortho')
    coeffs = np.round(coeffs / table) * table
    rec = idctn(coeffs, axes=(-2, -1), norm='ortho') + 128.0

    rec = rec.transpose(0, 2, 1, 3).reshape(ph, pw)
    return rec[:h, :w]


def _subsample(plane: np.ndarray) -> np.ndarray:
    """2x2 box average (4:2:0), odd sizes edge-padded first."""
    padded = _pad_to(plane, 2)
    ph, pw = padded.shape
    return padded.reshape(ph // 2, 2, pw // 2, 2).mean(axis=(1, 3))


def _upsample(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)[:height, :width]


def jpeg_transform(img: ImageRGB, quality: int = 80) -> ImageRGB:
    """Lossy JPEG encode/decode of an image, without entropy coding."""
    quality = _check_quality(quality)
    img = as_image(img)
    height, width = img.shape[:2]
    luma_table, chroma_table = jpeg_quant_tables(quality)

    ycc = rgb_to_ycbcr(img * 255.0)

    out = np.empty_like(ycc)
    out[:, :, 0] = _code_plane(ycc[:, :, 0], luma_table)
    for c in (1, 2):
        coded = _code_plane(_subsample(ycc[:, :, c]), chroma_table)
        out[:, :, c] = _upsample(coded, height, width)

    rgb = ycbcr_to_rgb(out)
    return np.clip(rgb / 255.0, 0.0, 1.0)
