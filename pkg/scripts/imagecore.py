"""
Raster representation, color conversion and file I/O shared by every other module.

Images are numpy float64 arrays with values in [0, 1]:
- ImagePlane: shape (H, W)
- ImageRGB:   shape (H, W, 3)

Only 8-bit PNG (RGB or gray) and binary PNM (P6/P5, maxval 255) are read or written.
"""

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

logger = logging.getLogger(__name__)

ImagePlane = np.ndarray
ImageRGB = np.ndarray

# Rec. 601 luma weights (same convention as the JPEG baseline color space)
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

PNG_SUFFIXES = {'.png'}
PNM_SUFFIXES = {'.ppm', '.pgm', '.pnm'}


class ImageIOError(OSError):
    """Unreadable, truncated, unsupported or unwritable image file."""


def as_image(array) -> ImageRGB:
    """Validate and return an (H, W, 3) float64 image with values in [0, 1]."""
    img = np.asarray(array, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"Expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"Image must be at least 1x1, got {img.shape[:2]}")
    if not np.all(np.isfinite(img)):
        raise ValueError("Image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"Image values must lie in [0, 1], got [{img.min()}, {img.max()}]")
    return img


def as_plane(array) -> ImagePlane:
    """Validate and return an (H, W) float64 plane."""
    plane = np.asarray(array, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] < 1 or plane.shape[1] < 1:
        raise ValueError(f"Expected a non-empty (H, W) plane, got shape {plane.shape}")
    return plane


def gray_to_rgb(plane: ImagePlane) -> ImageRGB:
    """Replicate a plane into three identical channels."""
    return np.repeat(as_plane(plane)[:, :, np.newaxis], 3, axis=2)


def to_luminance(img: ImageRGB) -> ImagePlane:
    """y = 0.299 R + 0.587 G + 0.114 B, clamped to [0, 1]."""
    wr, wg, wb = LUMA_WEIGHTS
    y = wr * img[:, :, 0] + wg * img[:, :, 1] + wb * img[:, :, 2]
    return np.clip(y, 0.0, 1.0)


def quantize_8bit(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 levels, round-half-up."""
    levels = np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(levels, 0, 255).astype(np.uint8)


def _read_pnm_header(path: Path) -> tuple[bytes, int, int, int]:
    """Parse magic, width, height and maxval from a binary PNM header."""
    with open(path, 'rb') as f:
        data = f.read(512)

    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        c = data[i:i + 1]
        if c == b'#':
            while i < len(data) and data[i:i + 1] not in (b'\n', b'\r'):
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < len(data) and not data[i:i + 1].isspace() and data[i:i + 1] != b'#':
                i += 1
            tokens.append(data[start:i])

    if len(tokens) < 4:
        raise ImageIOError(f"{path}: truncated PNM header")

    magic = tokens[0]
    if magic not in (b'P5', b'P6'):
        raise ImageIOError(f"{path}: unsupported PNM variant {magic.decode(errors='replace')} (only binary P5/P6)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ImageIOError(f"{path}: malformed PNM header")
    return magic, width, height, maxval


def _open_8bit(path: Path) -> np.ndarray:
    """Decode a file into a uint8 array of shape (H, W) or (H, W, 3)."""
    if not path.exists():
        raise ImageIOError(f"{path}: file does not exist")

    suffix = path.suffix.lower()
    if suffix in PNM_SUFFIXES:
        _, _, _, maxval = _read_pnm_header(path)
        if maxval != 255:
            raise ImageIOError(f"{path}: unsupported bit depth (maxval {maxval}, expected 255)")

    try:
        with Image.open(path) as im:
            if im.format not in ('PNG', 'PPM'):
                raise ImageIOError(f"{path}: unsupported format {im.format}")
            if im.mode not in ('L', 'RGB'):
                raise ImageIOError(f"{path}: unsupported bit depth or color mode {im.mode}")
            im.load()
            return np.asarray(im, dtype=np.uint8).copy()
    except ImageIOError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ImageIOError(f"{path}: could not decode image ({e})") from e


def load_image(path) -> ImageRGB:
    """Load an 8-bit PNG or binary PPM/PGM as an RGB image in [0, 1]."""
    path = Path(path)
    raw = _open_8bit(path)
    img = raw.astype(np.float64) / 255.0
    if img.ndim == 2:
        img = gray_to_rgb(img)
    logger.debug("Loaded %s (%dx%d)", path, img.shape[1], img.shape[0])
    return img


def load_plane(path) -> ImagePlane:
    """Load an 8-bit grayscale file as a plane; RGB files are reduced to luminance."""
    path = Path(path)
    raw = _open_8bit(path)
    if raw.ndim == 3:
        return to_luminance(raw.astype(np.float64) / 255.0)
    return raw.astype(np.float64) / 255.0


def load_mask(path) -> np.ndarray:
    """Load a mask file; values >= 0.5 are set."""
    return load_plane(path) >= 0.5


def _write(pil_image: Image.Image, path: Path) -> None:
    suffix = path.suffix.lower()
    if suffix in PNG_SUFFIXES:
        fmt = 'PNG'
    elif suffix in PNM_SUFFIXES:
        fmt = 'PPM'
    else:
        raise ImageIOError(f"{path}: unsupported output extension '{suffix}' (use .png, .ppm, .pgm)")
    try:
        pil_image.save(path, format=fmt)
    except (OSError, ValueError) as e:
        raise ImageIOError(f"{path}: could not write image ({e})") from e


def save_image(img: ImageRGB, path) -> None:
    """Write an RGB image as 8-bit PNG/PPM (or PGM when all planes are equal)."""
    path = Path(path)
    img = as_image(img)
    levels = quantize_8bit(img)

    if path.suffix.lower() == '.pgm':
        if not (np.array_equal(levels[:, :, 0], levels[:, :, 1])
                and np.array_equal(levels[:, :, 0], levels[:, :, 2])):
            raise ImageIOError(f"{path}: PGM output needs identical R, G and B planes")
        _write(Image.fromarray(levels[:, :, 0]), path)
    else:
        _write(Image.fromarray(levels), path)
    logger.debug("Saved %s", path)


def save_plane(plane, path) -> None:
    """Write a single [0, 1] plane (gradient map, mask, multiplier) as 8-bit gray."""
    path = Path(path)
    plane = np.clip(as_plane(plane), 0.0, 1.0)
    if path.suffix.lower() == '.ppm':
        _write(Image.fromarray(quantize_8bit(gray_to_rgb(plane))), path)
    else:
        _write(Image.fromarray(quantize_8bit(plane)), path)
