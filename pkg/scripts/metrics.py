"""
Defense measurements used as proxies for the missing classifier.

- gradient energy: mean luminance gradient magnitude (not normalized) over the
  patch mask eroded by one pixel; the suppression ratio is after / before
- structural loss: PSNR and mean absolute change over the off-patch region,
  i.e. the complement of the mask dilated by one pixel
- localization: coverage and excess of the LGS mask estimate against the truth
"""

import logging
import math
import time

import numpy as np
from pydantic import BaseModel, ConfigDict, field_serializer
from scipy import ndimage

from baselines import DefenseConfig, apply_defense, is_window_search
from gradients import grad_magnitude
from imagecore import ImageRGB, as_image, to_luminance
from lgs import lgs_stages
from patchsim import PatchSpec, simulate

logger = logging.getLogger(__name__)

SQUARE = np.ones((3, 3), dtype=bool)

CSV_FIELDS = [
    'defense',
    'params',
    'patch',
    'image',
    'grad_energy_before',
    'grad_energy_after',
    'suppression_ratio',
    'psnr_outside_mask',
    'mean_abs_change_outside',
    'localization_coverage',
    'localization_excess',
    'runtime_ms',
]

METRIC_FIELDS = CSV_FIELDS[4:]


class EmptyRegionError(ValueError):
    """A measurement region (eroded mask, off-patch area, PSNR region) has no pixels."""


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    image: str
    defense: DefenseConfig
    patch: PatchSpec | None
    grad_energy_before: float
    grad_energy_after: float
    suppression_ratio: float | None
    psnr_outside_mask: float
    mean_abs_change_outside: float
    localization_coverage: float | None = None
    localization_excess: float | None = None
    runtime_ms: float | None = None
    proxy: bool = True

    @field_serializer('defense')
    def _defense_dict(self, defense: DefenseConfig) -> dict:
        return defense.to_dict()

    def sort_key(self) -> tuple[str, str, str]:
        return (self.defense.label(), self.patch.label() if self.patch else '', self.image)

    def as_row(self) -> dict:
        """Flat CSV row in CSV_FIELDS order."""
        row = {
            'defense': self.defense.label(),
            'params': self.defense.params_str(),
            'patch': self.patch.label() if self.patch else '',
            'image': self.image,
        }
        for field in METRIC_FIELDS:
            row[field] = getattr(self, field)
        return row


def erode(mask: np.ndarray) -> np.ndarray:
    return ndimage.binary_erosion(mask, structure=SQUARE, border_value=0)


def dilate(mask: np.ndarray) -> np.ndarray:
    return ndimage.binary_dilation(mask, structure=SQUARE)


def off_patch_region(mask: np.ndarray) -> np.ndarray:
    return ~dilate(np.asarray(mask, dtype=bool))


def masked_grad_energy(img: ImageRGB, mask: np.ndarray) -> float:
    """Mean gradient magnitude over the one-pixel erosion of mask."""
    img = as_image(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    interior = erode(mask)
    if not interior.any():
        raise EmptyRegionError("mask interior is empty after one-pixel erosion")
    return float(grad_magnitude(to_luminance(img))[interior].mean())


def psnr(a: ImageRGB, b: ImageRGB, region: np.ndarray | None = None) -> float:
    """PSNR in dB with peak 1.0; math.inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")

    if region is not None:
        region = np.asarray(region, dtype=bool)
        if not region.any():
            raise EmptyRegionError("PSNR region is empty")
        diff = a[region] - b[region]
    else:
        diff = a - b

    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def localization_scores(estimated: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """(coverage, excess) of an estimated mask against the true mask."""
    estimated = np.asarray(estimated, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if estimated.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimated.shape} vs {truth.shape}")

    n_truth = int(truth.sum())
    n_est = int(estimated.sum())
    hit = int(np.logical_and(estimated, truth).sum())

    coverage = hit / n_truth if n_truth else 0.0
    excess = (n_est - hit) / n_est if n_est else 0.0
    return coverage, excess


def suppression_ratio(before: float, after: float) -> float | None:
    """after / before; 0/0 is 1 and a ratio against zero energy is not measurable (None)."""
    if before == 0.0:
        return 1.0 if after == 0.0 else None
    return after / before


def evaluate(img: ImageRGB, spec: PatchSpec | None, defense: DefenseConfig,
             image_name: str = '', timing: bool = True) -> EvalReport:
    """Patch img per spec (if any), run the defense and measure it."""
    img = as_image(img)
    if spec is not None:
        patched, mask = simulate(img, spec)
        energy_region = mask
        off_region = off_patch_region(mask)
        if not off_region.any():
            raise EmptyRegionError("patch leaves no off-patch region to measure")
    else:
        patched = img
        mask = None
        energy_region = np.ones(img.shape[:2], dtype=bool)
        off_region = energy_region

    start = time.perf_counter()
    defended = apply_defense(patched, defense)
    runtime_ms = (time.perf_counter() - start) * 1000.0

    if spec is not None:
        before = masked_grad_energy(patched, energy_region)
        after = masked_grad_energy(defended, energy_region)
    else:
        before = float(grad_magnitude(to_luminance(patched)).mean())
        after = float(grad_magnitude(to_luminance(defended)).mean())

    coverage = excess = None
    if mask is not None and is_window_search(defense):
        coverage, excess = localization_scores(lgs_stages(patched, defense.params).mask, mask)

    report = EvalReport(
        image=image_name,
        defense=defense,
        patch=spec,
        grad_energy_before=before,
        grad_energy_after=after,
        suppression_ratio=suppression_ratio(before, after),
        psnr_outside_mask=psnr(defended, patched, off_region),
        mean_abs_change_outside=float(np.abs(defended - patched)[off_region].mean()),
        localization_coverage=coverage,
        localization_excess=excess,
        runtime_ms=runtime_ms if timing else None,
    )
    logger.debug("%s on %s: ratio %s", defense.label(), image_name or '<array>', report.suppression_ratio)
    return report


def summarize(reports: list[EvalReport]) -> list[dict]:
    """One row per defense label with the mean of every metric (empty values skipped)."""
    groups: dict[str, list[EvalReport]] = {}
    for report in reports:
        groups.setdefault(report.defense.label(), []).append(report)

    rows = []
    for label in sorted(groups):
        members = groups[label]
        row = {
            'defense': label,
            'params': members[0].defense.params_str(),
            'patch': 'mean',
            'image': f"n={len(members)}",
        }
        for field in METRIC_FIELDS:
            values = [getattr(r, field) for r in members if getattr(r, field) is not None]
            row[field] = float(np.mean(values)) if values else None
        rows.append(row)
    return rows
