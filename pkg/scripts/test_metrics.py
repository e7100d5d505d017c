#!/usr/bin/env python3
"""
Tests for the defense measurements and report rows.

Validates:
1) PSNR / localization / suppression ratio on hand-computed examples
2) identity defenses leave every proxy untouched
3) the LGS suppression scenario: noise patch on a constant 0.5 background
4) localization of the window search over border placements
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from baselines import DefenseConfig  # noqa: E402
from metrics import (CSV_FIELDS, EmptyRegionError, erode, evaluate, localization_scores,  # noqa: E402
                     masked_grad_energy, off_patch_region, psnr, summarize, suppression_ratio)
from lgs import LgsParams, estimate_mask  # noqa: E402
from patchsim import NoiseSpec, PatchSpec, simulate  # noqa: E402


def gray(size: int = 128) -> np.ndarray:
    return np.full((size, size, 3), 0.5)


def explicit_patch(size: int = 42, top: int = 40, left: int = 40, **noise) -> PatchSpec:
    return PatchSpec(size=size, placement='explicit', top=top, left=left, noise=NoiseSpec(**noise))


def test_psnr_examples():
    a = np.zeros((4, 4, 3))
    assert psnr(a, a) == math.inf
    assert psnr(a, np.ones((4, 4, 3))) == pytest.approx(0.0)
    assert psnr(a, np.full((4, 4, 3), 0.5)) == pytest.approx(6.0206, abs=1e-4)


def test_psnr_region():
    a = np.zeros((4, 4, 3))
    b = a.copy()
    b[0, 0] = 1.0
    region = np.ones((4, 4), dtype=bool)
    region[0, 0] = False
    assert psnr(a, b, region) == math.inf
    with pytest.raises(EmptyRegionError):
        psnr(a, b, np.zeros((4, 4), dtype=bool))


def test_localization_examples():
    truth = np.zeros((299, 299), dtype=bool)
    truth[:42, :42] = True
    assert localization_scores(truth, truth) == (1.0, 0.0)
    coverage, excess = localization_scores(np.ones_like(truth), truth)
    assert coverage == 1.0
    assert excess == pytest.approx(1 - 1764 / 89401)
    assert localization_scores(np.zeros_like(truth), truth) == (0.0, 0.0)


def test_suppression_ratio_edge_cases():
    assert suppression_ratio(0.0, 0.0) == 1.0
    assert suppression_ratio(2.0, 0.5) == 0.25
    assert suppression_ratio(0.0, 0.3) is None


def test_flat_patch_roughened_by_defense_has_no_ratio():
    # a solid patch has no interior gradient; the blur drags the background into it
    img = np.full((64, 64, 3), 0.2)
    spec = explicit_patch(size=12, top=20, left=20, kind='solid', value=1.0)
    report = evaluate(img, spec, DefenseConfig.of('gf', window=5), timing=False)
    assert report.grad_energy_before == 0.0
    assert report.grad_energy_after > 0.0
    assert report.suppression_ratio is None
    row = summarize([report])[0]
    assert row['suppression_ratio'] is None


def test_erosion_and_off_patch_region():
    mask = np.zeros((10, 10), dtype=bool)
    mask[2:6, 3:8] = True
    assert erode(mask).sum() == 2 * 3
    off = off_patch_region(mask)
    assert off.sum() == 100 - 6 * 7
    # erosion treats the image border as outside
    edge = np.zeros((10, 10), dtype=bool)
    edge[:4, :4] = True
    assert erode(edge).sum() == 4


def test_masked_grad_energy_constant_and_empty():
    mask = np.zeros((20, 20), dtype=bool)
    mask[5:12, 5:12] = True
    assert masked_grad_energy(gray(20), mask) == 0.0
    thin = np.zeros((20, 20), dtype=bool)
    thin[5, :] = True
    with pytest.raises(EmptyRegionError):
        masked_grad_energy(gray(20), thin)


def test_lambda_zero_changes_nothing():
    report = evaluate(gray(), explicit_patch(seed=1), DefenseConfig.of('lgs', **{'lambda': 0.0}))
    assert report.suppression_ratio == 1.0
    assert report.psnr_outside_mask == math.inf
    assert report.mean_abs_change_outside == 0.0


def test_eight_bit_depth_is_identity_on_patched_8bit_image():
    img = np.full((96, 96, 3), 128 / 255)
    report = evaluate(img, explicit_patch(top=10, left=10, seed=2), DefenseConfig.of('br', depth=8))
    assert report.suppression_ratio == 1.0
    assert report.localization_coverage is None
    assert report.localization_excess is None


def test_uniform_patch_suppressed_background_untouched():
    report = evaluate(gray(), explicit_patch(seed=7), DefenseConfig.of('lgs'), image_name='gray.png')
    assert report.grad_energy_before > 0.0
    assert report.suppression_ratio < 1.0
    assert report.mean_abs_change_outside == 0.0
    assert report.psnr_outside_mask == math.inf
    assert report.localization_coverage >= 0.9


def test_checkerboard_patch_fully_suppressed():
    report = evaluate(gray(), explicit_patch(kind='checkerboard', period=2), DefenseConfig.of('lgs'))
    assert report.suppression_ratio == 0.0
    assert report.mean_abs_change_outside == 0.0


def test_localization_over_border_placements():
    img = gray(299)
    for seed in range(50):
        spec = PatchSpec.from_preset('lavan42', seed=seed, noise=NoiseSpec(seed=seed))
        patched, truth = simulate(img, spec)
        coverage, excess = localization_scores(estimate_mask(patched, LgsParams()), truth)
        assert coverage >= 0.9, f"seed {seed}: coverage {coverage:.3f}"
        assert excess <= 0.5, f"seed {seed}: excess {excess:.3f}"


def test_unpatched_evaluation():
    img = np.random.default_rng(0).random((32, 32, 3))
    report = evaluate(img, None, DefenseConfig.of('mf'), timing=False)
    assert report.patch is None
    assert report.runtime_ms is None
    assert report.suppression_ratio < 1.0


def test_patch_covering_image_rejected():
    with pytest.raises(EmptyRegionError):
        evaluate(gray(42), explicit_patch(top=0, left=0), DefenseConfig.of('lgs'))


def test_rows_and_summary():
    spec = explicit_patch(seed=3)
    reports = [evaluate(gray(), spec, DefenseConfig.of('jpeg', quality=q), image_name=name, timing=False)
               for q in (30, 80) for name in ('a.png', 'b.png')]
    row = reports[0].as_row()
    assert list(row) == CSV_FIELDS
    assert row['defense'] == 'JPEG [quality=30]'
    assert row['params'] == 'quality=30'
    assert row['localization_coverage'] is None

    summary = summarize(reports)
    assert [r['defense'] for r in summary] == ['JPEG [quality=30]', 'JPEG [quality=80]']
    assert summary[0]['image'] == 'n=2'
    expected = np.mean([r.suppression_ratio for r in reports[:2]])
    assert summary[0]['suppression_ratio'] == pytest.approx(expected)
    assert summary[0]['runtime_ms'] is None


def test_report_serializes_defense_record():
    report = evaluate(gray(64), explicit_patch(size=10, top=5, left=5), DefenseConfig.of('tvm', weight=10),
                      timing=False)
    dumped = report.model_dump()
    assert dumped['defense'] == {'kind': 'tvm', 'params': {'weight': 10.0, 'max_iters': 200, 'tol': 2e-4}}
    assert dumped['proxy'] is True


def main():
    print("Running metrics tests...\n")

    tests = [
        ("PSNR examples", test_psnr_examples),
        ("PSNR region", test_psnr_region),
        ("Localization examples", test_localization_examples),
        ("Suppression ratio edge cases", test_suppression_ratio_edge_cases),
        ("Flat patch has no ratio", test_flat_patch_roughened_by_defense_has_no_ratio),
        ("Erosion / off-patch region", test_erosion_and_off_patch_region),
        ("Masked energy constant/empty", test_masked_grad_energy_constant_and_empty),
        ("lambda=0", test_lambda_zero_changes_nothing),
        ("8-bit depth identity", test_eight_bit_depth_is_identity_on_patched_8bit_image),
        ("Uniform patch scenario", test_uniform_patch_suppressed_background_untouched),
        ("Checkerboard patch scenario", test_checkerboard_patch_fully_suppressed),
        ("Localization, 50 placements", test_localization_over_border_placements),
        ("Unpatched evaluation", test_unpatched_evaluation),
        ("Patch covering image", test_patch_covering_image_rejected),
        ("Rows and summary", test_rows_and_summary),
        ("Report serialization", test_report_serializes_defense_record),
    ]

    failed = []
    for test_name, test_func in tests:
        try:
            test_func()
            print(f"✓ PASS: {test_name}")
        except Exception as e:
            print(f"FAIL: {test_name}: {e!r}")
            failed.append(test_name)

    print("\n" + "=" * 50)
    if failed:
        print(f"✗ SOME TESTS FAILED ({len(tests) - len(failed)}/{len(tests)})")
        return 1
    print(f"✓ ALL TESTS PASSED ({len(tests)}/{len(tests)})")
    return 0


if __name__ == '__main__':
    sys.exit(main())
