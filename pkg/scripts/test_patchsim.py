#!/usr/bin/env python3
"""
Tests for patch geometry, border sampling, noise rendering and composition.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).parent))

from patchsim import (GeometryError, NoiseSpec, PatchSpec, apply_patch, make_mask, render_noise,  # noqa: E402
                      resolve_location, sample_border_location, simulate)


def gray(height: int = 299, width: int = 299, value: float = 0.5) -> np.ndarray:
    return np.full((height, width, 3), value)


def test_mask_area_lavan42():
    spec = PatchSpec(size=42, placement='explicit', top=10, left=20)
    mask = make_mask(spec, 299, 299)
    assert mask.sum() == 1764
    assert mask[10:52, 20:62].all()


def test_full_and_empty_mask():
    assert make_mask(PatchSpec(size=30, placement='explicit', top=0, left=0), 30, 30).all()
    assert not make_mask(PatchSpec(size=0, placement='explicit', top=5, left=5), 30, 30).any()


def test_presets():
    spec = PatchSpec.from_preset('patch95', placement='explicit', top=0, left=0)
    assert spec.size == 95
    assert make_mask(spec, 299, 299).sum() == 9025
    with pytest.raises(ValueError):
        PatchSpec.from_preset('lavan99')
    with pytest.raises(ValidationError):
        PatchSpec(size=40, preset='lavan42')


def test_explicit_needs_anchor():
    with pytest.raises(ValidationError):
        PatchSpec(size=10, placement='explicit', top=3)


def test_border_samples_avoid_center():
    margin = 60
    for seed in range(10_000):
        top, left = sample_border_location(42, 299, 299, margin=margin, seed=seed)
        assert 0 <= top <= 299 - 42 and 0 <= left <= 299 - 42
        rows_hit = top < 299 - margin and top + 42 > margin
        cols_hit = left < 299 - margin and left + 42 > margin
        assert not (rows_hit and cols_hit)


def test_border_samples_reach_every_side():
    seen = set()
    for seed in range(400):
        top, left = sample_border_location(42, 299, 299, seed=seed)
        if top + 42 <= 75:
            seen.add('top')
        if top >= 299 - 75:
            seen.add('bottom')
        if left + 42 <= 75:
            seen.add('left')
        if left >= 299 - 75:
            seen.add('right')
    assert seen == {'top', 'bottom', 'left', 'right'}


def test_wide_margin_allows_anything():
    anchors = {sample_border_location(42, 100, 100, margin=50, seed=s) for s in range(2000)}
    tops = {t for t, _ in anchors}
    # with no central region the middle rows become reachable
    assert any(30 <= t <= 40 for t in tops)


def test_border_sampling_deterministic():
    a = [sample_border_location(52, 299, 299, seed=s) for s in range(20)]
    b = [sample_border_location(52, 299, 299, seed=s) for s in range(20)]
    assert a == b
    assert len(set(a)) > 1


def test_explicit_margin_smaller_than_patch():
    with pytest.raises(GeometryError):
        sample_border_location(95, 299, 299, margin=75)
    with pytest.raises(GeometryError):
        make_mask(PatchSpec.from_preset('patch95', margin=75), 299, 299)


def test_default_margin_widens_to_patch_size():
    assert PatchSpec.from_preset('lavan42').margin == 75
    assert PatchSpec.from_preset('patch95').margin == 95
    assert PatchSpec.from_preset('patch95', margin=120).margin == 120


def test_patch95_border_placement_at_defaults():
    for seed in range(50):
        spec = PatchSpec.from_preset('patch95', seed=seed, noise=NoiseSpec(seed=seed))
        patched, mask = simulate(gray(), spec)
        assert mask.sum() == 9025
        assert not mask[95:204, 95:204].any()
        assert np.array_equal(patched[~mask], gray()[~mask])


def test_explicit_out_of_bounds():
    spec = PatchSpec(size=42, placement='explicit', top=270, left=0)
    with pytest.raises(GeometryError):
        resolve_location(spec, 299, 299)
    with pytest.raises(GeometryError):
        sample_border_location(50, 40, 40, margin=60)


def test_apply_patch_zero_and_full_mask():
    img = np.random.default_rng(0).random((20, 20, 3))
    noise = np.random.default_rng(1).random((20, 20, 3))
    assert np.array_equal(apply_patch(img, np.zeros((20, 20), dtype=bool), noise), img)
    assert np.array_equal(apply_patch(img, np.ones((20, 20), dtype=bool), noise), noise)


def test_apply_patch_changes_only_mask():
    img = gray(64, 64, 0.25)
    spec = PatchSpec(size=16, placement='explicit', top=8, left=30, noise=NoiseSpec(kind='solid', value=0.75))
    patched, mask = simulate(img, spec)
    changed = np.any(patched != img, axis=2)
    assert np.array_equal(changed, mask)
    assert changed.sum() == 256


def test_apply_patch_idempotent():
    img = np.random.default_rng(3).random((50, 50, 3))
    spec = PatchSpec(size=20, placement='explicit', top=5, left=5, noise=NoiseSpec(seed=9))
    once, mask = simulate(img, spec)
    assert np.array_equal(apply_patch(once, mask, spec.noise), once)


def test_apply_patch_shape_checks():
    with pytest.raises(ValueError):
        apply_patch(gray(10, 10), np.zeros((9, 10), dtype=bool), NoiseSpec())
    with pytest.raises(ValueError):
        apply_patch(gray(10, 10), np.zeros((10, 10), dtype=bool), np.zeros((10, 10)))


def test_uniform_noise_statistics():
    delta = render_noise(NoiseSpec(seed=0), 200, 200)
    assert 0.45 <= delta.mean() <= 0.55
    plane = delta[:, :, 0]
    a = plane[:, :-1].ravel() - plane.mean()
    b = plane[:, 1:].ravel() - plane.mean()
    rho = float((a * b).mean() / np.sqrt((a * a).mean() * (b * b).mean()))
    assert abs(rho) < 0.05


def test_noise_on_8bit_grid():
    for noise in (NoiseSpec(seed=4), NoiseSpec(kind='checkerboard', period=3), NoiseSpec(kind='solid', value=0.3)):
        delta = render_noise(noise, 17, 23)
        levels = delta * 255
        assert np.allclose(levels, np.round(levels), atol=1e-9)
        assert delta.min() >= 0.0 and delta.max() <= 1.0


def test_checkerboard_layout():
    delta = render_noise(NoiseSpec(kind='checkerboard', period=2), 4, 4)[:, :, 0]
    assert delta.tolist() == [[0, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]]


def test_noise_depends_only_on_seed():
    a = render_noise(NoiseSpec(seed=12), 8, 8)
    b = render_noise(NoiseSpec(seed=12), 8, 8)
    c = render_noise(NoiseSpec(seed=13), 8, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 60))
def test_simulate_deterministic(seed, size):
    spec = PatchSpec(size=size, margin=max(size, 75), seed=seed, noise=NoiseSpec(seed=seed))
    img = gray(160, 160)
    a, mask_a = simulate(img, spec)
    b, mask_b = simulate(img, spec)
    assert np.array_equal(a, b) and np.array_equal(mask_a, mask_b)
    assert mask_a.sum() == size * size


def test_labels():
    spec = PatchSpec.from_preset('lavan42')
    assert spec.label() == 'lavan42 border(margin=75,seed=0) uniform(seed=0)'
    spec = PatchSpec(size=10, placement='explicit', top=1, left=2, noise=NoiseSpec(kind='checkerboard'))
    assert spec.label() == 'size10 at(1,2) checkerboard(period=2)'


def main():
    print("Running patch simulator tests...\n")

    tests = [
        ("Mask area lavan42", test_mask_area_lavan42),
        ("Full/empty mask", test_full_and_empty_mask),
        ("Presets", test_presets),
        ("Explicit anchor", test_explicit_needs_anchor),
        ("Border avoids center", test_border_samples_avoid_center),
        ("Border reaches all sides", test_border_samples_reach_every_side),
        ("Wide margin", test_wide_margin_allows_anything),
        ("Border determinism", test_border_sampling_deterministic),
        ("Margin < size", test_explicit_margin_smaller_than_patch),
        ("Default margin widens", test_default_margin_widens_to_patch_size),
        ("patch95 border placement", test_patch95_border_placement_at_defaults),
        ("Explicit out of bounds", test_explicit_out_of_bounds),
        ("Zero/full mask", test_apply_patch_zero_and_full_mask),
        ("Only mask changes", test_apply_patch_changes_only_mask),
        ("Idempotent", test_apply_patch_idempotent),
        ("Shape checks", test_apply_patch_shape_checks),
        ("Uniform statistics", test_uniform_noise_statistics),
        ("8-bit grid", test_noise_on_8bit_grid),
        ("Checkerboard layout", test_checkerboard_layout),
        ("Seeded noise", test_noise_depends_only_on_seed),
        ("Simulate determinism", test_simulate_deterministic),
        ("Labels", test_labels),
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
