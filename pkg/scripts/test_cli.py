#!/usr/bin/env python3
"""
End-to-end tests of the command-line front end (cli.py at the repo root).
"""

import csv
import io
import json
import os
import sys
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(0, str(Path(__file__).parent.parent))

import cli  # noqa: E402
from imagecore import load_image, load_mask, save_image  # noqa: E402
from metrics import psnr  # noqa: E402


def write_images(directory: Path, count: int = 1, size: int = 64, seed: int = 0) -> list[Path]:
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        path = directory / f"img{i}.png"
        save_image(rng.random((size, size, 3)), path)
        paths.append(path)
    return paths


def run(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def test_defend_lgs_never_brightens():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d)
        code, _, _ = run('defend', src, '-o', d / 'out', '--defense', 'lgs', '--lambda', '2.3')
        assert code == 0
        before = load_image(src)
        after = load_image(d / 'out' / src.name)
        assert np.all(after <= before)


def test_defend_median_on_constant_image():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        src = d / 'flat.ppm'
        save_image(np.full((20, 20, 3), 100 / 255), src)
        code, _, _ = run('defend', src, '-o', d / 'out', '--defense', 'mf', '--window', '3')
        assert code == 0
        assert (d / 'out' / 'flat.ppm').read_bytes() == src.read_bytes()


def test_defend_jpeg_and_dump():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d)
        code, _, _ = run('defend', src, '-o', d / 'out', '--defense', 'jpeg', '--quality', '30',
                         '--dump-intermediates')
        assert code == 0
        value = psnr(load_image(d / 'out' / src.name), load_image(src))
        assert np.isfinite(value)
        assert (d / 'out' / 'img0_grad.pgm').exists()
        assert (d / 'out' / 'img0_defended_grad.pgm').exists()


def test_invalid_params_exit_2():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d)
        code, _, err = run('defend', src, '-o', d / 'out', '--defense', 'mf', '--window', '4')
        assert code == 2
        assert 'window' in err


def test_simulate_deterministic_files():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d, size=299)
        for name in ('a', 'b'):
            code, _, _ = run('simulate', src, '-o', d / name, '--patch', 'lavan42', '--seed', '5')
            assert code == 0
        for fname in ('img0_patched.png', 'img0_mask.pgm'):
            assert (d / 'a' / fname).read_bytes() == (d / 'b' / fname).read_bytes()
        assert load_mask(d / 'a' / 'img0_mask.pgm').sum() == 1764


def test_simulate_explicit_patch95():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d, size=128)
        code, _, _ = run('simulate', src, '-o', d / 'out', '--patch', 'patch95',
                         '--placement', 'explicit', '--top', '0', '--left', '0', '--emit', 'ppm')
        assert code == 0
        mask = load_mask(d / 'out' / 'img0_mask.pgm')
        assert mask.sum() == 9025
        assert mask[:95, :95].all()
        assert (d / 'out' / 'img0_patched.ppm').exists()


def test_simulate_out_of_bounds_writes_nothing():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        write_images(d, count=2, size=64)
        code, _, err = run('simulate', d / 'img*.png', '-o', d / 'out', '--size', '42',
                           '--placement', 'explicit', '--top', '40', '--left', '0')
        assert code != 0
        assert 'ERROR' in err
        assert not (d / 'out').exists() or not any((d / 'out').iterdir())


def test_evaluate_lambda_sweep():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d)
        code, _, _ = run('evaluate', src, '-o', d / 'out', '--size', '20', '--placement', 'explicit',
                         '--top', '5', '--left', '5', '--lambda', '1.5', '2.3', '--no-timing')
        assert code == 0
        rows = list(csv.DictReader(open(d / 'out' / 'reports.csv', encoding='utf-8')))
        assert [r['defense'] for r in rows] == ['LGS [lambda=1.5]', 'LGS [lambda=2.3]'] * 2
        assert [r['patch'] for r in rows[2:]] == ['mean', 'mean']
        assert rows[0]['runtime_ms'] == ''
        assert rows[0]['localization_coverage'] != ''

        lines = (d / 'out' / 'reports.jsonl').read_text(encoding='utf-8').splitlines()
        assert len(lines) == 2
        record = json.loads(lines[0])
        assert record['defense_label'] == 'LGS [lambda=1.5]'
        assert record['run_config']['command'] == 'evaluate'
        assert json.loads((d / 'out' / 'run_config.json').read_text())['timing'] is False


def test_evaluate_empty_glob():
    with tempfile.TemporaryDirectory() as d:
        pattern = str(Path(d) / 'missing' / '*.png')
        code, _, err = run('evaluate', pattern, '-o', Path(d) / 'out', '--patch', 'lavan42')
        assert code != 0
        assert pattern in err


def test_evaluate_worker_count_does_not_change_csv():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        write_images(d, count=3, size=48, seed=4)
        common = ['--size', '12', '--margin', '12', '--seed', '3', '--grid', 'fair', '--no-timing']
        assert run('evaluate', d / 'img*.png', '-o', d / 'w1', '--workers', '1', *common)[0] == 0
        assert run('evaluate', d / 'img*.png', '-o', d / 'w2', '--workers', '2', *common)[0] == 0
        assert (d / 'w1' / 'reports.csv').read_bytes() == (d / 'w2' / 'reports.csv').read_bytes()


def test_simulate_patch95_default_border():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d, size=299)
        code, _, err = run('simulate', src, '-o', d / 'out', '--patch', 'patch95', '--seed', '4')
        assert code == 0, err
        mask = load_mask(d / 'out' / 'img0_mask.pgm')
        assert mask.sum() == 9025
        assert not mask[95:204, 95:204].any()


def test_emit_pnm_writes_ppm():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d, size=32)
        code, _, _ = run('defend', src, '-o', d / 'out', '--defense', 'br', '--emit', 'pnm')
        assert code == 0
        assert (d / 'out' / 'img0.ppm').exists()
        assert not (d / 'out' / 'img0.png').exists()


def test_unknown_emit_format_is_rejected():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d, size=32)
        code, _, err = run('defend', src, '-o', d / 'out', '--emit', 'jpg')
        assert code == 2
        assert 'jpg' in err
        assert not (d / 'out').exists()


def test_config_file_and_flag_precedence():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        config = d / 'run.json'
        config.write_text(json.dumps({
            'output_dir': str(d / 'from_config'),
            'workers': 3,
            'defense': {'kind': 'jpeg', 'params': {'quality': 30}},
        }))
        args = cli.build_parser().parse_args(['defend', 'x.png', '--config', str(config), '--quality', '80'])
        cfg = cli.build_run_config(args)
        assert cfg.defense.label() == 'JPEG [quality=80]'
        assert cfg.output_dir == str(d / 'from_config')
        assert cfg.workers == 3

        args = cli.build_parser().parse_args(['defend', 'x.png', '--config', str(config), '--workers', '1'])
        assert cli.build_run_config(args).workers == 1


def test_environment_defaults():
    saved = {k: os.environ.get(k) for k in ('LGS_WORKERS', 'LGS_OUTPUT_DIR')}
    try:
        os.environ['LGS_WORKERS'] = '2'
        os.environ['LGS_OUTPUT_DIR'] = 'env_out'
        cfg = cli.build_run_config(cli.build_parser().parse_args(['defend', 'x.png']))
        assert (cfg.workers, cfg.output_dir) == (2, 'env_out')
        assert cfg.defense.label() == 'LGS [lambda=2.3]'
    finally:
        for key, value in saved.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value


def test_batch_runtime_table():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        write_images(d, count=2, size=32)
        code, _, _ = run('batch', d / 'img*.png', '-o', d / 'out', '--grid', 'fair')
        assert code == 0
        rows = list(csv.DictReader(open(d / 'out' / 'runtime.csv', encoding='utf-8')))
        assert len(rows) == 5
        assert all(r['images'] == '2' for r in rows)
        assert (d / 'out' / 'lgs-lambda-2.3' / 'img0.png').exists()


def test_inspect_panels():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d, size=40)
        code, out, _ = run('inspect', src, '-o', d / 'out')
        assert code == 0
        assert 'K=' in out
        for suffix in ('_grad.pgm', '_windowed.pgm', '_mask.pgm', '_multiplier.pgm', '_lgs.png'):
            assert (d / 'out' / f"img0{suffix}").exists()


def test_missing_input_reports_and_continues():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        [src] = write_images(d)
        code, _, err = run('defend', src, d / 'nope.png', '-o', d / 'out')
        assert code == 1
        assert 'nope.png' in err
        assert (d / 'out' / src.name).exists()


def main():
    print("Running CLI tests...\n")

    tests = [(name[5:].replace('_', ' '), func) for name, func in globals().items()
             if name.startswith('test_') and callable(func)]

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
