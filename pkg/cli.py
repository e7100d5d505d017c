#!/usr/bin/env python3
"""
Command-line front end for the LGS toolkit.

Commands:
  defend    apply one defense to every input image
  simulate  paste a localized-noise patch into every input, write image + mask
  evaluate  patch, defend and measure; writes reports.jsonl / reports.csv / run_config.json
  batch     run every defense of a grid on every input; writes runtime.csv
  inspect   write the gradient / windowed / mask / multiplier panels of one LGS pass

Settings come from (lowest to highest priority): built-in defaults, .env /
environment (LGS_WORKERS, LGS_LOG_LEVEL, LGS_OUTPUT_DIR), --config FILE, flags.

Exit status is 0 only when every input was processed.
"""

import argparse
import glob
import json
import logging
import os
import sys
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

sys.path.insert(0, str(Path(__file__).parent / 'scripts'))

from baselines import DefenseConfig, DefenseKind, PARAM_MODELS, get_grid, parse_kind  # noqa: E402
from imagecore import save_image, save_plane  # noqa: E402
from lgs import LgsParams  # noqa: E402
from patchsim import PATCH_PRESETS, PatchSpec  # noqa: E402
from reports import write_csv, write_jsonl, write_run_config, write_runtime_csv  # noqa: E402
from runner import batch_file, defend_file, evaluate_file, inspect_file, run_tasks, simulate_file  # noqa: E402

load_dotenv()

COMMANDS = ('defend', 'simulate', 'evaluate', 'batch', 'inspect')
GLOB_CHARS = set('*?[')
EMIT_FORMATS = ('png', 'ppm', 'json', 'csv')
EMIT_ALIASES = {'pnm': 'ppm', 'pgm': 'ppm'}

# flag dest -> parameter name in the defense records
DEFENSE_FLAGS = {
    'lam': 'lambda',
    'block': 'block',
    'overlap': 'overlap',
    'gamma': 'threshold',
    'window': 'window',
    'sigma': 'sigma',
    'sigma_space': 'sigma_space',
    'sigma_range': 'sigma_range',
    'depth': 'depth',
    'quality': 'quality',
    'weight': 'weight',
    'max_iters': 'max_iters',
    'tol': 'tol',
}


class RunConfig(BaseModel):
    """Effective configuration of one CLI run (echoed into every report)."""
    command: Literal['defend', 'simulate', 'evaluate', 'batch', 'inspect']
    inputs: list[str] = Field(default_factory=list)
    output_dir: str = 'data/out'
    defense: DefenseConfig | None = None
    defenses: list[DefenseConfig] = Field(default_factory=list)
    grid: str | None = None
    patch: PatchSpec | None = None
    workers: int = Field(1, ge=1)
    emit: list[str] = Field(default_factory=list)
    seed: int | None = Field(None, ge=0)
    dump_intermediates: bool = False
    timing: bool = True

    @field_validator('emit')
    @classmethod
    def _known_formats(cls, value: list[str]) -> list[str]:
        formats = [EMIT_ALIASES.get(e.strip().lower(), e.strip().lower()) for e in value]
        unknown = [e for e in formats if e not in EMIT_FORMATS]
        if unknown:
            raise ValueError(f"Unknown --emit format(s) {unknown} (expected {'|'.join(EMIT_FORMATS)} or pnm)")
        return formats

    @model_validator(mode='after')
    def _required_parts(self):
        if self.command == 'defend' and self.defense is None:
            raise ValueError("defend needs a defense")
        if self.command == 'simulate' and self.patch is None:
            raise ValueError("simulate needs a patch (--patch PRESET or --size N)")
        if self.command == 'evaluate':
            if self.patch is None:
                raise ValueError("evaluate needs a patch (--patch PRESET or --size N)")
            if not self.defenses:
                raise ValueError("evaluate needs at least one defense (--defense or --grid)")
        if self.command == 'batch' and not self.defenses:
            raise ValueError("batch needs a defense grid")
        return self

    def echo(self) -> dict:
        data = self.model_dump(exclude={'defense', 'defenses'}, mode='json')
        data['defense'] = self.defense.to_dict() if self.defense else None
        data['defenses'] = [d.label() for d in self.defenses]
        return data


def _add_defense_flags(parser: argparse.ArgumentParser, multi_lambda: bool = False) -> None:
    group = parser.add_argument_group('defense')
    group.add_argument('--defense', help=f"Defense kind ({', '.join(k.value for k in DefenseKind)}; default lgs)")
    group.add_argument('--lambda', dest='lam', type=float, nargs='+' if multi_lambda else None,
                       help='LGS smoothing factor (default 2.3)' + ('; several values make a sweep' if multi_lambda else ''))
    group.add_argument('--block', type=int, help='LGS block side in pixels (default 15)')
    group.add_argument('--overlap', type=int, help='LGS block overlap in pixels (default 5)')
    group.add_argument('--gamma', type=float, help='LGS block-mean threshold (default 0.1)')
    group.add_argument('--global', dest='global_lgs', action='store_true', default=None,
                       help='LGS without the block search (whole normalized map)')
    group.add_argument('--window', type=int, help='Filter window, odd (mf 3, gf/bf 5, lgs-mf 3)')
    group.add_argument('--sigma', type=float, help='Gaussian sigma (default window/6)')
    group.add_argument('--sigma-space', type=float, help='Bilateral spatial sigma (default window/6)')
    group.add_argument('--sigma-range', type=float, help='Bilateral range sigma (default 0.1)')
    group.add_argument('--depth', type=int, help='Bit depth 1..8 (default 3)')
    group.add_argument('--quality', type=int, help='JPEG quality 1..100 (default 30)')
    group.add_argument('--weight', type=float, help='TVM weight on the 8-bit scale (default 10)')
    group.add_argument('--max-iters', type=int, help='TVM iteration cap (default 200)')
    group.add_argument('--tol', type=float, help='TVM relative stopping tolerance (default 2e-4)')


def _add_patch_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('patch')
    group.add_argument('--patch', choices=sorted(PATCH_PRESETS), help='Patch size preset')
    group.add_argument('--size', type=int, help='Patch side in pixels (instead of --patch)')
    group.add_argument('--placement', choices=['border', 'explicit'], help='Patch placement (default border)')
    group.add_argument('--top', type=int, help='Explicit placement: top row')
    group.add_argument('--left', type=int, help='Explicit placement: left column')
    group.add_argument('--margin', type=int, help='Border band width in pixels (default 75, or the patch size when larger)')
    group.add_argument('--noise', choices=['uniform', 'checkerboard', 'solid'], help='Noise source (default uniform)')
    group.add_argument('--period', type=int, help='Checkerboard square side (default 2)')
    group.add_argument('--value', type=float, help='Solid noise value in [0, 1] (default 1.0)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Local gradients smoothing and baseline input-transformation defenses')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p, emit_choices):
        p.add_argument('inputs', nargs='*', help='Input images or glob patterns (PNG, PPM, PGM)')
        p.add_argument('-o', '--output', dest='output_dir', help='Output directory (default $LGS_OUTPUT_DIR or data/out)')
        p.add_argument('--config', help='JSON run configuration; flags override it')
        p.add_argument('--workers', type=int, help='Worker processes (default $LGS_WORKERS or 1)')
        p.add_argument('--seed', type=int, help='Seed for patch placement and noise')
        p.add_argument('--emit', help=f"Output formats, comma separated ({'|'.join(emit_choices)})")

    p = sub.add_parser('defend', help='Apply a defense to images')
    common(p, ['png', 'ppm', 'pnm'])
    _add_defense_flags(p)
    p.add_argument('--dump-intermediates', action='store_true', default=None,
                   help='Also write gradient map, windowed map, mask and multiplier panels')

    p = sub.add_parser('simulate', help='Write patched images and ground-truth masks')
    common(p, ['png', 'ppm', 'pnm'])
    _add_patch_flags(p)

    p = sub.add_parser('evaluate', help='Measure defenses on patched images')
    common(p, ['json', 'csv'])
    _add_patch_flags(p)
    _add_defense_flags(p, multi_lambda=True)
    p.add_argument('--grid', help="Named defense grid (table1, fair, lambda-sweep)")
    p.add_argument('--no-timing', dest='timing', action='store_false', default=None,
                   help='Leave runtime_ms empty so reports are byte-identical across runs')

    p = sub.add_parser('batch', help='Run a defense grid over images and time it')
    common(p, ['png', 'ppm', 'pnm'])
    p.add_argument('--grid', help='Named defense grid (default table1)')

    p = sub.add_parser('inspect', help='Write the LGS panels for images')
    common(p, ['png', 'ppm', 'pnm'])
    _add_defense_flags(p)

    return parser


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"Could not read config file {path}: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must hold a JSON object")
    return data


def _defense_from(args, base: dict | None, lam: float | None = None) -> DefenseConfig:
    base = base or {}
    kind = parse_kind(getattr(args, 'defense', None) or base.get('kind') or 'lgs')
    params = dict(base.get('params') or {}) if parse_kind(base.get('kind') or kind) == kind else {}

    accepted = set()
    for name, field in PARAM_MODELS[kind].model_fields.items():
        accepted.add(field.alias or name)

    for dest, key in DEFENSE_FLAGS.items():
        value = getattr(args, dest, None)
        if dest == 'lam' and lam is not None:
            value = lam
        elif dest == 'lam' and isinstance(value, list):
            value = value[0] if len(value) == 1 else None
            if value is None:
                raise ValueError("--lambda takes a single value for this command")
        if value is not None and key in accepted:
            params[key] = value
    if getattr(args, 'global_lgs', None) and 'windowed' in accepted:
        params['windowed'] = False

    return DefenseConfig(kind=kind, params=params)


def _patch_from(args, base: dict | None, seed: int | None) -> PatchSpec | None:
    data = dict(base or {})
    noise = dict(data.get('noise') or {})

    if getattr(args, 'patch', None):
        data['preset'] = args.patch
        data['size'] = PATCH_PRESETS[args.patch]
    elif getattr(args, 'size', None) is not None:
        data['size'] = args.size
        data.pop('preset', None)
    elif data.get('preset') and 'size' not in data:
        data['size'] = PATCH_PRESETS.get(data['preset'], -1)

    if 'size' not in data:
        return None

    for name in ('placement', 'top', 'left', 'margin'):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if data.get('placement') is None and getattr(args, 'top', None) is not None:
        data['placement'] = 'explicit'

    if getattr(args, 'noise', None):
        noise['kind'] = args.noise
    if getattr(args, 'period', None) is not None:
        noise['period'] = args.period
    if getattr(args, 'value', None) is not None:
        noise['value'] = args.value
    if seed is not None:
        data['seed'] = seed
        noise['seed'] = seed
    data['noise'] = noise

    return PatchSpec(**data)


def build_run_config(args) -> RunConfig:
    """Merge defaults, environment, the config file and flags (flags win)."""
    file_cfg = _load_config_file(args.config)
    command = args.command

    seed = args.seed if args.seed is not None else file_cfg.get('seed')
    workers = args.workers or file_cfg.get('workers') or int(os.getenv('LGS_WORKERS', '1'))
    output_dir = args.output_dir or file_cfg.get('output_dir') or os.getenv('LGS_OUTPUT_DIR', 'data/out')
    inputs = list(args.inputs) or list(file_cfg.get('inputs') or [])

    emit = file_cfg.get('emit') or []
    if args.emit:
        emit = [e.strip().lower() for e in args.emit.split(',') if e.strip()]

    defense = None
    defenses: list[DefenseConfig] = []
    grid = getattr(args, 'grid', None) or file_cfg.get('grid')

    if command in ('defend', 'inspect'):
        defense = _defense_from(args, file_cfg.get('defense'))
        if command == 'inspect' and defense.kind not in (DefenseKind.LGS, DefenseKind.LGS_MF):
            raise ValueError("inspect works on the LGS defense only")
    elif command == 'evaluate':
        if grid:
            defenses = get_grid(grid)
        else:
            lams = args.lam if args.lam else [None]
            defenses = [_defense_from(args, file_cfg.get('defense'), lam=lam) for lam in lams]
        defense = defenses[0] if len(defenses) == 1 else None
    elif command == 'batch':
        grid = grid or 'table1'
        defenses = get_grid(grid)

    patch = None
    if command in ('simulate', 'evaluate'):
        patch = _patch_from(args, file_cfg.get('patch'), seed)

    timing = getattr(args, 'timing', None)
    if timing is None:
        timing = file_cfg.get('timing', True)
    dump = getattr(args, 'dump_intermediates', None)
    if dump is None:
        dump = bool(file_cfg.get('dump_intermediates', False))

    return RunConfig(
        command=command,
        inputs=inputs,
        output_dir=output_dir,
        defense=defense,
        defenses=defenses,
        grid=grid if command in ('evaluate', 'batch') else None,
        patch=patch,
        workers=workers,
        emit=emit,
        seed=seed,
        dump_intermediates=dump,
        timing=timing,
    )


def expand_inputs(patterns: list[str]) -> list[Path]:
    """Expand glob patterns; a pattern that matches nothing is an error."""
    if not patterns:
        raise ValueError("No input images given")
    paths = []
    for pattern in patterns:
        if GLOB_CHARS & set(pattern):
            matches = sorted(glob.glob(pattern))
            if not matches:
                raise ValueError(f"No inputs match '{pattern}'")
            paths.extend(Path(m) for m in matches)
        else:
            paths.append(Path(pattern))
    return paths


def _image_emit(cfg: RunConfig) -> str | None:
    formats = [e for e in cfg.emit if e in ('png', 'ppm')]
    return formats[0] if formats else None


def _report_errors(results: list[dict]) -> int:
    failed = [r for r in results if not r['ok']]
    for r in failed:
        print(f"ERROR: {r['name']}: {r['error']}", file=sys.stderr)
    return len(failed)


def cmd_defend(cfg: RunConfig) -> int:
    paths = expand_inputs(cfg.inputs)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    print(f"Defense: {cfg.defense.label()}")
    tasks = [{'path': str(p), 'output_dir': str(out_dir), 'defense': cfg.defense,
              'emit': _image_emit(cfg), 'dump_intermediates': cfg.dump_intermediates} for p in paths]

    results = []
    for i, result in enumerate(run_tasks(defend_file, tasks, cfg.workers), 1):
        results.append(result)
        status = '✓' if result['ok'] else '✗'
        print(f"[{i}/{len(tasks)}] {status} {result['name']}")

    failed = _report_errors(results)
    print(f"\n✓ Wrote {len(results) - failed} image(s) to {out_dir}")
    return 1 if failed else 0


def cmd_simulate(cfg: RunConfig) -> int:
    paths = expand_inputs(cfg.inputs)
    out_dir = Path(cfg.output_dir)
    ext = _image_emit(cfg) or 'png'

    print(f"Patch: {cfg.patch.label()}")
    tasks = [{'path': str(p), 'patch': cfg.patch} for p in paths]
    results = list(run_tasks(simulate_file, tasks, cfg.workers))

    geometry = [r for r in results if r.get('error_type') == 'GeometryError']
    if geometry:
        _report_errors(geometry)
        print("ERROR: patch geometry invalid; nothing written", file=sys.stderr)
        return 1

    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for result in results:
        if not result['ok']:
            continue
        try:
            save_image(result['patched'], out_dir / f"{result['stem']}_patched.{ext}")
            save_plane(result['mask'].astype(float), out_dir / f"{result['stem']}_mask.pgm")
            written += 1
        except OSError as e:
            result.update(ok=False, error=str(e))

    failed = _report_errors(results)
    print(f"✓ Wrote {written} patched image(s) and mask(s) to {out_dir}")
    return 1 if failed else 0


def cmd_evaluate(cfg: RunConfig) -> int:
    paths = expand_inputs(cfg.inputs)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit = set(cfg.emit) or {'json', 'csv'}

    print(f"Patch: {cfg.patch.label()}")
    print(f"Defenses: {len(cfg.defenses)}")
    tasks = [{'path': str(p), 'patch': cfg.patch, 'defenses': cfg.defenses, 'timing': cfg.timing}
             for p in paths]

    results = []
    reports = []
    for i, result in enumerate(run_tasks(evaluate_file, tasks, cfg.workers), 1):
        results.append(result)
        if result['ok']:
            reports.extend(result['reports'])
            print(f"[{i}/{len(tasks)}] ✓ {result['name']} ({len(result['reports'])} reports)")
        else:
            print(f"[{i}/{len(tasks)}] ✗ {result['name']}")

    run_config = cfg.echo()
    write_run_config(run_config, out_dir / 'run_config.json')
    if 'json' in emit:
        write_jsonl(reports, out_dir / 'reports.jsonl', run_config)
        print(f"✓ Wrote {len(reports)} reports to {out_dir / 'reports.jsonl'}")
    if 'csv' in emit:
        rows = write_csv(reports, out_dir / 'reports.csv')
        print(f"✓ Wrote {rows} rows to {out_dir / 'reports.csv'}")

    failed = _report_errors(results)
    return 1 if failed else 0


def cmd_batch(cfg: RunConfig) -> int:
    paths = expand_inputs(cfg.inputs)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    print(f"Grid: {cfg.grid} ({len(cfg.defenses)} defenses)")
    tasks = [{'path': str(p), 'output_dir': str(out_dir), 'defenses': cfg.defenses,
              'emit': _image_emit(cfg)} for p in paths]

    results = []
    timings: dict[str, list[float]] = {d.label(): [] for d in cfg.defenses}
    for i, result in enumerate(run_tasks(batch_file, tasks, cfg.workers), 1):
        results.append(result)
        if result['ok']:
            for label, ms in result['timings'].items():
                timings[label].append(ms)
        print(f"[{i}/{len(tasks)}] {'✓' if result['ok'] else '✗'} {result['name']}")

    write_runtime_csv({k: v for k, v in timings.items() if v}, out_dir / 'runtime.csv')
    print(f"✓ Wrote runtime comparison to {out_dir / 'runtime.csv'}")

    failed = _report_errors(results)
    return 1 if failed else 0


def cmd_inspect(cfg: RunConfig) -> int:
    paths = expand_inputs(cfg.inputs)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    params: LgsParams = cfg.defense.params
    tasks = [{'path': str(p), 'output_dir': str(out_dir), 'params': params, 'emit': _image_emit(cfg)}
             for p in paths]

    results = []
    for result in run_tasks(inspect_file, tasks, cfg.workers):
        results.append(result)
        if result['ok']:
            print(f"{result['name']}: K={result['blocks']} blocks, kept={result['kept_blocks']}, "
                  f"mask fraction={result['mask_fraction']:.4f}")

    failed = _report_errors(results)
    return 1 if failed else 0


HANDLERS = {
    'defend': cmd_defend,
    'simulate': cmd_simulate,
    'evaluate': cmd_evaluate,
    'batch': cmd_batch,
    'inspect': cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.getenv('LGS_LOG_LEVEL', 'WARNING').upper(),
                        format='%(levelname)s %(name)s: %(message)s')
    args = build_parser().parse_args(argv)

    try:
        cfg = build_run_config(args)
    except ValidationError as e:
        print(f"ERROR: invalid configuration:\n{e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 2

    try:
        return HANDLERS[cfg.command](cfg)
    except ValueError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
