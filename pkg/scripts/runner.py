"""
Per-file units of work for the CLI and the worker pool that runs them.

Every task takes one picklable dict and returns a dict with at least
'name', 'ok' and 'error', so one bad input never stops the others.
Results come back in submission order whatever the worker count.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from baselines import DefenseConfig, apply_defense, is_window_search
from gradients import export_gradmap, grad_magnitude
from imagecore import load_image, save_image, save_plane, to_luminance
from lgs import lgs_stages
from metrics import evaluate
from patchsim import PatchSpec, simulate

logger = logging.getLogger(__name__)


def run_tasks(fn: Callable[[dict], dict], tasks: list[dict], workers: int = 1) -> Iterator[dict]:
    """Yield fn(task) for every task, in order; a process pool when workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield fn(task)
        return

    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield from executor.map(fn, tasks)


def _failure(name: str, error: Exception) -> dict:
    logger.debug("Task %s failed", name, exc_info=error)
    return {'name': name, 'ok': False, 'error': str(error)}


def output_name(path: Path, emit: str | None) -> str:
    """Output file name: the input name, or its stem with the emit extension."""
    if emit is None:
        return path.name if path.suffix.lower() in ('.png', '.ppm', '.pgm', '.pnm') else f"{path.stem}.png"
    return f"{path.stem}.{emit}"


def write_lgs_panels(img, params, out_dir: Path, stem: str, ext: str) -> dict:
    """Gradient, windowed map, mask, multiplier and defended image of one LGS pass."""
    stages = lgs_stages(img, params)
    export_gradmap(stages.grad, out_dir / f"{stem}_grad.pgm")
    save_plane(stages.windowed, out_dir / f"{stem}_windowed.pgm")
    save_plane(stages.mask.astype(np.float64), out_dir / f"{stem}_mask.pgm")
    save_plane(stages.multiplier, out_dir / f"{stem}_multiplier.pgm")
    save_image(stages.output, out_dir / f"{stem}_lgs.{ext}")
    return {
        'blocks': 0 if stages.grid is None else len(stages.grid),
        'kept_blocks': stages.kept_blocks,
        'mask_fraction': float(stages.mask.mean()),
    }


def defend_file(task: dict) -> dict:
    path = Path(task['path'])
    out_dir = Path(task['output_dir'])
    defense: DefenseConfig = task['defense']
    try:
        img = load_image(path)
        out = apply_defense(img, defense)
        out_path = out_dir / output_name(path, task.get('emit'))
        save_image(out, out_path)

        if task.get('dump_intermediates'):
            if is_window_search(defense):
                write_lgs_panels(img, defense.params, out_dir, path.stem, task.get('emit') or 'png')
            else:
                export_gradmap(grad_magnitude(to_luminance(img)), out_dir / f"{path.stem}_grad.pgm")
                export_gradmap(grad_magnitude(to_luminance(out)), out_dir / f"{path.stem}_defended_grad.pgm")
        return {'name': path.name, 'ok': True, 'error': None, 'output': str(out_path)}
    except (OSError, ValueError) as e:
        return _failure(path.name, e)


def simulate_file(task: dict) -> dict:
    """Patched image and mask in memory; the caller writes them once every file validated."""
    path = Path(task['path'])
    spec: PatchSpec = task['patch']
    try:
        img = load_image(path)
        patched, mask = simulate(img, spec)
        return {'name': path.name, 'ok': True, 'error': None, 'stem': path.stem,
                'patched': patched, 'mask': mask}
    except (OSError, ValueError) as e:
        result = _failure(path.name, e)
        result['error_type'] = type(e).__name__
        return result


def evaluate_file(task: dict) -> dict:
    path = Path(task['path'])
    defenses: list[DefenseConfig] = task['defenses']
    try:
        img = load_image(path)
        reports = [evaluate(img, task['patch'], defense, image_name=path.name, timing=task.get('timing', True))
                   for defense in defenses]
        return {'name': path.name, 'ok': True, 'error': None, 'reports': reports}
    except (OSError, ValueError) as e:
        return _failure(path.name, e)


def batch_file(task: dict) -> dict:
    """Every defense of a grid on one image, timed per defense."""
    path = Path(task['path'])
    out_dir = Path(task['output_dir'])
    defenses: list[DefenseConfig] = task['defenses']
    try:
        img = load_image(path)
        timings = {}
        for defense in defenses:
            start = time.perf_counter()
            out = apply_defense(img, defense)
            timings[defense.label()] = (time.perf_counter() - start) * 1000.0

            target_dir = out_dir / defense.slug()
            target_dir.mkdir(parents=True, exist_ok=True)
            save_image(out, target_dir / output_name(path, task.get('emit')))
        return {'name': path.name, 'ok': True, 'error': None, 'timings': timings}
    except (OSError, ValueError) as e:
        return _failure(path.name, e)


def inspect_file(task: dict) -> dict:
    path = Path(task['path'])
    out_dir = Path(task['output_dir'])
    try:
        img = load_image(path)
        stats = write_lgs_panels(img, task['params'], out_dir, path.stem, task.get('emit') or 'png')
        return {'name': path.name, 'ok': True, 'error': None, **stats}
    except (OSError, ValueError) as e:
        return _failure(path.name, e)
