"""
Report sinks: reports.jsonl, reports.csv, run_config.json and runtime.csv.

Rows are sorted by (defense label, patch label, image) before writing so the
files do not depend on worker scheduling.
"""

import csv
import json
from pathlib import Path

from metrics import CSV_FIELDS, EvalReport, summarize

RUNTIME_FIELDS = ['defense', 'images', 'total_ms', 'mean_ms']


def sort_reports(reports: list[EvalReport]) -> list[EvalReport]:
    return sorted(reports, key=lambda r: r.sort_key())


def write_jsonl(reports: list[EvalReport], output_path: Path, run_config: dict | None = None) -> None:
    """One JSON object per line; each echoes the effective run configuration."""
    with open(output_path, 'w', encoding='utf-8') as f:
        for report in sort_reports(reports):
            record = report.model_dump()
            record['defense_label'] = report.defense.label()
            if run_config is not None:
                record['run_config'] = run_config
            f.write(json.dumps(record, sort_keys=True) + '\n')


def write_csv(reports: list[EvalReport], output_path: Path, with_summary: bool = True) -> int:
    """Per-evaluation rows followed by one mean row per defense. Returns rows written."""
    rows = [r.as_row() for r in sort_reports(reports)]
    if with_summary:
        rows.extend(summarize(reports))

    with open(output_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: '' if row.get(k) is None else row[k] for k in CSV_FIELDS})
    return len(rows)


def write_run_config(run_config: dict, output_path: Path) -> None:
    with open(output_path, 'w', encoding='utf-8') as f:
        json.dump(run_config, f, indent=2, sort_keys=True)
        f.write('\n')


def write_runtime_csv(timings: dict[str, list[float]], output_path: Path) -> None:
    """Per-defense image count, total and mean wall-clock milliseconds."""
    with open(output_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=RUNTIME_FIELDS)
        writer.writeheader()
        for label in sorted(timings):
            values = timings[label]
            total = sum(values)
            writer.writerow({
                'defense': label,
                'images': len(values),
                'total_ms': f"{total:.3f}",
                'mean_ms': f"{total / len(values):.3f}" if values else '',
            })


def read_csv(path: Path) -> list[dict]:
    with open(path, 'r', encoding='utf-8') as f:
        return list(csv.DictReader(f))
