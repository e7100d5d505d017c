#!/usr/bin/env python3
"""
Validate an evaluate run directory (reports.csv, reports.jsonl, run_config.json).

Usage:
    python scripts/validate_reports.py data/out
"""

import argparse
import json
import math
import sys
from collections import Counter, defaultdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from metrics import CSV_FIELDS  # noqa: E402
from reports import read_csv  # noqa: E402

WINDOW_SEARCH_PREFIXES = ('LGS [', 'LGS-global [', 'LGS+MF')


def _number(value: str):
    """Parsed float, None for an empty cell, or the raw string when it is not numeric."""
    if value == '':
        return None
    try:
        return float(value)
    except ValueError:
        return value


def validate(run_dir: Path) -> list[dict]:
    violations = []

    def violation(rule, issue, fix, rows=None):
        violations.append({'rule': rule, 'issue': issue, 'fix': fix, 'rows': rows or []})

    csv_path = run_dir / 'reports.csv'
    jsonl_path = run_dir / 'reports.jsonl'
    config_path = run_dir / 'run_config.json'

    print("=" * 60)
    print("VALIDATION REPORT")
    print("=" * 60)

    # A. File existence
    print("\nA. File Existence")
    print("-" * 60)
    for path in (csv_path, config_path):
        if path.exists():
            print(f"✓ PASS: {path.name} exists")
        else:
            violation('A1', f'{path.name} does not exist', 'Re-run evaluate with --emit csv')
            print(f"❌ FAIL: {path.name} does not exist")
    if not csv_path.exists():
        return violations

    rows = read_csv(csv_path)
    for i, row in enumerate(rows, start=2):  # row 1 is the header
        row['_row_num'] = i
    detail = [r for r in rows if r.get('patch') != 'mean']
    summary = [r for r in rows if r.get('patch') == 'mean']
    print(f"\nTotal rows (excluding header): {len(rows)} ({len(detail)} evaluations, {len(summary)} summary)")

    # B. Columns
    print("\nB. Required Columns")
    print("-" * 60)
    actual = [c for c in (rows[0].keys() if rows else []) if c != '_row_num']
    if actual == CSV_FIELDS:
        print("✓ PASS: Columns match the report layout")
    else:
        missing = [c for c in CSV_FIELDS if c not in actual]
        violation('B1', f'Column mismatch (missing {missing})', 'Regenerate reports.csv with the current toolkit')
        print(f"❌ FAIL: Column mismatch, missing {missing}")

    # C. Value ranges
    print("\nC. Value Ranges")
    print("-" * 60)
    bad_values = defaultdict(list)
    for row in detail:
        ref = {'row': row['_row_num'], 'defense': row['defense'], 'image': row['image']}
        for field in ('grad_energy_before', 'grad_energy_after', 'suppression_ratio',
                      'mean_abs_change_outside'):
            value = _number(row[field])
            if value is None and field == 'suppression_ratio':
                continue
            if not isinstance(value, float) or value < 0:
                bad_values['C1'].append({**ref, 'field': field, 'value': row[field]})
        value = _number(row['psnr_outside_mask'])
        if not isinstance(value, float) or math.isnan(value):
            bad_values['C2'].append({**ref, 'field': 'psnr_outside_mask', 'value': row['psnr_outside_mask']})
        for field in ('localization_coverage', 'localization_excess'):
            value = _number(row[field])
            if value is not None and (not isinstance(value, float) or not 0.0 <= value <= 1.0):
                bad_values['C3'].append({**ref, 'field': field, 'value': row[field]})
        runtime = _number(row['runtime_ms'])
        if runtime is not None and (not isinstance(runtime, float) or runtime < 0):
            bad_values['C4'].append({**ref, 'field': 'runtime_ms', 'value': row['runtime_ms']})

    rules = {
        'C1': ('energy', 'Negative or non-numeric energy / change values', 'Check the defense output range'),
        'C2': ('psnr', 'Non-numeric PSNR', 'PSNR must be a number or inf'),
        'C3': ('localization', 'Localization scores outside [0, 1]', 'Check localization_scores'),
        'C4': ('runtime', 'Negative or non-numeric runtime', 'Check timing code'),
    }
    for rule, (name, issue, fix) in rules.items():
        if bad_values[rule]:
            violation(rule, f"{issue}: {len(bad_values[rule])}", fix, bad_values[rule])
            print(f"❌ FAIL: {issue} ({len(bad_values[rule])} cells)")
        else:
            print(f"✓ PASS: {name} values in range")

    # D. Localization only for window-search defenses
    print("\nD. Localization Columns")
    print("-" * 60)
    wrong = []
    for row in detail:
        windowed = row['defense'].startswith(WINDOW_SEARCH_PREFIXES)
        has_scores = row['localization_coverage'] != ''
        if has_scores != windowed:
            wrong.append({'row': row['_row_num'], 'defense': row['defense'], 'image': row['image']})
    if wrong:
        violation('D1', f'{len(wrong)} rows with localization on the wrong defenses',
                  'Only LGS and LGS+MF rows carry localization scores', wrong)
        print(f"❌ FAIL: {len(wrong)} rows with misplaced localization scores")
    else:
        print("✓ PASS: Localization filled exactly for LGS rows")

    # E. Ordering, duplicates and summary rows
    print("\nE. Ordering, Duplicates & Summary")
    print("-" * 60)
    keys = [(r['defense'], r['patch'], r['image']) for r in detail]
    if keys != sorted(keys):
        violation('E1', 'Evaluation rows are not sorted by (defense, patch, image)',
                  'Write reports through reports.write_csv')
        print("❌ FAIL: Rows not sorted")
    else:
        print("✓ PASS: Rows sorted by (defense, patch, image)")

    dupes = [k for k, n in Counter(keys).items() if n > 1]
    if dupes:
        violation('E2', f'{len(dupes)} duplicate evaluation keys', 'Check for repeated inputs',
                  [{'defense': d, 'patch': p, 'image': i} for d, p, i in dupes])
        print(f"❌ FAIL: {len(dupes)} duplicate keys")
    else:
        print("✓ PASS: No duplicate evaluations")

    counts = Counter(r['defense'] for r in detail)
    summary_defenses = {r['defense']: r for r in summary}
    if set(summary_defenses) != set(counts):
        violation('E3', 'Summary rows do not match the evaluated defenses', 'Regenerate with summary rows')
        print("❌ FAIL: Summary rows missing or extra")
    else:
        mismatched = [d for d, r in summary_defenses.items() if r['image'] != f"n={counts[d]}"]
        if mismatched:
            violation('E4', f'Summary counts wrong for {mismatched}', 'Regenerate reports.csv')
            print(f"❌ FAIL: Summary counts wrong for {len(mismatched)} defenses")
        else:
            print(f"✓ PASS: One summary row per defense ({len(summary)})")

    # F. JSON lines agree with the CSV
    print("\nF. JSON Lines")
    print("-" * 60)
    if jsonl_path.exists():
        with open(jsonl_path, 'r', encoding='utf-8') as f:
            records = [json.loads(line) for line in f if line.strip()]
        if len(records) != len(detail):
            violation('F1', f'{len(records)} JSON records vs {len(detail)} CSV rows',
                      'Emit json and csv from the same run')
            print("❌ FAIL: Record count differs from the CSV")
        else:
            print(f"✓ PASS: {len(records)} records match the CSV rows")
        if any('run_config' not in r for r in records):
            violation('F2', 'Records without run_config echo', 'Write reports through reports.write_jsonl')
            print("❌ FAIL: Missing run_config echo")
    else:
        print("- reports.jsonl not emitted, skipped")

    return violations


def main():
    parser = argparse.ArgumentParser(description='Validate an evaluate run directory')
    parser.add_argument('run_dir', nargs='?', default='data/out', help='Directory written by cli.py evaluate')
    args = parser.parse_args()

    violations = validate(Path(args.run_dir))

    # Final verdict
    if violations:
        print(f"\n❌ FAIL: {len(violations)} violation(s) found")
    else:
        print("\n✓ PASS: All checks passed!")

    # Violations detail
    if violations:
        print("\n" + "=" * 60)
        print("VIOLATIONS")
        print("=" * 60)
        for i, v in enumerate(violations, 1):
            print(f"\n{i}. Rule {v['rule']}: {v['issue']}")
            print(f"   Fix: {v['fix']}")
            if v['rows']:
                print("   Affected rows:")
                for r in v['rows'][:5]:
                    where = f"Row {r['row']}: " if 'row' in r else ''
                    print(f"     - {where}{r.get('defense', 'N/A')} / {r.get('image', 'N/A')}"
                          + (f" {r['field']}={r['value']!r}" if 'field' in r else ''))
                if len(v['rows']) > 5:
                    print(f"     ... and {len(v['rows']) - 5} more")

    return 0 if not violations else 1


if __name__ == '__main__':
    sys.exit(main())
