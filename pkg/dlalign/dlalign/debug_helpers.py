# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Debug helpers for DLAlign runs
"""

import json
from pathlib import Path

from dlalign.dlalign.manifest import LOCK_NAME, STATUS_COMPLETED, load_manifest, stage_is_current
from dlalign.dlalign.utils import ERROR_LOG_NAME, read_csv


def check_run_status(out_dir):
	"""
	Print the stage table of a run manifest
	Useful for seeing where a failed pipeline stopped

	Args:
		out_dir: Run output directory

	Returns:
		dict: manifest
	"""
	out_dir = Path(out_dir)
	manifest = load_manifest(out_dir)

	print("\n" + "=" * 80)
	print(f"RUN STATUS: {out_dir}")
	print("=" * 80)
	print(f"Version: {manifest.get('version')}")
	print(f"Config hash: {manifest.get('config_hash', '')[:16]}")
	print(f"Seed: {manifest.get('seed')}")
	print(f"Created: {manifest.get('created')}")

	if (out_dir / LOCK_NAME).exists():
		print(f"\n⚠️  WARNING: {out_dir / LOCK_NAME} exists - another run may be active")

	stages = manifest.get("stages", {})
	if not stages:
		print("\nNo stages recorded yet")

	for stage, entry in stages.items():
		print(f"\nStage: {stage}")
		print(f"Status: {entry.get('status')}")
		if entry.get("status") == STATUS_COMPLETED:
			print(f"Verified: {stage_is_current(manifest, stage, out_dir)}")
		print(f"Finished: {entry.get('finished')}")
		print(f"Outputs: {len(entry.get('outputs', {}))}")
		if entry.get("detail", {}).get("error"):
			print(f"Error: {entry['detail']['error']}")
		print("-" * 80)

	if (out_dir / ERROR_LOG_NAME).exists():
		check_error_log(out_dir)

	return manifest


def check_error_log(out_dir, limit=10):
	"""
	Print the most recent error records of a run

	Args:
		out_dir: Run output directory
		limit: Number of records to show
	"""
	path = Path(out_dir) / ERROR_LOG_NAME
	print("\n" + "=" * 80)
	print(f"ERROR LOG (Last {limit})")
	print("=" * 80)

	if not path.exists():
		print("\nNo errors recorded")
		return []

	records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
	for record in records[-limit:]:
		print(f"\n{record['time']}  {record['title']}")
		print(record["message"])
		print("-" * 80)
	return records


def check_report(path):
	"""
	Print a CSV report as an aligned table

	Args:
		path: Report written by the evaluation stages
	"""
	rows = read_csv(path)
	if not rows:
		print(f"{path}: empty report")
		return rows

	columns = list(rows[0])
	widths = {c: max(len(c), *(len(_short(row[c])) for row in rows)) for c in columns}
	print("  ".join(c.ljust(widths[c]) for c in columns))
	for row in rows:
		print("  ".join(_short(row[c]).ljust(widths[c]) for c in columns))
	return rows


def _short(value):
	try:
		return f"{float(value):.4g}"
	except (TypeError, ValueError):
		return str(value)
