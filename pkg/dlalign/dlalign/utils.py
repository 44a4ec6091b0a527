# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Utility functions for DLAlign
Logging, error raising, hashing, seeding, CSV output and worker fan-out
"""

import csv
import hashlib
import importlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path

import numpy as np

from dlalign.dlalign.exceptions import NumericFaultError, ValidationError


logger = logging.getLogger("dlalign")

ERROR_LOG_NAME = "error_log.jsonl"

# Active run directory for the error log (set by the pipeline while a stage runs)
_error_log_dir = None


def setup_logging(verbose=False):
	"""
	Configure the package logger for console output

	Args:
		verbose: Log DEBUG records as well
	"""
	level = logging.DEBUG if verbose else logging.INFO
	if not logger.handlers:
		handler = logging.StreamHandler()
		handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
		logger.addHandler(handler)
	logger.setLevel(level)


def set_error_log_dir(path):
	"""Route log_error records to <path>/error_log.jsonl (None disables)"""
	global _error_log_dir
	_error_log_dir = Path(path) if path else None


def log_error(title, message):
	"""
	Log an error with a title line and a detail message
	Also appended to the active run's error log

	Args:
		title: Short title
		message: Multi-line detail
	"""
	logger.error(f"{title}\n{message}")

	if _error_log_dir is None:
		return

	try:
		_error_log_dir.mkdir(parents=True, exist_ok=True)
		record = {"time": now_iso(), "title": title, "message": str(message)}
		with open(_error_log_dir / ERROR_LOG_NAME, "a", encoding="utf-8") as f:
			f.write(json.dumps(record) + "\n")
	except OSError:
		logger.warning("DLAlign: could not write error log record")


def throw(message, exc=ValidationError):
	"""
	Raise exc with message

	Args:
		message: Error text shown to the user
		exc: Exception class (default ValidationError)
	"""
	raise exc(message)


def get_attr(dotted_path):
	"""
	Resolve a dotted path such as "dlalign.dlalign.pipeline.cmd_pretrain"

	Args:
		dotted_path: module path plus attribute name

	Returns:
		The attribute object
	"""
	module_name, _, attr = dotted_path.rpartition(".")
	module = importlib.import_module(module_name)
	return getattr(module, attr)


def now_iso():
	return datetime.now().isoformat(timespec="seconds")


def canonical_json(data):
	return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(value):
	if isinstance(value, np.ndarray):
		return value.tolist()
	if isinstance(value, (np.floating, np.integer)):
		return value.item()
	raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def hash_data(data):
	"""SHA-256 hex digest of the canonical JSON form of data"""
	return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def file_digest(path):
	"""
	SHA-256 hex digest of a file's contents

	Args:
		path: File path

	Returns:
		str: Hex digest
	"""
	digest = hashlib.sha256()
	with open(path, "rb") as f:
		for chunk in iter(lambda: f.read(1 << 20), b""):
			digest.update(chunk)
	return digest.hexdigest()


def make_rng(seed, *stream):
	"""
	Seeded generator for an independent stream

	Args:
		seed: Base seed
		stream: Extra integers distinguishing the stream (env index, stage id)

	Returns:
		numpy.random.Generator
	"""
	return np.random.default_rng([int(seed), *[int(s) for s in stream]])


def derive_seed(seed, *stream):
	"""Integer seed for a named sub-stream (stage id, item index)"""
	return int(np.random.SeedSequence([int(seed), *[int(s) for s in stream]]).generate_state(1)[0])


def worker_count():
	"""Worker count from DLALIGN_WORKERS (default 1)"""
	value = os.environ.get("DLALIGN_WORKERS", "1")
	try:
		return max(1, int(value))
	except ValueError:
		throw(f"DLALIGN_WORKERS must be an integer, got {value!r}")


def ordered_map(fn, items, workers=None):
	"""
	Apply fn to every item, optionally on a thread pool
	Results always come back in item order

	Args:
		fn: Callable taking one item
		items: Sequence of items
		workers: Worker count (None reads DLALIGN_WORKERS)

	Returns:
		list: fn(item) for each item, in order
	"""
	items = list(items)
	workers = worker_count() if workers is None else workers
	if workers <= 1 or len(items) <= 1:
		return [fn(item) for item in items]

	with ThreadPoolExecutor(max_workers=workers) as pool:
		return list(pool.map(fn, items))


def write_csv(path, rows, columns, header_comment=None):
	"""
	Write dict rows to a CSV file

	Args:
		path: Output path
		rows: Iterable of dicts
		columns: Column order
		header_comment: Optional first line written as "# <comment>"
	"""
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", newline="", encoding="utf-8") as f:
		if header_comment:
			f.write(f"# {header_comment}\n")
		writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
		writer.writeheader()
		for row in rows:
			writer.writerow({key: _format_cell(row.get(key)) for key in columns})


def read_csv(path):
	"""Read a CSV written by write_csv (comment lines skipped)"""
	with open(path, newline="", encoding="utf-8") as f:
		lines = [line for line in f if not line.startswith("#")]
	return list(csv.DictReader(lines))


def _format_cell(value):
	if isinstance(value, (float, np.floating)):
		return repr(float(value))
	if isinstance(value, (np.integer,)):
		return int(value)
	return value


def check_finite(title, **arrays):
	"""
	Raise NumericFaultError naming the first non-finite array

	Args:
		title: Context for the error message
		arrays: Named arrays to check
	"""
	for name, value in arrays.items():
		if not np.all(np.isfinite(value)):
			throw(f"{title}: non-finite values in {name}: {np.asarray(value)!r}", NumericFaultError)
