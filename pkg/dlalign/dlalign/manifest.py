# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Run manifest and output-directory lock

The manifest binds an output directory to one config hash and records, per
stage, the SHA-256 of every file the stage read or wrote.
"""

import json
import os
from pathlib import Path

from dlalign import __version__
from dlalign.dlalign.exceptions import DigestMismatchError, LockError
from dlalign.dlalign.utils import canonical_json, file_digest, logger, now_iso, throw


MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".lock"

STATUS_COMPLETED = "Completed"
STATUS_FAILED = "Failed"


def manifest_path(out_dir):
	return Path(out_dir) / MANIFEST_NAME


def save_manifest(out_dir, manifest):
	path = manifest_path(out_dir)
	tmp = path.with_suffix(".json.tmp")
	tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
	os.replace(tmp, path)


def load_manifest(out_dir):
	path = manifest_path(out_dir)
	if not path.exists():
		throw(f"no run manifest in {out_dir}")
	try:
		return json.loads(path.read_text(encoding="utf-8"))
	except json.JSONDecodeError as e:
		throw(f"{path}: corrupt manifest ({e})")


def load_or_create_manifest(out_dir, config):
	"""
	Open the run manifest, creating it for a fresh directory

	Args:
		out_dir: Output directory
		config: RunConfig

	Returns:
		dict: manifest
	"""
	out_dir = Path(out_dir)
	out_dir.mkdir(parents=True, exist_ok=True)
	config_hash = config.config_hash()

	if manifest_path(out_dir).exists():
		manifest = load_manifest(out_dir)
		if manifest.get("config_hash") != config_hash:
			throw(
				f"{out_dir} belongs to a run with config hash {manifest.get('config_hash', '')[:12]}, "
				f"this config hashes to {config_hash[:12]}; use another output directory"
			)
		return manifest

	manifest = {
		"tool": "dlalign",
		"version": __version__,
		"config_hash": config_hash,
		"config": config.resolved(),
		"seed": config.seed,
		"created": now_iso(),
		"stages": {},
	}
	save_manifest(out_dir, manifest)
	logger.info(f"DLAlign: created run manifest in {out_dir} (config {config_hash[:12]})")
	return manifest


def _relative(out_dir, path):
	path = Path(path)
	try:
		return path.resolve().relative_to(Path(out_dir).resolve()).as_posix()
	except ValueError:
		return path.as_posix()


def _digests(out_dir, paths):
	return {_relative(out_dir, p): file_digest(p) for p in sorted(set(map(str, paths)))}


def _matches(out_dir, recorded):
	for rel, digest in recorded.items():
		path = Path(out_dir) / rel
		if not path.exists() or file_digest(path) != digest:
			return False
	return True


def stage_is_current(manifest, stage, out_dir, inputs=None):
	"""
	True when the stage completed and every recorded input and output still
	hashes to its recorded digest

	Args:
		inputs: Current upstream paths; when given they must be exactly the
			recorded input set
	"""
	entry = manifest["stages"].get(stage)
	if not entry or entry.get("status") != STATUS_COMPLETED:
		return False
	recorded_inputs = entry.get("inputs", {})
	if inputs is not None and set(recorded_inputs) != {_relative(out_dir, p) for p in inputs}:
		return False
	return _matches(out_dir, entry.get("outputs", {})) and _matches(out_dir, recorded_inputs)


def producer_of(manifest, rel):
	"""(stage, digest) of the completed stage that wrote rel, or (None, None)"""
	for stage, entry in manifest["stages"].items():
		if entry.get("status") == STATUS_COMPLETED and rel in entry.get("outputs", {}):
			return stage, entry["outputs"][rel]
	return None, None


def verify_inputs(manifest, paths, out_dir):
	"""
	Check upstream files against the digests their producing stages recorded

	Raises:
		ValidationError: a file no completed stage produced
		DigestMismatchError: a file whose contents changed
	"""
	for path in paths:
		rel = _relative(out_dir, path)
		stage, digest = producer_of(manifest, rel)
		if stage is None:
			throw(f"upstream artifact {rel} is missing; run the stage that produces it first")
		if not Path(path).exists():
			throw(f"upstream artifact {rel} (from stage {stage}) is missing", DigestMismatchError)
		actual = file_digest(path)
		if actual != digest:
			throw(
				f"digest mismatch for {rel} (from stage {stage}): recorded {digest[:12]}, found {actual[:12]}",
				DigestMismatchError,
			)


def record_stage(manifest, stage, out_dir, inputs=(), outputs=(), status=STATUS_COMPLETED, started=None, detail=None):
	"""
	Write a stage entry with input/output digests and save the manifest

	Args:
		manifest: Manifest dict
		stage: Stage name
		out_dir: Output directory
		inputs: Paths read by the stage
		outputs: Paths written by the stage
		status: "Completed" or "Failed"
		started: Start timestamp
		detail: Optional dict (summary numbers, error text)
	"""
	entry = {
		"status": status,
		"started": started or now_iso(),
		"finished": now_iso(),
		"inputs": _digests(out_dir, [p for p in inputs if Path(p).exists()]),
		"outputs": _digests(out_dir, [p for p in outputs if Path(p).exists()]) if status == STATUS_COMPLETED else {},
		"detail": json.loads(canonical_json(detail or {})),
	}
	manifest["stages"][stage] = entry
	save_manifest(out_dir, manifest)
	return entry


def check_stage_outputs(manifest, stage, out_dir):
	"""
	Raise DigestMismatchError when a completed stage's outputs no longer verify
	Silent for stages that never completed.
	"""
	entry = manifest["stages"].get(stage)
	if not entry or entry.get("status") != STATUS_COMPLETED:
		return
	for rel, digest in entry.get("outputs", {}).items():
		path = Path(out_dir) / rel
		if not path.exists():
			throw(f"output {rel} of completed stage {stage} is missing", DigestMismatchError)
		if file_digest(path) != digest:
			throw(f"digest mismatch for {rel} of completed stage {stage}", DigestMismatchError)


def acquire_lock(out_dir):
	"""
	Take exclusive ownership of an output directory

	Raises:
		LockError: another run holds the lock
	"""
	out_dir = Path(out_dir)
	out_dir.mkdir(parents=True, exist_ok=True)
	path = out_dir / LOCK_NAME
	try:
		fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
	except FileExistsError:
		holder = path.read_text(encoding="utf-8").strip() if path.exists() else "unknown"
		throw(
			f"{out_dir} is locked by another run (pid {holder or 'unknown'}); "
			f"remove {path} if that run is no longer alive",
			LockError,
		)
	with os.fdopen(fd, "w", encoding="utf-8") as f:
		f.write(str(os.getpid()))
	return path


def release_lock(out_dir):
	path = Path(out_dir) / LOCK_NAME
	try:
		path.unlink()
	except FileNotFoundError:
		logger.warning(f"DLAlign: lock {path} was already gone")
