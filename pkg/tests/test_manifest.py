# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import pytest

from dlalign.dlalign.config import load_config
from dlalign.dlalign.exceptions import DigestMismatchError, LockError, ValidationError
from dlalign.dlalign.manifest import (
	LOCK_NAME,
	STATUS_FAILED,
	acquire_lock,
	check_stage_outputs,
	load_manifest,
	load_or_create_manifest,
	record_stage,
	release_lock,
	stage_is_current,
	verify_inputs,
)


@pytest.fixture
def run_dir(tmp_path):
	return tmp_path / "run"


@pytest.fixture
def manifest(run_dir):
	return load_or_create_manifest(run_dir, load_config())


def write(path, text):
	path.parent.mkdir(parents=True, exist_ok=True)
	path.write_text(text, encoding="utf-8")
	return path


def test_manifest_is_bound_to_config(run_dir, manifest):
	assert manifest["config_hash"] == load_config().config_hash()
	assert load_or_create_manifest(run_dir, load_config())["created"] == manifest["created"]
	with pytest.raises(ValidationError, match="another output directory"):
		load_or_create_manifest(run_dir, load_config().with_overrides(seed=3))


def test_completed_stage_is_current_until_an_output_changes(run_dir, manifest):
	output = write(run_dir / "motions" / "easy_00.mot", "frames")
	record_stage(manifest, "gen_motions", run_dir, outputs=[output], detail={"motions": 1})

	assert stage_is_current(manifest, "gen_motions", run_dir)
	assert load_manifest(run_dir)["stages"]["gen_motions"]["outputs"].keys() == {"motions/easy_00.mot"}
	check_stage_outputs(manifest, "gen_motions", run_dir)

	write(output, "edited")
	assert not stage_is_current(manifest, "gen_motions", run_dir)
	with pytest.raises(DigestMismatchError):
		check_stage_outputs(manifest, "gen_motions", run_dir)


def test_changed_input_set_reruns_stage(run_dir, manifest):
	source = write(run_dir / "a.bin", "a")
	other = write(run_dir / "b.bin", "b")
	output = write(run_dir / "out.bin", "out")
	record_stage(manifest, "collect", run_dir, inputs=[source], outputs=[output])
	assert stage_is_current(manifest, "collect", run_dir, inputs=[source])
	assert not stage_is_current(manifest, "collect", run_dir, inputs=[source, other])


def test_failed_stage_is_never_current(run_dir, manifest):
	output = write(run_dir / "out.bin", "partial")
	entry = record_stage(manifest, "pretrain", run_dir, outputs=[output], status=STATUS_FAILED, detail={"error": "boom"})
	assert entry["outputs"] == {}
	assert not stage_is_current(manifest, "pretrain", run_dir)
	check_stage_outputs(manifest, "pretrain", run_dir)


def test_verify_inputs(run_dir, manifest):
	produced = write(run_dir / "data" / "real.traj", "episodes")
	record_stage(manifest, "collect", run_dir, outputs=[produced])
	verify_inputs(manifest, [produced], run_dir)

	with pytest.raises(ValidationError, match="missing; run the stage"):
		verify_inputs(manifest, [run_dir / "data" / "other.traj"], run_dir)

	write(produced, "tampered")
	with pytest.raises(DigestMismatchError, match="digest mismatch"):
		verify_inputs(manifest, [produced], run_dir)

	produced.unlink()
	with pytest.raises(DigestMismatchError, match="missing"):
		verify_inputs(manifest, [produced], run_dir)


def test_lock_is_exclusive(run_dir):
	path = acquire_lock(run_dir)
	assert path == run_dir / LOCK_NAME
	with pytest.raises(LockError, match="locked by another run"):
		acquire_lock(run_dir)
	release_lock(run_dir)
	assert not path.exists()
	acquire_lock(run_dir)
	release_lock(run_dir)
	release_lock(run_dir)


def test_exit_codes():
	assert ValidationError.exit_code == 2
	assert LockError.exit_code == 2
	assert DigestMismatchError.exit_code == 3
