# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import pytest

from dlalign.dlalign import cli, pipeline
from dlalign.dlalign.artifacts import read_json
from dlalign.dlalign.debug_helpers import check_error_log, check_report, check_run_status
from dlalign.dlalign.exceptions import DLAlignError, NumericFaultError, ValidationError
from dlalign.dlalign.manifest import STATUS_COMPLETED, STATUS_FAILED, acquire_lock, load_manifest, release_lock
from dlalign.dlalign.utils import read_csv


@pytest.fixture
def config(run_config):
	return run_config()


@pytest.fixture
def config_file(config, tmp_path):
	path = tmp_path / "run.yaml"
	path.write_text(config.dump(), encoding="utf-8")
	return str(path)


def test_gen_motions_writes_index_and_skips_on_rerun(config):
	first = pipeline.cmd_gen_motions(config)
	assert first["success"] and not first["skipped"]
	assert first["detail"] == {"motions": 2}

	index = read_json(config.output_dir / "motions" / "index.json")
	assert [(m["name"], m["split"]) for m in index["motions"]] == [("easy_00", "train"), ("easy_01", "held_out")]
	assert (config.output_dir / "motions" / "easy_00.mot").exists()

	second = pipeline.cmd_gen_motions(config)
	assert second["skipped"]
	assert load_manifest(config.output_dir)["stages"]["gen_motions"]["status"] == STATUS_COMPLETED


def test_stage_before_its_inputs_exits_2(config_file):
	assert cli.main(["pretrain", "--config", config_file]) == 2


def test_corrupt_artifact_exits_3_until_resumed(config, config_file):
	assert cli.main(["gen-motions", "--config", config_file]) == 0
	motion_path = config.output_dir / "motions" / "easy_00.mot"
	data = bytearray(motion_path.read_bytes())
	data[-1] ^= 0xFF
	motion_path.write_bytes(bytes(data))

	assert cli.main(["pretrain", "--config", config_file]) == 3
	assert cli.main(["gen-motions", "--config", config_file]) == 3
	assert cli.main(["gen-motions", "--config", config_file, "--resume"]) == 0
	assert pipeline.cmd_gen_motions(config)["skipped"]


def test_locked_output_directory_exits_2(config, config_file):
	acquire_lock(config.output_dir)
	try:
		assert cli.main(["gen-motions", "--config", config_file]) == 2
	finally:
		release_lock(config.output_dir)
	assert cli.main(["gen-motions", "--config", config_file]) == 0


def test_config_from_another_run_exits_2(config, config_file):
	assert cli.main(["gen-motions", "--config", config_file]) == 0
	assert cli.main(["gen-motions", "--config", config_file, "--seed", "9"]) == 2


def test_failed_stage_is_recorded_with_its_error(config):
	def boom():
		raise NumericFaultError("loss is not finite")

	with pipeline.open_run(config) as ctx:
		with pytest.raises(NumericFaultError):
			pipeline.run_stage(ctx, "train_delta", [], boom)

	entry = load_manifest(config.output_dir)["stages"]["train_delta"]
	assert entry["status"] == STATUS_FAILED
	assert entry["detail"]["error"] == "loss is not finite"
	(record,) = check_error_log(config.output_dir)
	assert record["title"] == "DLAlign Stage Failed"


def test_status_command(config, capsys):
	pipeline.cmd_gen_motions(config)
	assert cli.main(["status", str(config.output_dir)]) == 0
	out = capsys.readouterr().out
	assert "Stage: gen_motions" in out
	assert "Verified: True" in out

	manifest = check_run_status(config.output_dir)
	assert list(manifest["stages"]) == ["gen_motions"]


def test_exit_code_for():
	assert cli.exit_code_for(NumericFaultError("nan")) == 4
	assert cli.exit_code_for(ValidationError("bad")) == 2
	assert cli.exit_code_for(DLAlignError("other")) == 1


def test_unknown_eval_mode(config):
	with pytest.raises(ValidationError, match="eval mode"):
		pipeline.cmd_eval(config, which="sideways")


def test_model_path_rejects_unknown_method(config):
	with pipeline.open_run(config) as ctx:
		assert ctx.model_path("asap") == ctx.model_path("delta_action")
		with pytest.raises(ValidationError, match="no alignment artifact"):
			ctx.model_path("vanilla")


def test_sysid_branch_to_open_loop_report(config, capsys):
	config = config.with_overrides(method="sysid")
	pipeline.cmd_gen_motions(config)
	pipeline.cmd_pretrain(config)
	collected = pipeline.cmd_collect(config)
	assert collected["detail"]["train"]["episodes"] == 2
	assert collected["detail"]["held_out"]["episodes"] == 1

	pipeline.cmd_sysid(config)
	best = read_json(config.output_dir / "sysid" / "best.json")
	assert best["point"]["kp_ratio"] in (0.9, 1.0)

	results = pipeline.cmd_eval(config, which="open")
	assert results["eval_open"]["detail"]["correctors"] == ["none", "sysid"]
	rows = check_report(config.output_dir / "eval" / "open_loop.csv")
	assert {(row["method"], row["split"]) for row in rows} == {
		(method, split) for method in ("none", "sysid") for split in ("train", "held_out")
	}
	assert "g_mpjpe" in capsys.readouterr().out
	assert read_json(config.output_dir / "eval" / "open_loop_summary.json")["gap"] == {}


@pytest.mark.slow
def test_full_pipeline_then_rerun_skips(config):
	results = pipeline.cmd_full_pipeline(config)
	expected = {
		"gen_motions", "pretrain", "collect", "train_delta", "sysid", "train_delta_dyn",
		"finetune_asap", "finetune_sysid", "finetune_delta_dynamics", "eval_open", "eval_closed",
	}
	assert set(results) == expected
	assert not any(result["skipped"] for result in results.values())

	out = config.output_dir
	summary = read_json(out / "eval" / "closed_loop_summary.json")
	assert set(summary) == {
		"oracle", "vanilla", "asap", "sysid", "delta_dynamics", "fixed_point", "gradient",
	}
	open_rows = read_csv(out / "eval" / "open_loop.csv")
	assert {row["method"] for row in open_rows} == {"none", "delta_action", "delta_dynamics", "sysid"}
	assert "message" in read_json(out / "eval" / "open_loop_summary.json")["gap"]
	assert (out / "eval" / "closed_loop_curves.svg").exists()

	again = pipeline.cmd_full_pipeline(config)
	assert all(result["skipped"] for result in again.values())


@pytest.mark.slow
def test_noise_sweep_and_ablation(config):
	pipeline.cmd_gen_motions(config)
	pipeline.cmd_pretrain(config)
	pipeline.cmd_collect(config)

	noise = pipeline.cmd_noise_finetune(config)
	assert noise["detail"]["success"] == 1
	(row,) = read_csv(config.output_dir / "noise" / "sweep.csv")
	assert float(row["beta"]) == 0.1
	assert (config.output_dir / "noise" / "beta_0.1" / "easy_00.actor.ckpt").exists()

	ablate = pipeline.cmd_ablate(config)
	assert set(ablate["detail"]) == {"dataset_size", "horizon", "action_norm"}
	rows = read_csv(config.output_dir / "ablate" / "horizon.csv")
	assert [float(r["value"]) for r in rows] == [0.2]
