# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import pytest

from dlalign.dlalign import tasks
from dlalign.dlalign.debug_helpers import check_error_log
from dlalign.dlalign.utils import set_error_log_dir


def closed_loop_row(difficulty, runs, success, error):
	return {
		"difficulty": difficulty, "runs": runs, "success": success,
		"g_mpjpe": error, "mpjpe": error / 2, "acc": 0.0, "vel": 1.0,
	}


def test_overall_row_weights_by_run_count():
	result = {"rows": [closed_loop_row("easy", 3, 1.0, 10.0), closed_loop_row("hard", 1, 0.0, 50.0)]}
	row = tasks.overall_row(result)
	assert row["success"] == pytest.approx(0.75)
	assert row["g_mpjpe"] == pytest.approx(20.0)
	assert row["mpjpe"] == pytest.approx(10.0)
	assert row["vel"] == pytest.approx(1.0)


def test_noise_sweep_counts_failed_items(monkeypatch, tmp_path, motion, params, tiny_ppo, quiet_tracking):
	def diverge(*args, **kwargs):
		raise FloatingPointError("loss is not finite")

	monkeypatch.setattr(tasks, "noise_finetune", diverge)
	set_error_log_dir(tmp_path)
	result = tasks.noise_sweep(
		{motion.name: None}, [motion], params, params, [0.05, 0.2], None, quiet_tracking, tiny_ppo,
		seed=0, eval_settings={"n_seeds": 1, "init_noise": 0.0, "seed": 0}, out_dir=tmp_path / "noise",
	)
	assert (result["success"], result["failed"]) == (0, 2)
	assert result["rows"] == [] and result["outputs"] == []
	records = check_error_log(tmp_path)
	assert [r["title"] for r in records] == ["DLAlign Noise Sweep Failed"] * 2
