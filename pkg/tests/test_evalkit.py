# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import numpy as np
import pytest

from dlalign.dlalign.dynamics import apply_gap, gap_preset
from dlalign.dlalign.exceptions import ValidationError
from dlalign.dlalign.evalkit import (
	closed_loop_eval,
	compute_metrics,
	gap_check,
	open_loop_eval,
	write_curves,
	write_open_loop_report,
)
from dlalign.dlalign.neural import GaussianPolicy, Mlp, MlpSpec
from dlalign.dlalign.utils import read_csv
from dlalign.dlalign.align.delta_action import DeltaActionModel


def reference_trajectory(n_frames=10, n_points=7):
	rng = np.random.default_rng(0)
	return np.cumsum(rng.normal(0.0, 0.01, (n_frames, n_points, 2)), axis=0)


def zero_delta_model(n=3):
	return DeltaActionModel(GaussianPolicy(Mlp(MlpSpec((3 * n, 4, n))), np.full(n, -2.0)), np.ones(n, dtype=bool), 0.25)


def test_identical_trajectories_score_zero():
	ref = reference_trajectory()
	metrics = compute_metrics(ref, ref.copy())
	assert metrics.success
	assert (metrics.g_mpjpe, metrics.mpjpe, metrics.acc, metrics.vel) == (0.0, 0.0, 0.0, 0.0)


def test_constant_offset_is_global_error_only():
	ref = reference_trajectory()
	metrics = compute_metrics(ref + np.array([0.003, 0.004]), ref)
	assert metrics.g_mpjpe == pytest.approx(5.0)
	assert metrics.mpjpe == pytest.approx(0.0, abs=1e-9)
	assert metrics.acc == pytest.approx(0.0, abs=1e-9)
	assert metrics.vel == pytest.approx(0.0, abs=1e-9)


def test_linear_drift_shows_in_velocity():
	ref = reference_trajectory(n_frames=5)
	drift = np.arange(5)[:, None, None] * np.array([0.001, 0.0])
	metrics = compute_metrics(ref + drift, ref)
	assert metrics.vel == pytest.approx(1.0)
	assert metrics.acc == pytest.approx(0.0, abs=1e-9)
	assert metrics.g_mpjpe == pytest.approx(2.0)


def test_large_deviation_fails():
	ref = reference_trajectory()
	assert not compute_metrics(ref + np.array([0.6, 0.0]), ref).success


def test_mismatched_shapes_raise():
	with pytest.raises(ValidationError):
		compute_metrics(np.zeros((3, 7, 2)), np.zeros((4, 7, 2)))


def test_open_loop_without_gap_is_exact(params, recorded_dataset):
	dataset = recorded_dataset(params, n_episodes=2, n_steps=60)
	result = open_loop_eval(dataset, params, horizons=(0.1, 0.2), stride=0.1, workers=1)
	assert result["windows"] == 10
	assert [row["horizon"] for row in result["rows"]] == [0.1, 0.2]
	for row in result["rows"]:
		assert row["g_mpjpe"] < 1e-6
	assert result["curve"].shape == (21,)


def test_open_loop_with_gap(params, recorded_dataset):
	real = apply_gap(params, gap_preset("motor-weak", n_links=3, dt=params.dt))
	dataset = recorded_dataset(real, n_episodes=2, n_steps=60)

	baseline = open_loop_eval(dataset, params, horizons=(0.1, 0.5), stride=0.1, workers=1)
	short, long = baseline["rows"]
	assert long["g_mpjpe"] > short["g_mpjpe"] > 0.0
	assert baseline["curve"][0] == 0.0

	oracle = open_loop_eval(dataset, params, corrector="sysid", replay_params=real, horizons=(0.1, 0.5), stride=0.1, workers=1)
	assert oracle["rows"][1]["g_mpjpe"] < 1e-6

	zero = open_loop_eval(dataset, params, corrector="delta_action", model=zero_delta_model(), horizons=(0.1, 0.5), stride=0.1, workers=1)
	assert zero["rows"][1]["g_mpjpe"] == pytest.approx(long["g_mpjpe"])


def test_open_loop_argument_errors(params, recorded_dataset):
	dataset = recorded_dataset(params, n_episodes=1, n_steps=20)
	with pytest.raises(ValidationError, match="replay_params"):
		open_loop_eval(dataset, params, corrector="sysid")
	with pytest.raises(ValidationError, match="needs a trained model"):
		open_loop_eval(dataset, params, corrector="delta_action")
	with pytest.raises(ValidationError, match="longest horizon"):
		open_loop_eval(dataset, params, horizons=(1.0,))


def test_gap_check_messages():
	rows = [
		{"method": "none", "horizon": 0.5, "g_mpjpe": 3.0},
		{"method": "none", "horizon": 1.0, "g_mpjpe": 10.0},
		{"method": "delta_action", "horizon": 1.0, "g_mpjpe": 4.0},
	]
	result = gap_check(rows)
	assert result["gap_detected"]
	assert result["improvement"] == pytest.approx(6.0)
	assert result["horizon"] == 1.0

	rows[2]["g_mpjpe"] = 9.5
	result = gap_check(rows)
	assert not result["gap_detected"]
	assert result["message"].startswith("no significant gap detected")

	with pytest.raises(ValidationError):
		gap_check(rows[:2])


def test_closed_loop_rows_per_difficulty(motion, params, quiet_tracking, policy_for):
	policies = {motion.name: policy_for(0)}
	result = closed_loop_eval(policies, params, [motion], n_seeds=2, seed=0, tracking_config=quiet_tracking, method="none", workers=1)
	assert len(result["runs"]) == 2
	(row,) = result["rows"]
	assert row["difficulty"] == "easy" and row["runs"] == 2 and row["method"] == "none"
	assert 0.0 <= row["success"] <= 1.0
	assert row["g_mpjpe"] >= 0.0 and row["g_mpjpe_std"] >= 0.0

	passthrough = closed_loop_eval(
		policies, params, [motion], n_seeds=2, seed=0, tracking_config=quiet_tracking,
		action_fn=lambda env, action: action, workers=1,
	)
	assert passthrough["rows"][0]["g_mpjpe"] == row["g_mpjpe"]


def test_reports_carry_unit_header(tmp_path):
	path = tmp_path / "open_loop.csv"
	write_open_loop_report(path, [{"method": "none", "split": "held_out", "horizon": 0.25, "g_mpjpe": 1.5, "mpjpe": 1.0, "acc": 0.1, "vel": 0.2}], 0.01)
	first = path.read_text(encoding="utf-8").splitlines()[0]
	assert first.startswith("# frames at control rate dt=0.01s")
	(row,) = read_csv(path)
	assert float(row["g_mpjpe"]) == 1.5

	write_curves(tmp_path / "curves.csv", {"none": np.array([0.0, 1.0, 2.0]), "asap": np.array([0.0, np.nan])}, 0.01)
	rows = read_csv(tmp_path / "curves.csv")
	assert len(rows) == 3
	assert rows[1]["asap"] == "" and rows[2]["asap"] == ""
