# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Evaluation: tracking metrics, open-loop replay and closed-loop tracking
Frames are control steps; E_acc is mm/frame^2 and E_vel mm/frame at that rate.
"""

from dataclasses import dataclass, replace

import numpy as np

from dlalign.dlalign.dynamics import forward_kinematics, root_index
from dlalign.dlalign.neural import gaussian_mean
from dlalign.dlalign.reference import DIFFICULTIES
from dlalign.dlalign.tracking import (
	SUCCESS_DISTANCE,
	NominalPlant,
	RewardWeights,
	TrackingEnv,
	tracked_points,
)
from dlalign.dlalign.align.rollouts import replay
from dlalign.dlalign.utils import logger, make_rng, ordered_map, throw, write_csv


METRIC_FIELDS = ("g_mpjpe", "mpjpe", "acc", "vel")
CORRECTORS = ("none", "delta_action", "delta_dynamics", "sysid")
DEFAULT_HORIZONS = (0.25, 0.5, 1.0)


@dataclass
class TrackingMetrics:
	success: bool
	g_mpjpe: float
	mpjpe: float
	acc: float
	vel: float


def compute_metrics(sim_traj, ref_traj, threshold=SUCCESS_DISTANCE):
	"""
	Tracking errors between two body-point trajectories

	Args:
		sim_traj: (T, P, 2) positions in meters
		ref_traj: (T, P, 2) positions in meters
		threshold: Mean point distance (m) that marks a failed frame

	Returns:
		TrackingMetrics (errors in millimeters)
	"""
	sim_traj = np.asarray(sim_traj, dtype=np.float64)
	ref_traj = np.asarray(ref_traj, dtype=np.float64)
	if sim_traj.shape != ref_traj.shape:
		throw(f"trajectory shapes differ: {sim_traj.shape} vs {ref_traj.shape}")
	if sim_traj.ndim != 3 or sim_traj.shape[0] < 1:
		throw(f"trajectories must be (frames, points, 2), got {sim_traj.shape}")

	root = root_index()
	sim_points = tracked_points(sim_traj)
	ref_points = tracked_points(ref_traj)
	distance = np.linalg.norm(sim_points - ref_points, axis=-1)

	sim_local = sim_points - sim_traj[:, root : root + 1]
	ref_local = ref_points - ref_traj[:, root : root + 1]
	local_distance = np.linalg.norm(sim_local - ref_local, axis=-1)

	if sim_traj.shape[0] >= 3:
		acc_error = np.diff(sim_points, n=2, axis=0) - np.diff(ref_points, n=2, axis=0)
		acc = float(np.mean(np.linalg.norm(acc_error, axis=-1)))
	else:
		acc = 0.0
	if sim_traj.shape[0] >= 2:
		vel_error = np.diff(sim_traj[:, root], axis=0) - np.diff(ref_traj[:, root], axis=0)
		vel = float(np.mean(np.linalg.norm(vel_error, axis=-1)))
	else:
		vel = 0.0

	return TrackingMetrics(
		success=bool(not np.any(distance.mean(axis=1) > threshold)),
		g_mpjpe=1000.0 * float(distance.mean()),
		mpjpe=1000.0 * float(local_distance.mean()),
		acc=1000.0 * acc,
		vel=1000.0 * vel,
	)


def replay_plant(corrector, model=None):
	"""Plant used to replay recorded actions under a corrector"""
	if corrector in ("none", "sysid"):
		return NominalPlant()
	if model is None:
		throw(f"corrector {corrector!r} needs a trained model")
	if corrector == "delta_action":
		from dlalign.dlalign.align.delta_action import DeltaActionPlant

		return DeltaActionPlant(model)
	if corrector == "delta_dynamics":
		from dlalign.dlalign.align.delta_dynamics import DeltaDynamicsPlant

		return DeltaDynamicsPlant(model)
	throw(f"unknown corrector {corrector!r}; expected one of {CORRECTORS}")


def open_loop_eval(dataset, sim_params, corrector="none", model=None, replay_params=None, horizons=DEFAULT_HORIZONS, stride=0.25, split="", workers=None):
	"""
	Replay recorded actions from recorded states and score against the recording

	Windows start every `stride` seconds of each episode; the longest horizon is
	replayed once per window and shorter horizons are its prefixes.

	Args:
		dataset: TrajectoryDataset (real-proxy)
		sim_params: DynamicsParams of the training simulator (also used for body points)
		corrector: "none", "delta_action", "delta_dynamics" or "sysid"
		model: DeltaActionModel or DeltaDynamicsModel for the learned correctors
		replay_params: Simulator params for the "sysid" corrector
		horizons: Horizons in seconds
		stride: Window stride in seconds
		split: Label copied into the report rows

	Returns:
		dict: rows (one per horizon with mean metrics), curve (mean point error
		in mm per replay step), windows
	"""
	if corrector == "sysid" and replay_params is None:
		throw("the sysid corrector needs replay_params")
	params = replay_params if corrector == "sysid" else sim_params
	plant = replay_plant(corrector, model)

	dt = sim_params.control_dt
	horizon_steps = [int(round(h / dt)) for h in horizons]
	longest = max(horizon_steps)
	stride_steps = max(1, int(round(stride / dt)))
	windows = [
		(index, start)
		for index, episode in enumerate(dataset.episodes)
		for start in range(0, episode.n_steps - longest + 1, stride_steps)
	]
	if not windows:
		throw(f"no recorded episode covers the longest horizon ({longest} steps)")

	def run(window):
		index, start = window
		episode = dataset.episodes[index]
		q, _ = replay(episode, start, longest, params, plant)
		sim_body = forward_kinematics(q, sim_params)
		real_body = forward_kinematics(episode.q[start : start + longest + 1], sim_params)
		metrics = {h: compute_metrics(sim_body[: s + 1], real_body[: s + 1]) for h, s in zip(horizons, horizon_steps)}
		curve = np.mean(np.linalg.norm(tracked_points(sim_body) - tracked_points(real_body), axis=-1), axis=1)
		return metrics, curve

	results = ordered_map(run, windows, workers=workers)

	rows = []
	for h in horizons:
		row = {"method": corrector, "split": split, "horizon": h}
		for name in METRIC_FIELDS:
			row[name] = float(np.mean([getattr(r[0][h], name) for r in results]))
		rows.append(row)

	logger.info(
		f"DLAlign: open-loop {corrector} - {len(windows)} window(s), "
		+ ", ".join(f"{row['horizon']}s {row['g_mpjpe']:.2f}mm" for row in rows)
	)
	return {
		"rows": rows,
		"curve": 1000.0 * np.mean([r[1] for r in results], axis=0),
		"windows": len(windows),
	}


def _closed_loop_run(task):
	motion, motion_index, policy, env_params, tracking_config, nominal, seed, seed_index, action_fn = task
	rng = make_rng(seed, 31, seed_index, motion_index)
	env = TrackingEnv(motion, env_params, RewardWeights(), tracking_config, nominal=nominal)
	env.threshold = SUCCESS_DISTANCE
	env.reset(rng, phase=0.0)

	body = [forward_kinematics(env.state.q, env.params)]
	ref = [motion.body_ref[0]]
	done = False
	info = {}
	while not done:
		action = gaussian_mean(policy, env.actor_obs())
		if action_fn is not None:
			action = action_fn(env, action)
		_, _, done, info = env.step(action)
		if info.get("aborted"):
			break
		body.append(info["body"])
		ref.append(info["body_ref"])

	body, ref = np.array(body), np.array(ref)
	metrics = compute_metrics(body, ref)
	metrics.success = metrics.success and bool(info.get("success")) and not info.get("aborted")
	curve = np.mean(np.linalg.norm(tracked_points(body) - tracked_points(ref), axis=-1), axis=1)
	return {"motion": motion.name, "difficulty": motion.difficulty, "seed": seed_index, "metrics": metrics, "curve": curve}


def closed_loop_eval(policies, env_params, motions, n_seeds, seed, tracking_config, nominal=None, action_fn=None, init_noise=0.01, method="", workers=None):
	"""
	Deterministic tracking rollouts from phase 0 for every motion and seed

	Seeds differ by a small initial joint perturbation. Runs stop when the mean
	body-point distance exceeds 0.5 m; errors cover the frames up to there.

	Args:
		policies: dict motion name -> GaussianPolicy
		env_params: DynamicsParams of the test environment
		motions: list of ReferenceMotion
		n_seeds: Seed count
		seed: Base seed
		tracking_config: TrackingConfig (randomization and RSI are switched off)
		nominal: DynamicsParams for the critic summary (unused by the actor)
		action_fn: Optional Callable(env, action) -> action applied instead
		init_noise: Std of the initial joint perturbation (rad)
		method: Label copied into the report rows

	Returns:
		dict: rows (per difficulty), runs, curve (mean point error in mm per step)
	"""
	if n_seeds < 1:
		throw(f"closed-loop evaluation needs at least one seed, got {n_seeds}")
	config = replace(tracking_config, randomize=False, rsi=False, init_noise=init_noise)
	tasks = [
		(motion, motion_index, policies[motion.name], env_params, config, nominal, seed, seed_index, action_fn)
		for seed_index in range(n_seeds)
		for motion_index, motion in enumerate(motions)
	]
	runs = ordered_map(_closed_loop_run, tasks, workers=workers)

	rows = []
	for level in DIFFICULTIES:
		level_runs = [r for r in runs if r["difficulty"] == level]
		if not level_runs:
			continue
		row = {"method": method, "difficulty": level, "runs": len(level_runs)}
		row["success"] = float(np.mean([r["metrics"].success for r in level_runs]))
		for name in METRIC_FIELDS:
			per_seed = [
				np.mean([getattr(r["metrics"], name) for r in level_runs if r["seed"] == s])
				for s in range(n_seeds)
			]
			row[name] = float(np.mean(per_seed))
			row[f"{name}_std"] = float(np.std(per_seed))
		rows.append(row)

	length = max(len(r["curve"]) for r in runs)
	padded = np.full((len(runs), length), np.nan)
	for i, r in enumerate(runs):
		padded[i, : len(r["curve"])] = r["curve"]
	curve = 1000.0 * np.nanmean(padded, axis=0)

	return {"rows": rows, "runs": runs, "curve": curve}


def report_header(dt):
	return f"frames at control rate dt={dt}s; errors in mm, E_acc in mm/frame^2, E_vel in mm/frame"


OPEN_LOOP_COLUMNS = ["method", "split", "horizon", *METRIC_FIELDS]
CLOSED_LOOP_COLUMNS = [
	"method", "difficulty", "runs", "success",
	*[c for name in METRIC_FIELDS for c in (name, f"{name}_std")],
]


def write_open_loop_report(path, rows, dt):
	write_csv(path, rows, OPEN_LOOP_COLUMNS, header_comment=report_header(dt))


def write_closed_loop_report(path, rows, dt):
	write_csv(path, rows, CLOSED_LOOP_COLUMNS, header_comment=report_header(dt))


def write_curves(path, curves, dt):
	"""
	Per-step error curves, one column per label

	Args:
		curves: dict label -> 1-D array (mm)
	"""
	labels = list(curves)
	length = max(len(c) for c in curves.values())
	rows = []
	for step in range(length):
		row = {"step": step, "time": step * dt}
		for label in labels:
			values = curves[label]
			row[label] = float(values[step]) if step < len(values) and np.isfinite(values[step]) else ""
		rows.append(row)
	write_csv(path, rows, ["step", "time", *labels], header_comment=report_header(dt))


def gap_check(rows, noise_floor=1.0):
	"""
	Compare the uncorrected and delta-action open-loop error at the longest horizon

	Args:
		rows: Open-loop report rows holding "none" and "delta_action" methods
		noise_floor: Improvement in mm below which no gap is reported

	Returns:
		dict: gap_detected, horizon, baseline, corrected, improvement, message
	"""
	longest = max(row["horizon"] for row in rows)

	def error(method):
		matches = [row["g_mpjpe"] for row in rows if row["method"] == method and row["horizon"] == longest]
		if not matches:
			throw(f"open-loop report has no {method!r} row at {longest}s")
		return float(np.mean(matches))

	baseline = error("none")
	corrected = error("delta_action")
	improvement = baseline - corrected
	detected = improvement >= noise_floor
	message = (
		f"delta action model reduces {longest}s open-loop error by {improvement:.3f} mm"
		if detected
		else f"no significant gap detected (improvement {improvement:.3f} mm < {noise_floor} mm)"
	)
	return {
		"gap_detected": bool(detected),
		"horizon": longest,
		"baseline": baseline,
		"corrected": corrected,
		"improvement": improvement,
		"message": message,
	}
