# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
SysID baseline: exhaustive grid search over simulator parameters by replay error
"""

import itertools
from dataclasses import dataclass, fields

import numpy as np

from dlalign.dlalign.dynamics import GapSpec, apply_gap
from dlalign.dlalign.align.rollouts import replay
from dlalign.dlalign.utils import logger, ordered_map, throw, write_csv


AXES = ("mass_ratio", "com_shift", "kp_ratio", "kd_ratio")


@dataclass
class SysIdGrid:
	mass_ratio: tuple = (0.95, 1.0, 1.05)
	com_shift: tuple = (-0.02, 0.0, 0.02)
	kp_ratio: tuple = (0.95, 1.0, 1.05)
	kd_ratio: tuple = (0.95, 1.0, 1.05)
	horizon: float = 1.0
	max_episodes: int = 20

	def __post_init__(self):
		for axis in AXES:
			setattr(self, axis, tuple(float(v) for v in getattr(self, axis)))

	def validate(self):
		for axis in AXES:
			if not getattr(self, axis):
				throw(f"sysid grid axis {axis} is empty")
		if not self.horizon > 0 or self.max_episodes < 1:
			throw("sysid horizon must be positive and max_episodes at least 1")
		return self

	def points(self):
		"""Grid points in lexicographic order of the axis values"""
		return [dict(zip(AXES, values)) for values in itertools.product(*(getattr(self, a) for a in AXES))]

	def to_dict(self):
		data = {f.name: getattr(self, f.name) for f in fields(self)}
		for axis in AXES:
			data[axis] = list(data[axis])
		return data

	@classmethod
	def from_dict(cls, data):
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known)
		if unknown:
			throw(f"Unknown sysid keys: {', '.join(unknown)}")
		return cls(**data).validate()


@dataclass
class SysIdResult:
	best: dict
	best_index: int
	best_params: object
	rows: list

	@property
	def best_error(self):
		return self.rows[self.best_index]["error"]


def params_for_point(sim_params, point):
	"""Simulator params for one grid point (same construction as apply_gap)"""
	return apply_gap(sim_params, GapSpec(**point))


def distance_to_nominal(point):
	return float(np.sqrt(
		(point["mass_ratio"] - 1.0) ** 2
		+ (point["com_shift"] / 0.02) ** 2
		+ (point["kp_ratio"] - 1.0) ** 2
		+ (point["kd_ratio"] - 1.0) ** 2
	))


def replay_error(dataset, params, horizon_steps, max_episodes):
	"""
	Mean squared (q, qd) deviation of open-loop replays from the recorded states
	Every episode replays from its first recorded state.
	"""
	total = 0.0
	count = 0
	for episode in dataset.episodes[:max_episodes]:
		steps = min(horizon_steps, episode.n_steps)
		q, qd = replay(episode, 0, steps, params)
		total += float(np.sum((q[1:] - episode.q[1 : steps + 1]) ** 2) + np.sum((qd[1:] - episode.qd[1 : steps + 1]) ** 2))
		count += q[1:].size + qd[1:].size
	return total / max(count, 1)


def select_best(rows, tolerance=1e-12):
	"""
	Index of the minimum-error row
	Rows within tolerance of the minimum tie; ties go to the point closest to
	nominal, then to the lexicographically smallest point.
	"""
	best_error = min(row["error"] for row in rows)
	limit = best_error + tolerance * max(1.0, abs(best_error))
	tied = [i for i, row in enumerate(rows) if row["error"] <= limit]
	return min(tied, key=lambda i: (distance_to_nominal(rows[i]), tuple(rows[i][a] for a in AXES)))


def sysid_grid_search(dataset, sim_params, grid, workers=None):
	"""
	Replay the recorded actions under every grid point and keep the best

	Args:
		dataset: TrajectoryDataset (real-proxy)
		sim_params: Nominal DynamicsParams
		grid: SysIdGrid
		workers: Worker count (None reads DLALIGN_WORKERS)

	Returns:
		SysIdResult
	"""
	grid.validate()
	if not dataset.episodes:
		throw("sysid needs a non-empty dataset")

	horizon_steps = max(1, int(round(grid.horizon / sim_params.control_dt)))
	points = grid.points()

	def evaluate(point):
		return replay_error(dataset, params_for_point(sim_params, point), horizon_steps, grid.max_episodes)

	errors = ordered_map(evaluate, points, workers=workers)
	rows = [{"index": i, **point, "error": error} for i, (point, error) in enumerate(zip(points, errors))]
	best_index = select_best(rows)
	best = {axis: rows[best_index][axis] for axis in AXES}

	logger.info(f"DLAlign: SysID best point {best} - replay error {rows[best_index]['error']:.3e} over {len(points)} point(s)")
	return SysIdResult(best, best_index, params_for_point(sim_params, best), rows)


def write_sysid_rows(path, result):
	write_csv(path, result.rows, ["index", *AXES, "error"])
