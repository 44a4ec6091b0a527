# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Versioned binary files for motions, checkpoints and trajectory datasets
Layout: magic line, one JSON header line, little-endian float64 payload.
See docs/formats.md for the exact record order.
"""

import json
from pathlib import Path

import numpy as np

from dlalign.dlalign.utils import canonical_json, throw


MOTION_MAGIC = "DLALIGN-MOT/1"
CHECKPOINT_MAGIC = "DLALIGN-CKPT/1"
DATASET_MAGIC = "DLALIGN-TRAJ/1"

FLOAT = np.dtype("<f8")


def _write_line(f, data):
	text = data if isinstance(data, str) else canonical_json(data)
	f.write(text.encode("utf-8") + b"\n")


def _write_floats(f, array):
	f.write(np.ascontiguousarray(array, dtype=FLOAT).tobytes())


def _read_line(f, path, what):
	line = f.readline()
	if not line.endswith(b"\n"):
		throw(f"{path}: truncated file while reading {what}")
	return line[:-1].decode("utf-8")


def _read_header(f, path, magic):
	found = _read_line(f, path, "magic")
	if found != magic:
		throw(f"{path}: expected magic {magic!r}, found {found[:32]!r}")
	try:
		return json.loads(_read_line(f, path, "header"))
	except json.JSONDecodeError as e:
		throw(f"{path}: corrupt header ({e})")


def _read_floats(f, path, count, what):
	count = int(count)
	raw = f.read(count * FLOAT.itemsize)
	if len(raw) != count * FLOAT.itemsize:
		throw(f"{path}: truncated payload in {what} (wanted {count} floats)")
	return np.frombuffer(raw, dtype=FLOAT).astype(np.float64)


def _expect_end(f, path):
	if f.read(1):
		throw(f"{path}: trailing bytes after payload")


def write_motion(path, motion):
	"""
	Write a ReferenceMotion

	Args:
		path: Output file
		motion: ReferenceMotion
	"""
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	n_points = motion.body_ref.shape[1]
	header = {
		"dt": motion.dt,
		"n_links": motion.n_links,
		"n_frames": motion.n_frames,
		"n_points": n_points,
		"difficulty": motion.difficulty,
		"name": motion.name,
	}
	frames = np.hstack([
		motion.q_ref,
		motion.qd_ref,
		motion.body_ref.reshape(motion.n_frames, n_points * 2),
	])
	with open(path, "wb") as f:
		_write_line(f, MOTION_MAGIC)
		_write_line(f, header)
		_write_floats(f, frames)


def read_motion(path):
	"""
	Read a motion file written by write_motion

	Returns:
		ReferenceMotion (validated)
	"""
	from dlalign.dlalign.reference import ReferenceMotion

	with open(path, "rb") as f:
		header = _read_header(f, path, MOTION_MAGIC)
		n, frames, points = int(header["n_links"]), int(header["n_frames"]), int(header["n_points"])
		width = 2 * n + 2 * points
		data = _read_floats(f, path, frames * width, "frames").reshape(frames, width)
		_expect_end(f, path)

	motion = ReferenceMotion(
		dt=float(header["dt"]),
		q_ref=data[:, :n].copy(),
		qd_ref=data[:, n : 2 * n].copy(),
		body_ref=data[:, 2 * n :].reshape(frames, points, 2).copy(),
		difficulty=header["difficulty"],
		name=header["name"],
	)
	return motion.validate()


def write_checkpoint(path, spec, flat, extras=None, optimizer=None, metadata=None):
	"""
	Write network parameters

	Args:
		path: Output file
		spec: MlpSpec
		flat: Flat parameter vector
		extras: dict of named 1-D vectors stored after the parameters (log_std, mask, normalizers)
		optimizer: Optional AdamState
		metadata: JSON-serializable dict stored in the header
	"""
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	extras = {name: np.asarray(value, dtype=np.float64).ravel() for name, value in (extras or {}).items()}
	header = {
		"spec": spec.to_dict(),
		"flat_length": int(np.size(flat)),
		"extras": {name: int(value.size) for name, value in extras.items()},
		"has_optimizer": optimizer is not None,
		"optimizer_t": int(optimizer.t) if optimizer is not None else 0,
		"metadata": metadata or {},
	}
	with open(path, "wb") as f:
		_write_line(f, CHECKPOINT_MAGIC)
		_write_line(f, header)
		_write_floats(f, flat)
		for name in sorted(extras):
			_write_floats(f, extras[name])
		if optimizer is not None:
			_write_floats(f, optimizer.m)
			_write_floats(f, optimizer.v)


def read_checkpoint(path):
	"""
	Read a checkpoint written by write_checkpoint

	Returns:
		dict: net (Mlp), extras (dict), optimizer (AdamState or None), metadata
	"""
	from dlalign.dlalign.neural import AdamState, Mlp, MlpSpec

	with open(path, "rb") as f:
		header = _read_header(f, path, CHECKPOINT_MAGIC)
		spec = MlpSpec(tuple(header["spec"]["layer_sizes"]), header["spec"]["activation"]).validate()
		length = int(header["flat_length"])
		if length != spec.n_params:
			throw(f"{path}: flat length {length} does not match spec ({spec.n_params})")
		flat = _read_floats(f, path, length, "parameters")
		extras = {}
		for name in sorted(header["extras"]):
			extras[name] = _read_floats(f, path, header["extras"][name], name)
		optimizer = None
		if header["has_optimizer"]:
			m = _read_floats(f, path, length, "optimizer m")
			v = _read_floats(f, path, length, "optimizer v")
			optimizer = AdamState(m, v, int(header["optimizer_t"]))
		_expect_end(f, path)

	return {
		"net": Mlp(spec, flat),
		"extras": extras,
		"optimizer": optimizer,
		"metadata": header["metadata"],
	}


def write_dataset(path, dataset):
	"""
	Write a TrajectoryDataset

	Args:
		path: Output file
		dataset: TrajectoryDataset
	"""
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	header = {
		"dt": dataset.dt,
		"n_links": dataset.n_links,
		"params_hash": dataset.params_hash,
		"episode_count": len(dataset.episodes),
		"provenance": dataset.provenance,
	}
	with open(path, "wb") as f:
		_write_line(f, DATASET_MAGIC)
		_write_line(f, header)
		for episode in dataset.episodes:
			_write_line(f, {
				"motion": episode.motion,
				"steps": episode.n_steps,
				"failed": bool(episode.failed),
				"params_hash": episode.params_hash,
				"start_phase": float(episode.start_phase),
			})
			_write_floats(f, episode.q)
			_write_floats(f, episode.qd)
			_write_floats(f, episode.actions)
			_write_floats(f, episode.prime)


def read_dataset(path):
	"""
	Read a dataset written by write_dataset

	Returns:
		TrajectoryDataset (validated)
	"""
	from dlalign.dlalign.align.rollouts import Episode, TrajectoryDataset

	with open(path, "rb") as f:
		header = _read_header(f, path, DATASET_MAGIC)
		n = int(header["n_links"])
		episodes = []
		for index in range(int(header["episode_count"])):
			try:
				meta = json.loads(_read_line(f, path, f"episode {index} header"))
			except json.JSONDecodeError as e:
				throw(f"{path}: corrupt episode {index} header ({e})")
			steps = int(meta["steps"])
			what = f"episode {index}"
			q = _read_floats(f, path, (steps + 1) * n, what).reshape(steps + 1, n)
			qd = _read_floats(f, path, (steps + 1) * n, what).reshape(steps + 1, n)
			actions = _read_floats(f, path, steps * n, what).reshape(steps, n)
			prime = _read_floats(f, path, n, what)
			episodes.append(Episode(
				motion=meta["motion"],
				q=q,
				qd=qd,
				actions=actions,
				prime=prime,
				failed=bool(meta["failed"]),
				params_hash=meta["params_hash"],
				start_phase=float(meta.get("start_phase", 0.0)),
			))
		_expect_end(f, path)

	dataset = TrajectoryDataset(
		dt=float(header["dt"]),
		n_links=n,
		params_hash=header["params_hash"],
		provenance=header["provenance"],
		episodes=episodes,
	)
	return dataset.validate()
