# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Reference motions: synthetic generation, torque-feasibility cleaning and phase lookup
Difficulty tiers are defined by generator class:
	easy   - one raised-cosine harmonic per joint, small amplitude
	medium - several harmonics with phase offsets (periodic over the clip)
	hard   - fast rest-to-rest swings between distant poses (minimum-jerk)
"""

from dataclasses import dataclass, field

import numpy as np

from dlalign.dlalign.dynamics import forward_kinematics, inverse_dynamics
from dlalign.dlalign.utils import logger, make_rng, throw


DIFFICULTIES = ("easy", "medium", "hard")
SPLITS = ("train", "held_out")

# Joint acceleration cap for generated motions (rad/s^2); keeps them inside the nominal torque limits
PEAK_ACCEL = 12.0
MIN_JERK_PEAK = 10.0 / np.sqrt(3.0)


@dataclass
class ReferenceMotion:
	dt: float
	q_ref: np.ndarray
	qd_ref: np.ndarray
	body_ref: np.ndarray
	difficulty: str
	name: str

	@property
	def n_frames(self):
		return int(self.q_ref.shape[0])

	@property
	def n_links(self):
		return int(self.q_ref.shape[1])

	@property
	def duration(self):
		return (self.n_frames - 1) * self.dt

	def validate(self):
		if self.n_frames < 2:
			throw(f"motion {self.name!r} needs at least 2 frames")
		if self.difficulty not in DIFFICULTIES:
			throw(f"motion {self.name!r} has unknown difficulty {self.difficulty!r}")
		if self.qd_ref.shape != self.q_ref.shape or self.body_ref.shape[0] != self.n_frames:
			throw(f"motion {self.name!r} arrays disagree on frame count")
		if not (np.all(np.isfinite(self.q_ref)) and np.all(np.isfinite(self.qd_ref))):
			throw(f"motion {self.name!r} has non-finite frames")
		return self


@dataclass
class MotionSet:
	motions: list
	splits: dict = field(default_factory=dict)

	def validate(self):
		names = [motion.name for motion in self.motions]
		if len(set(names)) != len(names):
			throw(f"motion names must be unique, got {names}")
		for name, split in self.splits.items():
			if name not in names:
				throw(f"split entry {name!r} names no motion")
			if split not in SPLITS:
				throw(f"unknown split {split!r} for motion {name!r}")
		return self

	def get(self, name):
		for motion in self.motions:
			if motion.name == name:
				return motion
		throw(f"no motion named {name!r}")

	def split(self, tag):
		"""Motions carrying the split tag; untagged motions count as train"""
		return [m for m in self.motions if self.splits.get(m.name, "train") == tag]

	def by_difficulty(self, motions=None):
		grouped = {level: [] for level in DIFFICULTIES}
		for motion in motions if motions is not None else self.motions:
			grouped[motion.difficulty].append(motion)
		return grouped


class MotionProfile:
	"""
	Analytic joint trajectory q(t), qd(t)
	Built from a sum of raised-cosine harmonics and minimum-jerk segments.
	"""

	def __init__(self, q0, duration):
		self.q0 = np.asarray(q0, dtype=np.float64)
		self.duration = float(duration)
		self.harmonics = []  # (amplitude (n,), cycles (int), phase (n,))
		self.segments = []  # (t_start, t_end, q_from (n,), q_to (n,))

	def position(self, t):
		t = np.atleast_1d(np.asarray(t, dtype=np.float64))[:, None]
		q = np.tile(self.q0, (t.shape[0], 1))
		for amplitude, cycles, phase in self.harmonics:
			w = 2.0 * np.pi * cycles / self.duration
			q = q + amplitude * (np.cos(phase) - np.cos(w * t + phase))
		for t0, t1, q_from, q_to in self.segments:
			s, _ = _min_jerk(t, t0, t1)
			q = q + (q_to - q_from) * s
		return q

	def velocity(self, t):
		t = np.atleast_1d(np.asarray(t, dtype=np.float64))[:, None]
		qd = np.zeros((t.shape[0], self.q0.shape[0]))
		for amplitude, cycles, phase in self.harmonics:
			w = 2.0 * np.pi * cycles / self.duration
			qd = qd + amplitude * w * np.sin(w * t + phase)
		for t0, t1, q_from, q_to in self.segments:
			_, ds = _min_jerk(t, t0, t1)
			qd = qd + (q_to - q_from) * ds
		return qd


def _min_jerk(t, t0, t1):
	"""Minimum-jerk progress s(t) in [0, 1] and its time derivative"""
	span = t1 - t0
	tau = np.clip((t - t0) / span, 0.0, 1.0)
	s = 10 * tau ** 3 - 15 * tau ** 4 + 6 * tau ** 5
	ds = (30 * tau ** 2 - 60 * tau ** 3 + 30 * tau ** 4) / span
	return s, ds


def build_profile(kind, seed, n_links, amplitude_scale=1.0, duration=None):
	"""
	Seeded analytic profile for one difficulty tier

	Args:
		kind: "easy", "medium" or "hard"
		seed: Integer seed
		n_links: Joint count
		amplitude_scale: Multiplies every amplitude (0 gives a constant pose)
		duration: Clip length in seconds (drawn from [2, 5] when None)

	Returns:
		MotionProfile
	"""
	if kind not in DIFFICULTIES:
		throw(f"unknown motion kind {kind!r}")

	rng = make_rng(seed, DIFFICULTIES.index(kind))
	if duration is None:
		duration = float(np.round(rng.uniform(2.0, 5.0), 2))
	q0 = rng.uniform(-0.15, 0.15, n_links)
	profile = MotionProfile(q0, duration)

	if kind == "easy":
		amplitude = amplitude_scale * rng.uniform(0.1, 0.3, n_links)
		cycles = int(rng.integers(1, 3))
		profile.harmonics.append((amplitude, cycles, np.zeros(n_links)))
		_cap_harmonics(profile)

	elif kind == "medium":
		for cycles in rng.choice(np.arange(1, 5), size=3, replace=False):
			amplitude = amplitude_scale * rng.uniform(0.05, 0.2, n_links)
			phase = rng.uniform(0.0, 2.0 * np.pi, n_links)
			profile.harmonics.append((amplitude, int(cycles), phase))
		_cap_harmonics(profile)

	else:
		n_swings = int(rng.integers(2, 4))
		hold = 0.15 * duration / (n_swings + 1)
		swing = (duration - hold * (n_swings + 1)) / n_swings
		# minimum-jerk peak acceleration is MIN_JERK_PEAK * travel / swing^2
		max_travel = PEAK_ACCEL * swing ** 2 / MIN_JERK_PEAK
		poses = [q0]
		for _ in range(n_swings):
			target = rng.uniform(-0.9, 0.9, n_links)
			# distant configurations: at least one joint travels 0.6 rad
			far = int(rng.integers(n_links))
			if abs(target[far] - poses[-1][far]) < 0.6:
				target[far] = poses[-1][far] - np.sign(poses[-1][far] or 1.0) * 0.7
			travel = np.clip(amplitude_scale * (target - q0) + q0 - poses[-1], -max_travel, max_travel)
			poses.append(poses[-1] + travel)
		t = hold
		for q_from, q_to in zip(poses[:-1], poses[1:]):
			profile.segments.append((t, t + swing, q_from, q_to))
			t += swing + hold

	return profile


def _cap_harmonics(profile):
	"""Shrink harmonic amplitudes per joint so the summed peak acceleration stays under PEAK_ACCEL"""
	bound = sum(amplitude * (2.0 * np.pi * cycles / profile.duration) ** 2 for amplitude, cycles, _ in profile.harmonics)
	scale = np.minimum(1.0, PEAK_ACCEL / np.maximum(bound, 1e-12))
	profile.harmonics = [(amplitude * scale, cycles, phase) for amplitude, cycles, phase in profile.harmonics]


def endpoint_velocity_condition(kind):
	"""Velocity condition at phase 0 and 1: "rest" (qd = 0) or "periodic" (equal qd)"""
	return "periodic" if kind == "medium" else "rest"


def generate_synthetic(kind, seed, params, amplitude_scale=1.0, duration=None, name=None):
	"""
	Synthetic reference motion sampled at the control rate

	Args:
		kind: Difficulty tier
		seed: Integer seed
		params: DynamicsParams (joint count, control dt, body points)
		amplitude_scale: Scale on all amplitudes
		duration: Clip length (s); drawn when None
		name: Motion name (defaults to "<kind>_<seed>")

	Returns:
		ReferenceMotion
	"""
	profile = build_profile(kind, seed, params.n_links, amplitude_scale, duration)
	dt = params.control_dt
	n_frames = int(round(profile.duration / dt)) + 1
	times = np.arange(n_frames) * dt
	q_ref = profile.position(times)
	qd_ref = profile.velocity(times)
	motion = ReferenceMotion(
		dt=dt,
		q_ref=q_ref,
		qd_ref=qd_ref,
		body_ref=forward_kinematics(q_ref, params),
		difficulty=kind,
		name=name or f"{kind}_{seed}",
	)
	return motion.validate()


def feasibility_clean(motion, params):
	"""
	Inverse-dynamics torque check along the reference
	Accelerations come from differentiating qd_ref over the frame grid.

	Args:
		motion: ReferenceMotion
		params: DynamicsParams

	Returns:
		dict: accepted, peak_torque (per joint), torque_limit, worst_frame
	"""
	if motion.n_links != params.n_links:
		throw(f"motion {motion.name!r} has {motion.n_links} joints, params have {params.n_links}")

	qdd_ref = np.gradient(motion.qd_ref, motion.dt, axis=0)
	torques = np.array([
		inverse_dynamics(q, qd, qdd, params)
		for q, qd, qdd in zip(motion.q_ref, motion.qd_ref, qdd_ref)
	])
	peak = np.max(np.abs(torques), axis=0)
	accepted = bool(np.all(peak <= params.torque_limit))

	if not accepted:
		logger.info(
			f"DLAlign: motion {motion.name} rejected - peak torque {np.round(peak, 3).tolist()} "
			f"exceeds limit {params.torque_limit.tolist()}"
		)

	return {
		"accepted": accepted,
		"peak_torque": peak,
		"torque_limit": params.torque_limit.copy(),
		"worst_frame": int(np.argmax(np.max(np.abs(torques) / np.maximum(params.torque_limit, 1e-12), axis=1))),
	}


def frame_at_phase(motion, phase):
	"""
	Reference frame at a phase in [0, 1], linearly interpolated

	Args:
		motion: ReferenceMotion
		phase: Normalized time

	Returns:
		tuple: (q, qd, body points)
	"""
	if not 0.0 <= phase <= 1.0:
		throw(f"phase must lie in [0, 1], got {phase}")

	last = motion.n_frames - 1
	position = phase * last
	index = int(np.floor(position))
	if index >= last:
		return motion.q_ref[last].copy(), motion.qd_ref[last].copy(), motion.body_ref[last].copy()

	frac = position - index
	if frac == 0.0:
		return motion.q_ref[index].copy(), motion.qd_ref[index].copy(), motion.body_ref[index].copy()

	def lerp(values):
		return (1.0 - frac) * values[index] + frac * values[index + 1]

	return lerp(motion.q_ref), lerp(motion.qd_ref), lerp(motion.body_ref)


def default_motion_set(params, seed=0, per_difficulty=4, held_out_per_difficulty=1, amplitude_scale=1.0, difficulties=DIFFICULTIES, duration=None):
	"""
	Default benchmark: per_difficulty motions per tier, durations 2-5 s
	The last held_out_per_difficulty motions of each tier form the held-out split.

	Args:
		params: DynamicsParams
		seed: Base seed
		per_difficulty: Motions per tier
		held_out_per_difficulty: Held-out motions per tier
		amplitude_scale: Passed to generate_synthetic
		difficulties: Tiers to generate
		duration: Fixed duration in seconds (None keeps the per-tier default)

	Returns:
		MotionSet
	"""
	motions = []
	splits = {}
	for kind in difficulties:
		for index in range(per_difficulty):
			motion_seed = seed * 1000 + index
			motion = generate_synthetic(
				kind, motion_seed, params, amplitude_scale=amplitude_scale, duration=duration, name=f"{kind}_{index:02d}"
			)
			motions.append(motion)
			held_out = index >= per_difficulty - held_out_per_difficulty
			splits[motion.name] = "held_out" if held_out else "train"
	return MotionSet(motions, splits).validate()
