# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Phase-conditioned motion tracking environment
Observations, reward terms, termination curriculum, reference state
initialization and domain randomization. One environment tracks one motion.

The environment advances its SimState through a plant. The nominal plant is
plain control_step; the alignment methods plug in plants that add a delta
action, a learned state residual or action noise.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from dlalign.dlalign.dynamics import (
	control_step,
	end_effector_index,
	forward_kinematics,
	initial_state,
	summary_size,
	summary_vector,
)
from dlalign.dlalign.exceptions import NumericFaultError
from dlalign.dlalign.neural import gaussian_mean
from dlalign.dlalign.reference import frame_at_phase
from dlalign.dlalign.utils import log_error, make_rng, throw, write_csv


TASK_TERMS = ("body_pos", "end_effector_pos", "body_vel", "dof_pos", "dof_vel")
PENALTY_TERMS = ("action_rate", "torque", "dof_pos_limit", "dof_vel_limit", "torque_limit", "termination")
# Terms of the humanoid reward without a counterpart on a fixed-base planar chain.
# Their weights are accepted for traceability and never enter the reward.
INAPPLICABLE_TERMS = ("body_rot", "body_ang_vel", "vr_3point", "feet_orientation", "feet_heading", "slippage")
# Mean body-point distance (m) beyond which an evaluation or recording counts as failed
SUCCESS_DISTANCE = 0.5


@dataclass
class RewardWeights:
	body_pos: float = 1.0
	end_effector_pos: float = 2.1
	body_vel: float = 0.5
	dof_pos: float = 0.75
	dof_vel: float = 0.5
	action_rate: float = -0.5
	torque: float = -1e-6
	dof_pos_limit: float = -10.0
	dof_vel_limit: float = -5.0
	torque_limit: float = -5.0
	termination: float = -200.0
	# weight on exp(-|action|) - 1, which is <= 0 (delta action learning only)
	action_norm: float = 0.0
	body_rot: float = 0.0
	body_ang_vel: float = 0.0
	vr_3point: float = 0.0
	feet_orientation: float = 0.0
	feet_heading: float = 0.0
	slippage: float = 0.0

	def validate(self):
		for name in TASK_TERMS + ("action_norm",):
			if getattr(self, name) < 0:
				throw(f"reward weight {name} must be non-negative, got {getattr(self, name)}")
		for name in PENALTY_TERMS:
			if getattr(self, name) > 0:
				throw(f"penalty weight {name} must be non-positive, got {getattr(self, name)}")
		return self

	def task_total(self):
		return sum(getattr(self, name) for name in TASK_TERMS)

	def to_dict(self):
		return {f.name: getattr(self, f.name) for f in fields(self)}

	@classmethod
	def from_dict(cls, data):
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known)
		if unknown:
			throw(f"Unknown reward keys: {', '.join(unknown)}")
		return cls(**data).validate()


def delta_action_weights(action_norm=0.2):
	"""Reward weights used while learning the delta action model"""
	return RewardWeights(
		body_pos=1.0,
		end_effector_pos=1.0,
		body_vel=0.5,
		dof_pos=0.5,
		dof_vel=0.5,
		action_rate=-0.01,
		torque=0.0,
		dof_pos_limit=-10.0,
		dof_vel_limit=-5.0,
		torque_limit=-0.1,
		termination=-200.0,
		action_norm=action_norm,
	).validate()


@dataclass
class CurriculumState:
	"""Termination threshold tightened linearly over the first `fraction` of training"""

	start: float = 1.5
	end: float = 0.3
	fraction: float = 0.6

	def validate(self):
		if not self.start >= self.end > 0:
			throw(f"curriculum needs start >= end > 0, got {self.start} -> {self.end}")
		if not 0 < self.fraction <= 1:
			throw(f"curriculum fraction must lie in (0, 1], got {self.fraction}")
		return self

	def threshold(self, progress):
		progress = min(max(float(progress), 0.0), 1.0)
		return self.start + (self.end - self.start) * min(progress / self.fraction, 1.0)


@dataclass
class TrackingConfig:
	body_pos_scale: float = 100.0
	end_effector_scale: float = 100.0
	dof_pos_scale: float = 10.0
	dof_vel_scale: float = 0.1
	body_vel_scale: float = 1.0
	history_len: int = 5
	soft_dof_pos_limit: float = 2.5
	soft_dof_vel_limit: float = 10.0
	curriculum: CurriculumState = field(default_factory=CurriculumState)
	rsi: bool = True
	init_noise: float = 0.0
	randomize: bool = True
	kp_range: tuple = (0.925, 1.05)
	delay_ms_range: tuple = (20.0, 40.0)
	damping_range: tuple = (0.7, 1.3)
	push_interval: float = 10.0
	push_magnitude: float = 0.5

	def __post_init__(self):
		if isinstance(self.curriculum, dict):
			self.curriculum = CurriculumState(**self.curriculum)
		self.kp_range = tuple(float(v) for v in self.kp_range)
		self.delay_ms_range = tuple(float(v) for v in self.delay_ms_range)
		self.damping_range = tuple(float(v) for v in self.damping_range)

	def validate(self):
		self.curriculum.validate()
		if self.history_len < 1:
			throw("tracking.history_len must be at least 1")
		for name in ("kp_range", "delay_ms_range", "damping_range"):
			low, high = getattr(self, name)
			if not 0 <= low <= high:
				throw(f"tracking.{name} must satisfy 0 <= low <= high, got {(low, high)}")
		if self.push_interval <= 0 or self.push_magnitude < 0 or self.init_noise < 0:
			throw("tracking push_interval must be positive, push_magnitude and init_noise non-negative")
		return self

	def to_dict(self):
		data = {f.name: getattr(self, f.name) for f in fields(self)}
		data["curriculum"] = {f.name: getattr(self.curriculum, f.name) for f in fields(self.curriculum)}
		for name in ("kp_range", "delay_ms_range", "damping_range"):
			data[name] = list(data[name])
		return data

	@classmethod
	def from_dict(cls, data):
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known)
		if unknown:
			throw(f"Unknown tracking keys: {', '.join(unknown)}")
		curriculum = data.get("curriculum", {})
		extra = sorted(set(curriculum) - {f.name for f in fields(CurriculumState)})
		if extra:
			throw(f"Unknown tracking.curriculum keys: {', '.join(extra)}")
		return cls(**data).validate()


class NominalPlant:
	"""Plain simulator: one control step with the commanded action"""

	def step(self, state, action, params):
		next_state, info = control_step(state, action, params)
		info["applied_action"] = action
		return next_state, info


def tracked_points(body):
	"""Body points that move (everything but the fixed base)"""
	return body[..., 1:, :]


def mean_point_distance(body, body_ref):
	return float(np.mean(np.linalg.norm(tracked_points(body) - tracked_points(body_ref), axis=-1)))


def compute_tracking_reward(
	q, qd, body, body_vel, q_ref, qd_ref, body_ref, body_vel_ref,
	action, prev_action, torque, torque_raw, params, weights, config,
):
	"""
	Weighted reward terms for one step

	Task terms are exp(-k * error) kernels scaled by their weight, so each lies
	in (0, weight]. Penalties are non-negative magnitudes times non-positive weights.

	Returns:
		tuple: (total reward, dict of per-term contributions)
	"""
	ee = end_effector_index(params.n_links)
	point_sq = np.sum((tracked_points(body) - tracked_points(body_ref)) ** 2, axis=-1)
	vel_sq = np.sum((tracked_points(body_vel) - tracked_points(body_vel_ref)) ** 2, axis=-1)

	errors = {
		"body_pos": config.body_pos_scale * float(np.mean(point_sq)),
		"end_effector_pos": config.end_effector_scale * float(np.sum((body[ee] - body_ref[ee]) ** 2)),
		"body_vel": config.body_vel_scale * float(np.mean(vel_sq)),
		"dof_pos": config.dof_pos_scale * float(np.sum((q - q_ref) ** 2)),
		"dof_vel": config.dof_vel_scale * float(np.sum((qd - qd_ref) ** 2)),
	}
	terms = {name: getattr(weights, name) * float(np.exp(-errors[name])) for name in TASK_TERMS}

	limit = np.maximum(params.torque_limit, 1e-12)
	penalties = {
		"action_rate": float(np.sum((action - prev_action) ** 2)),
		"torque": float(np.sum(torque ** 2)),
		"dof_pos_limit": float(np.sum(np.maximum(np.abs(q) - config.soft_dof_pos_limit, 0.0))),
		"dof_vel_limit": float(np.sum(np.maximum(np.abs(qd) - config.soft_dof_vel_limit, 0.0))),
		"torque_limit": float(np.sum(np.maximum(np.abs(torque_raw) / limit - 1.0, 0.0))),
	}
	for name, magnitude in penalties.items():
		terms[name] = getattr(weights, name) * magnitude
	terms["action_norm"] = weights.action_norm * (float(np.exp(-np.linalg.norm(action))) - 1.0)
	terms["termination"] = 0.0

	return float(sum(terms.values())), terms


class TrackingEnv:
	"""
	Tracking environment for one reference motion

	Args:
		motion: ReferenceMotion
		params: Base DynamicsParams of this environment (nominal, SysID, ...)
		weights: RewardWeights
		config: TrackingConfig
		plant: Object with step(state, action, params) -> (state, info)
		nominal: DynamicsParams the critic's summary vector is relative to
		log_rewards: Keep a per-step reward breakdown in self.reward_log
	"""

	def __init__(self, motion, params, weights, config, plant=None, nominal=None, log_rewards=False):
		if motion.n_links != params.n_links:
			throw(f"motion {motion.name!r} does not match a {params.n_links}-link chain")
		self.motion = motion
		self.base_params = params
		self.params = params
		self.nominal = nominal or params
		self.weights = weights
		self.config = config
		self.plant = plant or NominalPlant()
		self.threshold = config.curriculum.start
		self.reward_log = [] if log_rewards else None
		self.rng = None
		self.state = None
		self.phase0 = 0.0
		self.step_count = 0
		self.total_steps = 0
		self.push_count = 0
		self.next_push = config.push_interval

	@property
	def n_links(self):
		return self.params.n_links

	@property
	def action_dim(self):
		return self.params.n_links

	@property
	def phase(self):
		dt = self.params.control_dt
		return min(self.phase0 + self.step_count * dt / self.motion.duration, 1.0)

	@property
	def completed(self):
		return self.step_count >= self.total_steps

	def reset(self, rng, phase=None):
		apply_domain_randomization(self, rng)
		reset_rsi(self, rng, phase=phase)

	def step(self, action):
		return step_env(self, action)

	def actor_obs(self):
		return np.concatenate([
			self.q_hist.ravel(),
			self.qd_hist.ravel(),
			self.action_hist.ravel(),
			[self.phase],
		])

	def critic_obs(self):
		_, qd_ref, body_ref = frame_at_phase(self.motion, self.phase)
		return np.concatenate([
			self.actor_obs(),
			body_ref.ravel(),
			qd_ref,
			summary_vector(self.params, self.nominal),
		])

	def _push_history(self, q, qd, action):
		self.q_hist = np.vstack([self.q_hist[1:], q])
		self.qd_hist = np.vstack([self.qd_hist[1:], qd])
		self.action_hist = np.vstack([self.action_hist[1:], action])

	def _observation(self):
		return {"actor": self.actor_obs(), "critic": self.critic_obs()}


def actor_obs_size(n_links, history_len=5):
	return 3 * n_links * history_len + 1


def critic_obs_size(n_links, history_len=5):
	return actor_obs_size(n_links, history_len) + 2 * (2 * n_links + 1) + n_links + summary_size(n_links)


def actor_obs(env):
	return env.actor_obs()


def critic_obs(env):
	return env.critic_obs()


def apply_domain_randomization(env, rng):
	"""
	Draw the episode's dynamics around env.base_params

	kp scale, control delay (ms, rounded to physics steps) and joint damping
	scale are drawn once per episode. Joint-velocity pushes are scheduled every
	push_interval seconds of episode time.

	Args:
		env: TrackingEnv
		rng: numpy Generator

	Returns:
		TrackingEnv
	"""
	config = env.config
	base = env.base_params
	env.push_count = 0
	env.next_push = config.push_interval

	if not config.randomize:
		env.params = base
		return env

	kp_scale = rng.uniform(*config.kp_range)
	delay_ms = rng.uniform(*config.delay_ms_range)
	damping_scale = rng.uniform(*config.damping_range)
	env.params = replace(
		base,
		pd_kp=base.pd_kp * kp_scale,
		control_delay_steps=delay_steps(delay_ms, base.dt),
		joint_damping=base.joint_damping * damping_scale,
	).validate()
	return env


def delay_steps(delay_ms, dt):
	"""Control delay in physics steps for a delay in milliseconds"""
	return int(round(delay_ms / 1000.0 / dt))


def reset_rsi(env, rng, phase=None):
	"""
	Reference state initialization

	Args:
		env: TrackingEnv (params already drawn)
		rng: numpy Generator
		phase: Force the start phase (None draws U[0, 1) when RSI is on, else 0)

	Returns:
		tuple: (SimState, start phase)
	"""
	if phase is None:
		phase = float(rng.random()) if env.config.rsi else 0.0
	if not 0.0 <= phase <= 1.0:
		throw(f"start phase must lie in [0, 1], got {phase}")

	q_ref, qd_ref, body_ref = frame_at_phase(env.motion, phase)
	q = q_ref.copy()
	if env.config.init_noise > 0:
		q = q + rng.normal(0.0, env.config.init_noise, q.shape)

	env.rng = rng
	env.phase0 = phase
	env.step_count = 0
	remaining = (1.0 - phase) * env.motion.duration / env.params.control_dt
	env.total_steps = max(int(np.ceil(remaining - 1e-9)), 0)
	env.state = initial_state(q, qd_ref, env.params, prime=q_ref)

	h = env.config.history_len
	env.q_hist = np.tile(q, (h, 1))
	env.qd_hist = np.tile(qd_ref, (h, 1))
	env.action_hist = np.tile(q_ref, (h, 1))
	env.prev_action = q_ref.copy()
	env.body = forward_kinematics(q, env.params)
	env.body_ref_prev = body_ref
	return env.state, phase


def _apply_push(env):
	config = env.config
	elapsed = env.step_count * env.params.control_dt
	while config.randomize and config.push_magnitude > 0 and elapsed >= env.next_push - 1e-12:
		impulse = env.rng.uniform(-config.push_magnitude, config.push_magnitude, env.n_links)
		env.state.qd = env.state.qd + impulse
		env.push_count += 1
		env.next_push += config.push_interval


def step_env(env, action):
	"""
	Advance one control step and score it against the reference

	Args:
		env: TrackingEnv after reset
		action: PD setpoints (n,)

	Returns:
		tuple: (observation dict, reward, done, info)
	"""
	action = np.asarray(action, dtype=np.float64)
	if action.shape != (env.n_links,):
		throw(f"action must have shape ({env.n_links},), got {action.shape}")

	if env.completed:
		info = {"truncated": True, "success": True, "failed": False, "aborted": False, "mean_distance": 0.0}
		return env._observation(), 0.0, True, info

	dt = env.params.control_dt
	try:
		state, dyn = env.plant.step(env.state, action, env.params)
	except NumericFaultError as e:
		log_error(
			"DLAlign Episode Aborted",
			f"Motion: {env.motion.name}\nPhase: {env.phase:.4f}\nParams: {env.params.params_hash()}\n\nError: {e}",
		)
		info = {"truncated": False, "success": False, "failed": True, "aborted": True, "mean_distance": float("inf")}
		return env._observation(), env.weights.termination, True, info

	env.state = state
	env.step_count += 1
	_apply_push(env)

	phase = env.phase
	q_ref, qd_ref, body_ref = frame_at_phase(env.motion, phase)
	body = forward_kinematics(env.state.q, env.params)
	body_vel = (body - env.body) / dt
	body_vel_ref = (body_ref - env.body_ref_prev) / dt

	reward, terms = compute_tracking_reward(
		env.state.q, env.state.qd, body, body_vel, q_ref, qd_ref, body_ref, body_vel_ref,
		action, env.prev_action, dyn["torque"], dyn["torque_raw"], env.params, env.weights, env.config,
	)

	distance = mean_point_distance(body, body_ref)
	completed = env.completed
	failed = (not completed) and distance > env.threshold
	if failed:
		terms["termination"] = env.weights.termination
		reward += env.weights.termination

	env._push_history(env.state.q, env.state.qd, action)
	env.prev_action = action.copy()
	env.body = body
	env.body_ref_prev = body_ref

	if env.reward_log is not None:
		env.reward_log.append({"step": env.step_count, "phase": phase, **terms, "total": reward})

	info = {
		"truncated": completed,
		"success": completed,
		"failed": failed,
		"aborted": False,
		"mean_distance": distance,
		"body": body,
		"body_ref": body_ref,
		"terms": terms,
	}
	return env._observation(), reward, bool(completed or failed), info


def write_reward_log(env, path):
	"""Write the per-step reward breakdown collected with log_rewards=True"""
	if env.reward_log is None:
		throw("reward logging is off for this environment")
	columns = ["step", "phase", *TASK_TERMS, *PENALTY_TERMS, "action_norm", "total"]
	write_csv(path, env.reward_log, columns)


def record_reward_breakdown(policy, motion, params, weights, config, seed, path):
	"""
	Run one deterministic episode from phase 0 and write its per-step reward terms

	Args:
		policy: GaussianPolicy (mean action is used)
		motion: ReferenceMotion
		params: DynamicsParams
		weights: RewardWeights
		config: TrackingConfig
		seed: Seed for domain randomization draws
		path: Output CSV

	Returns:
		dict: steps, total (episode return)
	"""
	env = TrackingEnv(motion, params, weights, config, log_rewards=True)
	env.reset(make_rng(seed), phase=0.0)
	done = False
	while not done:
		_, _, done, _ = env.step(gaussian_mean(policy, env.actor_obs()))
	write_reward_log(env, path)
	return {"steps": len(env.reward_log), "total": float(sum(row["total"] for row in env.reward_log))}


def make_env_factory(motion, params, weights, config, plant_factory=None, nominal=None):
	"""
	Environment factory for ppo.train plus the list of created environments

	Args:
		plant_factory: Optional Callable(env_index) -> plant

	Returns:
		tuple: (factory, envs list filled as the factory is called)
	"""
	envs = []

	def factory(index):
		plant = plant_factory(index) if plant_factory else None
		env = TrackingEnv(motion, params, weights, config, plant=plant, nominal=nominal)
		envs.append(env)
		return env

	return factory, envs


def curriculum_hook(envs, curriculum, fixed=None):
	"""
	on_progress callback for ppo.train that tightens every env's threshold

	Args:
		envs: Environments created by the factory
		curriculum: CurriculumState
		fixed: Hold the threshold at this value instead (fine-tuning)
	"""

	def on_progress(progress):
		threshold = fixed if fixed is not None else curriculum.threshold(progress)
		for env in envs:
			env.threshold = threshold
		return threshold

	return on_progress
