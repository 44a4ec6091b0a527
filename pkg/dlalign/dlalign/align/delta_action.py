# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Delta action model: a residual policy that makes the simulator reproduce
recorded real-proxy transitions, s' = f_sim(s, a + delta(s, a))
"""

from dataclasses import dataclass, fields, replace

import numpy as np

from dlalign.dlalign import ppo
from dlalign.dlalign.dynamics import control_step, forward_kinematics
from dlalign.dlalign.exceptions import NumericFaultError
from dlalign.dlalign.neural import forward
from dlalign.dlalign.tracking import (
	TrackingEnv,
	compute_tracking_reward,
	delta_action_weights,
	mean_point_distance,
)
from dlalign.dlalign.align.rollouts import state_at
from dlalign.dlalign.utils import logger, throw


@dataclass
class DeltaActionConfig:
	horizon: float = 1.0
	action_norm_weight: float = 0.2
	bound: float = 0.25
	mask: list = None
	termination_distance: float = 0.3
	init_log_std: float = -2.0
	dataset_fraction: float = 1.0

	def validate(self, n_links=None):
		if not self.horizon > 0:
			throw(f"delta action horizon must be positive, got {self.horizon}")
		if self.action_norm_weight < 0:
			throw(f"action_norm_weight must be non-negative, got {self.action_norm_weight}")
		if self.bound is not None and not self.bound > 0:
			throw(f"delta action bound must be positive or null, got {self.bound}")
		if not 0 < self.dataset_fraction <= 1:
			throw(f"dataset_fraction must lie in (0, 1], got {self.dataset_fraction}")
		if self.mask is not None and n_links is not None:
			parse_mask(self.mask, n_links)
		return self

	def to_dict(self):
		return {f.name: getattr(self, f.name) for f in fields(self)}

	@classmethod
	def from_dict(cls, data):
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known)
		if unknown:
			throw(f"Unknown delta action keys: {', '.join(unknown)}")
		return cls(**data).validate()


def parse_mask(mask, n_links):
	"""
	Joint mask from None (all joints), a list of joint indices or "joints:0,1"

	Returns:
		np.ndarray: bool (n_links,)
	"""
	if mask is None:
		return np.ones(n_links, dtype=bool)
	if isinstance(mask, str):
		prefix, _, body = mask.partition(":")
		if prefix != "joints" or not body:
			throw(f"mask must look like 'joints:0,1', got {mask!r}")
		mask = [int(part) for part in body.split(",")]
	indices = [int(i) for i in mask]
	if not indices or any(i < 0 or i >= n_links for i in indices):
		throw(f"mask joints must lie in [0, {n_links - 1}], got {indices}")
	allowed = np.zeros(n_links, dtype=bool)
	allowed[indices] = True
	return allowed


@dataclass
class DeltaActionModel:
	"""Gaussian residual policy over (q, qd, a) with an output mask and clamp"""

	policy: object
	mask: np.ndarray
	bound: float = 0.25

	@property
	def n_links(self):
		return int(self.mask.shape[0])

	def copy(self):
		return DeltaActionModel(self.policy.copy(), self.mask.copy(), self.bound)


def model_input(q, qd, action):
	return np.concatenate([np.atleast_2d(q), np.atleast_2d(qd), np.atleast_2d(action)], axis=-1)


def clamp_and_mask(raw, bound, mask):
	"""Clamp to the bound (None disables) and zero the masked joints"""
	if bound is not None:
		raw = np.clip(raw, -bound, bound)
	return np.where(mask, raw, 0.0)


def delta_action(model, q, qd, action):
	"""
	Deterministic (mean) delta action

	Args:
		model: DeltaActionModel
		q, qd, action: (n,) or batched (B, n)

	Returns:
		np.ndarray shaped like action
	"""
	single = np.ndim(action) == 1
	raw = forward(model.policy.mean_net, model_input(q, qd, action))
	delta = clamp_and_mask(raw, model.bound, model.mask)
	return delta[0] if single else delta


class DeltaActionPlant:
	"""Simulator whose commanded actions are shifted by a frozen delta model"""

	def __init__(self, model):
		self.model = model

	def step(self, state, action, params):
		applied = action + delta_action(self.model, state.q, state.qd, action)
		next_state, info = control_step(state, applied, params)
		info["applied_action"] = applied
		return next_state, info


def build_asap_env(sim_params, delta_model, motion, weights, config, nominal=None):
	"""
	Tracking environment with f_asap(s, a) = f_sim(s, a + delta(s, a))
	The delta model is evaluated in mean mode and never updated.
	"""
	return TrackingEnv(motion, sim_params, weights, config, plant=DeltaActionPlant(delta_model), nominal=nominal)


class DeltaActionEnv:
	"""
	PPO environment for learning the delta action

	Each episode picks a recorded episode and start index, sets the simulator
	to the recorded state and replays the recorded actions plus the policy's
	delta for `horizon` seconds, scored against the recorded states.
	"""

	def __init__(self, dataset, sim_params, config, tracking_config, mask):
		self.dataset = dataset
		self.params = sim_params
		self.config = config
		self.tracking_config = tracking_config
		self.weights = delta_action_weights(config.action_norm_weight)
		self.mask = mask
		self.horizon_steps = int(round(config.horizon / sim_params.control_dt))
		self.candidates = [i for i, e in enumerate(dataset.episodes) if e.n_steps >= self.horizon_steps]
		if not self.candidates:
			longest = max((e.n_steps for e in dataset.episodes), default=0)
			throw(
				f"delta action horizon of {self.horizon_steps} steps exceeds every recorded episode "
				f"(longest {longest} steps)"
			)

	@property
	def action_dim(self):
		return self.params.n_links

	def reset(self, rng):
		self.episode = self.dataset.episodes[self.candidates[int(rng.integers(len(self.candidates)))]]
		self.start = int(rng.integers(0, self.episode.n_steps - self.horizon_steps + 1))
		self.index = self.start
		self.state = state_at(self.episode, self.start, self.params)
		self.prev_delta = np.zeros(self.params.n_links)
		self.body = forward_kinematics(self.state.q, self.params)

	def recorded(self, index):
		return self.episode.q[index], self.episode.qd[index]

	def actor_obs(self):
		return model_input(self.state.q, self.state.qd, self.episode.actions[self.index])[0]

	def critic_obs(self):
		q_real, qd_real = self.recorded(self.index)
		remaining = (self.start + self.horizon_steps - self.index) / self.horizon_steps
		return np.concatenate([self.actor_obs(), q_real, qd_real, [remaining]])

	def step(self, raw_delta):
		delta = clamp_and_mask(np.asarray(raw_delta, dtype=np.float64), self.config.bound, self.mask)
		action = self.episode.actions[self.index] + delta
		try:
			state, dyn = control_step(self.state, action, self.params)
		except NumericFaultError:
			info = {"truncated": False, "failed": True, "mean_distance": float("inf"), "terms": {}}
			return None, self.weights.termination, True, info
		self.state = state
		self.index += 1

		q_real, qd_real = self.recorded(self.index)
		body = forward_kinematics(state.q, self.params)
		body_real = forward_kinematics(q_real, self.params)
		body_real_prev = forward_kinematics(self.episode.q[self.index - 1], self.params)
		dt = self.params.control_dt

		reward, terms = compute_tracking_reward(
			state.q, state.qd, body, (body - self.body) / dt,
			q_real, qd_real, body_real, (body_real - body_real_prev) / dt,
			delta, self.prev_delta, dyn["torque"], dyn["torque_raw"], self.params, self.weights, self.tracking_config,
		)
		self.prev_delta = delta
		self.body = body

		completed = self.index >= self.start + self.horizon_steps
		distance = mean_point_distance(body, body_real)
		failed = (not completed) and distance > self.config.termination_distance
		if failed:
			reward += self.weights.termination
			terms["termination"] = self.weights.termination
		info = {"truncated": completed, "failed": failed, "mean_distance": distance, "terms": terms}
		return None, reward, bool(completed or failed), info


def delta_critic_obs(env):
	return env.critic_obs()


def delta_actor_obs(env):
	return env.actor_obs()


def train_delta_action(dataset, sim_params, config, ppo_config, tracking_config, seed, curves_path=None):
	"""
	Learn the delta action model with PPO on the recorded dataset

	Args:
		dataset: TrajectoryDataset (real-proxy)
		sim_params: DynamicsParams of the training simulator
		config: DeltaActionConfig
		ppo_config: PpoConfig
		tracking_config: TrackingConfig (kernel scales and soft limits)
		seed: Base seed
		curves_path: Optional training curve CSV

	Returns:
		dict: success, model (DeltaActionModel), curves, diverged
	"""
	config.validate(sim_params.n_links)
	if not dataset.episodes:
		throw("delta action training needs a non-empty dataset")

	mask = parse_mask(config.mask, sim_params.n_links)
	ppo_config = replace(ppo_config, init_log_std=config.init_log_std).validate()

	def factory(index):
		return DeltaActionEnv(dataset, sim_params, config, tracking_config, mask)

	logger.info(
		f"DLAlign: training delta action model - {len(dataset.episodes)} episode(s), "
		f"horizon {config.horizon}s, action norm weight {config.action_norm_weight}"
	)
	result = ppo.train(factory, delta_actor_obs, delta_critic_obs, ppo_config, seed, curves_path=curves_path)
	model = DeltaActionModel(result["state"].policy, mask, config.bound)
	return {
		"success": result["success"],
		"model": model,
		"state": result["state"],
		"curves": result["curves"],
		"diverged": result["diverged"],
	}


def delta_magnitude_report(model, dataset):
	"""
	Mean |delta| per joint over every recorded (state, action) pair

	Returns:
		np.ndarray: (n_links,)
	"""
	if not dataset.episodes:
		return np.zeros(model.n_links)
	q = np.vstack([e.q[:-1] for e in dataset.episodes])
	qd = np.vstack([e.qd[:-1] for e in dataset.episodes])
	actions = np.vstack([e.actions for e in dataset.episodes])
	return np.mean(np.abs(delta_action(model, q, qd, actions)), axis=0)
