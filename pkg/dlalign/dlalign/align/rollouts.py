# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Trajectory datasets recorded in the real-proxy simulator, and exact replay
"""

from dataclasses import dataclass, replace

import numpy as np

from dlalign.dlalign.dynamics import initial_state, prime_delay_buffer
from dlalign.dlalign.neural import gaussian_mean
from dlalign.dlalign.tracking import SUCCESS_DISTANCE, NominalPlant, TrackingEnv, delta_action_weights
from dlalign.dlalign.utils import log_error, logger, make_rng, ordered_map, throw


PROVENANCES = ("sim", "real-proxy")


@dataclass
class Episode:
	"""
	One recorded rollout at control rate
	q, qd have n_steps + 1 rows (state before every action plus the final
	state); actions has n_steps rows; prime is the setpoint that filled the
	delay buffer at reset.
	"""

	motion: str
	q: np.ndarray
	qd: np.ndarray
	actions: np.ndarray
	prime: np.ndarray
	failed: bool = False
	params_hash: str = ""
	start_phase: float = 0.0

	@property
	def n_steps(self):
		return int(self.actions.shape[0])

	def validate(self):
		steps = self.n_steps
		if steps < 2:
			throw(f"episode of {self.motion!r} needs at least 2 steps, got {steps}")
		n = self.actions.shape[1]
		if self.q.shape != (steps + 1, n) or self.qd.shape != (steps + 1, n) or self.prime.shape != (n,):
			throw(f"episode of {self.motion!r} has inconsistent array shapes")
		for name in ("q", "qd", "actions", "prime"):
			if not np.all(np.isfinite(getattr(self, name))):
				throw(f"episode of {self.motion!r} has non-finite {name}")
		return self


@dataclass
class TrajectoryDataset:
	dt: float
	n_links: int
	params_hash: str
	provenance: str
	episodes: list

	def validate(self):
		if self.provenance not in PROVENANCES:
			throw(f"unknown dataset provenance {self.provenance!r}")
		if not self.dt > 0:
			throw(f"dataset dt must be positive, got {self.dt}")
		for episode in self.episodes:
			episode.validate()
			if episode.actions.shape[1] != self.n_links:
				throw(f"episode of {episode.motion!r} does not match n_links={self.n_links}")
		return self

	@property
	def n_samples(self):
		return sum(episode.n_steps for episode in self.episodes)

	def subset(self, fraction, seed):
		"""Seeded subset holding round(fraction * episodes) episodes (at least one)"""
		if not 0 < fraction <= 1:
			throw(f"dataset fraction must lie in (0, 1], got {fraction}")
		count = max(1, int(round(fraction * len(self.episodes))))
		order = make_rng(seed, 41).permutation(len(self.episodes))[:count]
		return replace(self, episodes=[self.episodes[i] for i in sorted(order)])

	def for_motions(self, names):
		names = set(names)
		return replace(self, episodes=[e for e in self.episodes if e.motion in names])


def delay_buffer_at(episode, index, params):
	"""Delay buffer a simulator with `params` holds before applying actions[index]"""
	return prime_delay_buffer(episode.prime, episode.actions[:index], params)


def state_at(episode, index, params):
	"""Recorded state at a step index, with the delay buffer rebuilt for params"""
	state = initial_state(episode.q[index], episode.qd[index], params, prime=episode.prime)
	state.delay_buffer = delay_buffer_at(episode, index, params)
	return state


def replay(episode, start, n_steps, params, plant=None):
	"""
	Open-loop replay of recorded actions from a recorded state

	Args:
		episode: Episode
		start: Start index
		n_steps: Steps to replay (start + n_steps <= episode.n_steps)
		params: DynamicsParams of the replaying simulator
		plant: Optional plant (defaults to plain control steps)

	Returns:
		tuple: (q, qd), each (n_steps + 1, n) starting with the recorded state
	"""
	if start < 0 or start + n_steps > episode.n_steps:
		throw(f"replay window [{start}, {start + n_steps}] exceeds episode length {episode.n_steps}")

	plant = plant or NominalPlant()
	state = state_at(episode, start, params)
	q = [state.q.copy()]
	qd = [state.qd.copy()]
	for k in range(n_steps):
		state, _ = plant.step(state, episode.actions[start + k], params)
		q.append(state.q.copy())
		qd.append(state.qd.copy())
	return np.array(q), np.array(qd)


def _record_episode(task):
	index, policy, motion, params, config, seed, max_phase = task
	rng = make_rng(seed, 17, index)
	env = TrackingEnv(motion, params, delta_action_weights(), replace(config, randomize=False, rsi=False, init_noise=0.0))
	env.threshold = np.inf
	start_phase = float(rng.uniform(0.0, max_phase))
	env.reset(rng, phase=start_phase)

	prime = env.prev_action.copy()
	q, qd, actions = [env.state.q.copy()], [env.state.qd.copy()], []
	failed = False
	done = False
	while not done:
		action = gaussian_mean(policy, env.actor_obs())
		_, _, done, info = env.step(action)
		if info["aborted"]:
			failed = True
			break
		actions.append(action)
		q.append(env.state.q.copy())
		qd.append(env.state.qd.copy())
		failed = failed or info["mean_distance"] > SUCCESS_DISTANCE

	if len(actions) < 2:
		log_error(
			"DLAlign Rollout Dropped",
			f"Episode: {index}\nMotion: {motion.name}\nOnly {len(actions)} step(s) recorded before divergence",
		)
		return None

	return Episode(
		motion=motion.name,
		q=np.array(q),
		qd=np.array(qd),
		actions=np.array(actions),
		prime=prime,
		failed=failed,
		params_hash=params.params_hash(),
		start_phase=start_phase,
	)


def collect_rollouts(policies, params, motions, n_episodes, seed, config, max_start_phase=0.5, provenance="real-proxy", workers=None):
	"""
	Record deterministic (mean-action) rollouts in the given simulator

	Episodes cycle over the motions; each starts at a seeded phase in
	[0, max_start_phase] and runs until the motion ends. Episodes whose mean
	body-point distance ever exceeds 0.5 are kept with the failed flag.

	Args:
		policies: dict motion name -> GaussianPolicy, or one GaussianPolicy for all
		params: DynamicsParams of the recording simulator (the real proxy)
		motions: list of ReferenceMotion
		n_episodes: Episode count
		seed: Base seed
		config: TrackingConfig (randomization and RSI are switched off)
		max_start_phase: Upper bound of the start phase draw
		provenance: "real-proxy" or "sim"

	Returns:
		TrajectoryDataset
	"""
	if n_episodes > 0 and not motions:
		throw("collect_rollouts needs at least one motion")

	def policy_for(motion):
		if isinstance(policies, dict):
			if motion.name not in policies:
				throw(f"no policy for motion {motion.name!r}")
			return policies[motion.name]
		return policies

	tasks = [
		(index, policy_for(motions[index % len(motions)]), motions[index % len(motions)], params, config, seed, max_start_phase)
		for index in range(n_episodes)
	]
	episodes = [e for e in ordered_map(_record_episode, tasks, workers=workers) if e is not None]

	failed = sum(1 for e in episodes if e.failed)
	logger.info(f"DLAlign: collected {len(episodes)} episode(s) - Failed: {failed}, Dropped: {n_episodes - len(episodes)}")

	dataset = TrajectoryDataset(
		dt=params.control_dt,
		n_links=params.n_links,
		params_hash=params.params_hash(),
		provenance=provenance,
		episodes=episodes,
	)
	return dataset.validate()
