# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Proximal policy optimization with GAE and an asymmetric actor-critic

Environment contract used by train():
	env.reset(rng)               start a new episode
	env.step(action)             -> (obs, reward, done, info); info["truncated"]
	                             marks episodes that ended without failure
	actor_obs_fn(env)            -> actor observation of the current state
	critic_obs_fn(env)           -> privileged critic observation

Every environment owns one RNG stream (seed, env index); rollouts are
assembled in env-index order so curves are reproducible for any worker count.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from dlalign.dlalign import neural
from dlalign.dlalign.exceptions import NumericFaultError
from dlalign.dlalign.utils import log_error, logger, make_rng, ordered_map, throw, write_csv


CURVE_COLUMNS = [
	"update",
	"env_steps",
	"mean_reward",
	"mean_ep_len",
	"curriculum_threshold",
	"policy_loss",
	"value_loss",
	"entropy",
	"approx_kl",
	"clip_fraction",
]


@dataclass
class PpoConfig:
	gamma: float = 0.99
	lam: float = 0.95
	clip_eps: float = 0.2
	epochs: int = 4
	minibatch_size: int = 512
	lr: float = 3e-4
	entropy_coef: float = 0.0
	value_coef: float = 0.5
	max_grad_norm: float = 1.0
	n_envs: int = 16
	rollout_steps: int = 128
	total_steps: int = 200000
	actor_hidden: tuple = (64, 64)
	critic_hidden: tuple = (64, 64)
	activation: str = "tanh"
	init_log_std: float = -1.0

	def __post_init__(self):
		self.actor_hidden = tuple(int(h) for h in self.actor_hidden)
		self.critic_hidden = tuple(int(h) for h in self.critic_hidden)

	def validate(self):
		if not 0.0 < self.gamma <= 1.0:
			throw(f"ppo.gamma must lie in (0, 1], got {self.gamma}")
		if not 0.0 <= self.lam <= 1.0:
			throw(f"ppo.lam must lie in [0, 1], got {self.lam}")
		if not self.clip_eps > 0.0:
			throw(f"ppo.clip_eps must be positive, got {self.clip_eps}")
		if self.epochs < 1 or self.minibatch_size < 1:
			throw("ppo.epochs and ppo.minibatch_size must be at least 1")
		if self.n_envs < 1 or self.rollout_steps < 1 or self.total_steps < 0:
			throw("ppo.n_envs and ppo.rollout_steps must be positive, total_steps non-negative")
		if self.lr < 0 or self.max_grad_norm <= 0:
			throw("ppo.lr must be non-negative and ppo.max_grad_norm positive")
		if self.activation not in neural.ACTIVATIONS:
			throw(f"ppo.activation must be one of {neural.ACTIVATIONS}")
		return self

	def to_dict(self):
		data = {f.name: getattr(self, f.name) for f in fields(self)}
		data["actor_hidden"] = list(self.actor_hidden)
		data["critic_hidden"] = list(self.critic_hidden)
		return data

	@classmethod
	def from_dict(cls, data):
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known)
		if unknown:
			throw(f"Unknown ppo keys: {', '.join(unknown)}")
		return cls(**data).validate()


@dataclass
class RolloutBatch:
	"""Arrays shaped (n_envs, rollout_steps, ...)"""

	rewards: np.ndarray
	values: np.ndarray
	dones: np.ndarray
	last_values: np.ndarray
	truncated: np.ndarray = None
	bootstrap_values: np.ndarray = None
	actor_obs: np.ndarray = None
	critic_obs: np.ndarray = None
	actions: np.ndarray = None
	log_probs: np.ndarray = None
	advantages: np.ndarray = None
	returns: np.ndarray = None
	episode_returns: list = field(default_factory=list)
	episode_lengths: list = field(default_factory=list)

	@property
	def shape(self):
		return self.rewards.shape

	def validate(self):
		shape = self.rewards.shape
		if len(shape) != 2:
			throw(f"rollout arrays must be (n_envs, steps), got {shape}")
		for name in ("values", "dones", "truncated", "bootstrap_values", "log_probs"):
			value = getattr(self, name)
			if value is not None and value.shape != shape:
				throw(f"rollout field {name} has shape {value.shape}, expected {shape}")
		if self.last_values.shape != shape[:1]:
			throw(f"last_values must have shape {shape[:1]}, got {self.last_values.shape}")
		return self


@dataclass
class TrainState:
	policy: neural.GaussianPolicy
	critic: neural.Mlp
	actor_opt: neural.AdamState
	critic_opt: neural.AdamState


def compute_gae(batch, gamma, lam):
	"""
	Generalized advantage estimation

	A done step resets the recursion. A truncated step (episode ended without
	failure) also adds gamma * V(final state) from bootstrap_values.

	Args:
		batch: RolloutBatch
		gamma: Discount
		lam: GAE parameter

	Returns:
		tuple: (advantages, returns), each (n_envs, steps)
	"""
	batch.validate()
	rewards = batch.rewards
	values = batch.values
	dones = batch.dones.astype(np.float64)
	truncated = np.zeros_like(rewards) if batch.truncated is None else batch.truncated.astype(np.float64)
	bootstrap = np.zeros_like(rewards) if batch.bootstrap_values is None else batch.bootstrap_values

	n_steps = rewards.shape[1]
	advantages = np.zeros_like(rewards)
	next_advantage = np.zeros(rewards.shape[0])
	for t in range(n_steps - 1, -1, -1):
		next_value = batch.last_values if t == n_steps - 1 else values[:, t + 1]
		not_done = 1.0 - dones[:, t]
		delta = rewards[:, t] + gamma * (next_value * not_done + truncated[:, t] * bootstrap[:, t]) - values[:, t]
		next_advantage = delta + gamma * lam * not_done * next_advantage
		advantages[:, t] = next_advantage
	return advantages, advantages + values


def normalize_advantages(advantages, eps=1e-8):
	return (advantages - advantages.mean()) / (advantages.std() + eps)


def clipped_surrogate(ratio, advantages, clip_eps):
	"""
	Clipped surrogate loss -mean(min(r A, clip(r) A)) and its gradient in r

	Returns:
		tuple: (loss, d loss / d ratio, clipped mask)
	"""
	clipped_ratio = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
	unclipped = ratio * advantages
	clipped = clipped_ratio * advantages
	loss = -np.mean(np.minimum(unclipped, clipped))
	active = unclipped <= clipped
	grad = np.where(active, -advantages, 0.0) / ratio.shape[0]
	return float(loss), grad, ~active & (np.abs(ratio - 1.0) > clip_eps)


def _clip_grad(grad, max_norm):
	norm = float(np.linalg.norm(grad))
	if norm > max_norm:
		grad = grad * (max_norm / (norm + 1e-12))
	return grad, norm


def init_train_state(obs_dim, critic_dim, action_dim, config, rng):
	policy = neural.make_policy(
		obs_dim, action_dim, config.actor_hidden, config.activation, rng, init_log_std=config.init_log_std
	)
	critic = neural.make_critic(critic_dim, config.critic_hidden, config.activation, rng)
	return TrainState(
		policy=policy,
		critic=critic,
		actor_opt=neural.adam_init(policy.mean_net.spec.n_params + action_dim),
		critic_opt=neural.adam_init(critic.spec.n_params),
	)


def ppo_update(state, batch, config, rng):
	"""
	Several epochs of minibatch PPO on one rollout batch

	The state is updated in place only when every minibatch loss is finite;
	otherwise the update is abandoned and reported as aborted.

	Args:
		state: TrainState
		batch: RolloutBatch with advantages and returns attached
		config: PpoConfig
		rng: Generator for minibatch order

	Returns:
		dict: policy_loss, value_loss, entropy, approx_kl, clip_fraction, aborted
	"""
	policy = state.policy
	n_actor = policy.mean_net.spec.n_params
	actor_flat = np.concatenate([policy.mean_net.flat, policy.log_std])
	critic_flat = state.critic.flat.copy()
	actor_opt, critic_opt = state.actor_opt, state.critic_opt

	obs = batch.actor_obs.reshape(-1, batch.actor_obs.shape[-1])
	cobs = batch.critic_obs.reshape(-1, batch.critic_obs.shape[-1])
	actions = batch.actions.reshape(-1, batch.actions.shape[-1])
	old_log_probs = batch.log_probs.ravel()
	advantages = normalize_advantages(batch.advantages.ravel())
	returns = batch.returns.ravel()

	n_samples = obs.shape[0]
	size = min(config.minibatch_size, n_samples)
	totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "approx_kl": 0.0, "clip_fraction": 0.0}
	n_minibatches = 0

	for _ in range(config.epochs):
		order = rng.permutation(n_samples)
		for start in range(0, n_samples, size):
			index = order[start : start + size]
			mean_net = neural.Mlp(policy.mean_net.spec, actor_flat[:n_actor])
			log_std = np.clip(actor_flat[n_actor:], neural.LOG_STD_MIN, neural.LOG_STD_MAX)
			critic = neural.Mlp(state.critic.spec, critic_flat)

			mean = neural.forward(mean_net, obs[index])
			log_probs = neural.log_prob_from_mean(mean, log_std, actions[index])
			log_ratio = log_probs - old_log_probs[index]
			ratio = np.exp(log_ratio)
			policy_loss, d_ratio, clipped = clipped_surrogate(ratio, advantages[index], config.clip_eps)

			values = neural.forward(critic, cobs[index])[:, 0]
			value_error = values - returns[index]
			value_loss = config.value_coef * float(np.mean(value_error ** 2))
			entropy = float(np.sum(log_std + 0.5 * (neural.LOG_2PI + 1.0)))

			if not np.isfinite(policy_loss + value_loss + entropy):
				log_error(
					"DLAlign PPO Update Aborted",
					f"policy_loss={policy_loss}\nvalue_loss={value_loss}\nentropy={entropy}",
				)
				return {**totals, "aborted": True}

			d_log_prob = d_ratio * ratio
			d_mean, d_log_std = neural.log_prob_grads(mean, log_std, actions[index])
			mean_grad, _ = neural.backward(mean_net, obs[index], d_log_prob[:, None] * d_mean)
			log_std_grad = (d_log_prob[:, None] * d_log_std).sum(axis=0) - config.entropy_coef
			actor_grad, _ = _clip_grad(np.concatenate([mean_grad, log_std_grad]), config.max_grad_norm)

			critic_grad, _ = neural.backward(critic, cobs[index], (2.0 * config.value_coef * value_error / len(index))[:, None])
			critic_grad, _ = _clip_grad(critic_grad, config.max_grad_norm)

			try:
				actor_flat, actor_opt = neural.adam_step(actor_flat, actor_grad, actor_opt, config.lr)
				critic_flat, critic_opt = neural.adam_step(critic_flat, critic_grad, critic_opt, config.lr)
			except NumericFaultError as e:
				log_error("DLAlign PPO Update Aborted", str(e))
				return {**totals, "aborted": True}

			totals["policy_loss"] += policy_loss
			totals["value_loss"] += value_loss
			totals["entropy"] += entropy
			totals["approx_kl"] += float(np.mean(ratio - 1.0 - log_ratio))
			totals["clip_fraction"] += float(np.mean(clipped))
			n_minibatches += 1

	policy.mean_net.flat = actor_flat[:n_actor].copy()
	policy.set_log_std(actor_flat[n_actor:])
	state.critic.flat = critic_flat
	state.actor_opt, state.critic_opt = actor_opt, critic_opt

	report = {key: value / max(n_minibatches, 1) for key, value in totals.items()}
	report["aborted"] = False
	return report


class _Worker:
	"""One environment, its RNG stream and the running episode statistics"""

	def __init__(self, env, rng):
		self.env = env
		self.rng = rng
		self.episode_return = 0.0
		self.episode_length = 0
		env.reset(rng)


def _collect(worker, state, actor_obs_fn, critic_obs_fn, n_steps):
	env, rng = worker.env, worker.rng
	policy, critic = state.policy, state.critic
	record = {key: [] for key in ("obs", "cobs", "actions", "log_probs", "rewards", "values", "dones", "truncated", "bootstrap")}
	returns, lengths = [], []

	for _ in range(n_steps):
		obs = actor_obs_fn(env)
		cobs = critic_obs_fn(env)
		action = neural.gaussian_sample(policy, obs, rng)
		value = float(neural.forward(critic, cobs)[0])

		_, reward, done, info = env.step(action)
		truncated = bool(done and info.get("truncated", False))
		bootstrap = float(neural.forward(critic, critic_obs_fn(env))[0]) if truncated else 0.0

		record["obs"].append(obs)
		record["cobs"].append(cobs)
		record["actions"].append(action)
		record["log_probs"].append(neural.log_prob(policy, obs, action))
		record["rewards"].append(reward)
		record["values"].append(value)
		record["dones"].append(done)
		record["truncated"].append(truncated)
		record["bootstrap"].append(bootstrap)

		worker.episode_return += reward
		worker.episode_length += 1
		if done:
			returns.append(worker.episode_return)
			lengths.append(worker.episode_length)
			worker.episode_return = 0.0
			worker.episode_length = 0
			env.reset(rng)

	last_value = float(neural.forward(critic, critic_obs_fn(env))[0])
	return {key: np.asarray(value) for key, value in record.items()}, last_value, returns, lengths


def collect_rollouts(workers, state, actor_obs_fn, critic_obs_fn, n_steps, n_workers=None):
	"""
	Roll every worker forward n_steps with the current (read-only) networks

	Returns:
		RolloutBatch
	"""
	results = ordered_map(
		lambda worker: _collect(worker, state, actor_obs_fn, critic_obs_fn, n_steps),
		workers,
		workers=n_workers,
	)

	def stack(key):
		return np.stack([r[0][key] for r in results])

	batch = RolloutBatch(
		rewards=stack("rewards").astype(np.float64),
		values=stack("values").astype(np.float64),
		dones=stack("dones").astype(bool),
		last_values=np.array([r[1] for r in results]),
		truncated=stack("truncated").astype(bool),
		bootstrap_values=stack("bootstrap").astype(np.float64),
		actor_obs=stack("obs"),
		critic_obs=stack("cobs"),
		actions=stack("actions"),
		log_probs=stack("log_probs"),
	)
	for r in results:
		batch.episode_returns.extend(r[2])
		batch.episode_lengths.extend(r[3])
	return batch.validate()


def train(env_factory, actor_obs_fn, critic_obs_fn, config, seed, state=None, on_progress=None, curves_path=None):
	"""
	Collect, estimate advantages and update until total_steps env steps

	Args:
		env_factory: Callable(env_index) -> environment
		actor_obs_fn: Callable(env) -> actor observation
		critic_obs_fn: Callable(env) -> critic observation
		config: PpoConfig
		seed: Base seed (env i uses stream (seed, 1, i))
		state: Optional TrainState to continue from (fine-tuning)
		on_progress: Optional Callable(fraction) -> curriculum threshold or None,
			called before every rollout
		curves_path: Optional CSV path for the training curves

	Returns:
		dict: success, state (TrainState), curves (list of dict), env_steps, diverged
	"""
	config.validate()
	envs = [env_factory(index) for index in range(config.n_envs)]

	if state is None:
		probe = envs[0]
		probe.reset(make_rng(seed, 2))
		action_dim = probe.action_dim
		state = init_train_state(
			len(actor_obs_fn(probe)), len(critic_obs_fn(probe)), action_dim, config, make_rng(seed, 0)
		)

	curves = []
	result = {"success": True, "state": state, "curves": curves, "env_steps": 0, "diverged": False}
	if config.total_steps == 0:
		return result

	workers = [_Worker(env, make_rng(seed, 1, index)) for index, env in enumerate(envs)]
	update_rng = make_rng(seed, 3)
	steps_per_update = config.n_envs * config.rollout_steps
	n_updates = int(np.ceil(config.total_steps / steps_per_update))
	last_good = clone_state(state)
	recent_lengths = []

	for update in range(n_updates):
		threshold = on_progress(result["env_steps"] / config.total_steps) if on_progress else None
		batch = collect_rollouts(workers, state, actor_obs_fn, critic_obs_fn, config.rollout_steps)
		result["env_steps"] += steps_per_update

		batch.advantages, batch.returns = compute_gae(batch, config.gamma, config.lam)
		report = ppo_update(state, batch, config, update_rng)
		if report["aborted"]:
			log_error(
				"DLAlign Training Diverged",
				f"update={update}\nenv_steps={result['env_steps']}\nrestoring last good networks",
			)
			_restore(state, last_good)
			result["diverged"] = True
			result["success"] = False
			break
		last_good = clone_state(state)

		recent_lengths = (recent_lengths + batch.episode_lengths)[-100:]
		row = {
			"update": update,
			"env_steps": result["env_steps"],
			"mean_reward": float(batch.rewards.mean()),
			"mean_ep_len": float(np.mean(recent_lengths)) if recent_lengths else float(config.rollout_steps),
			"curriculum_threshold": "" if threshold is None else float(threshold),
			**{key: report[key] for key in CURVE_COLUMNS[5:]},
		}
		curves.append(row)
		if update % 10 == 0 or update == n_updates - 1:
			logger.info(
				f"DLAlign: update {update + 1}/{n_updates} - steps {result['env_steps']}, "
				f"reward {row['mean_reward']:.4f}, ep_len {row['mean_ep_len']:.1f}"
			)

	if curves_path:
		write_csv(curves_path, curves, CURVE_COLUMNS)
	return result


def clone_state(state):
	"""Deep copy of a TrainState"""
	return TrainState(
		policy=state.policy.copy(),
		critic=state.critic.copy(),
		actor_opt=neural.AdamState(state.actor_opt.m.copy(), state.actor_opt.v.copy(), state.actor_opt.t),
		critic_opt=neural.AdamState(state.critic_opt.m.copy(), state.critic_opt.v.copy(), state.critic_opt.t),
	)


def _restore(state, snapshot):
	state.policy.mean_net.flat = snapshot.policy.mean_net.flat.copy()
	state.policy.set_log_std(snapshot.policy.log_std)
	state.critic.flat = snapshot.critic.flat.copy()
	state.actor_opt, state.critic_opt = snapshot.actor_opt, snapshot.critic_opt
