# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Delta dynamics baseline: a learned state residual added to the simulator,
s' = f_sim(s, a) + f_delta(s, a), trained on K-step autoregressive rollouts
"""

from dataclasses import dataclass, fields

import numpy as np

from dlalign.dlalign.dynamics import control_step
from dlalign.dlalign.exceptions import NumericFaultError
from dlalign.dlalign.neural import MlpSpec, adam_init, adam_step, backward, forward, init_mlp
from dlalign.dlalign.align.rollouts import state_at
from dlalign.dlalign.utils import check_finite, log_error, logger, make_rng, throw, write_csv


STD_FLOOR = 1e-6


@dataclass
class DeltaDynamicsConfig:
	hidden: tuple = (64, 64)
	activation: str = "tanh"
	iterations: int = 300
	batch_size: int = 32
	lr: float = 1e-3
	k_start: int = 1
	k_end: int = 10
	loss_threshold: float = 0.05

	def __post_init__(self):
		self.hidden = tuple(int(h) for h in self.hidden)

	def validate(self):
		if self.iterations < 0 or self.batch_size < 1:
			throw("delta dynamics iterations must be non-negative and batch_size positive")
		if not 1 <= self.k_start <= self.k_end:
			throw(f"delta dynamics K schedule needs 1 <= k_start <= k_end, got {self.k_start} -> {self.k_end}")
		if self.lr < 0:
			throw("delta dynamics lr must be non-negative")
		return self

	def k_at(self, iteration):
		"""K grows linearly from k_start to k_end over the iterations"""
		if self.iterations <= 1:
			return self.k_end
		fraction = iteration / (self.iterations - 1)
		return int(round(self.k_start + (self.k_end - self.k_start) * fraction))

	def to_dict(self):
		data = {f.name: getattr(self, f.name) for f in fields(self)}
		data["hidden"] = list(self.hidden)
		return data

	@classmethod
	def from_dict(cls, data):
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known)
		if unknown:
			throw(f"Unknown delta dynamics keys: {', '.join(unknown)}")
		return cls(**data).validate()


@dataclass
class DeltaDynamicsModel:
	"""
	MLP on normalized (q, qd, a) predicting a normalized (dq, dqd) residual
	residual = out_mean + out_std * net(( x - in_mean) / in_std)
	"""

	net: object
	in_mean: np.ndarray
	in_std: np.ndarray
	out_mean: np.ndarray
	out_std: np.ndarray

	@property
	def state_dim(self):
		return int(self.out_mean.shape[0])

	def copy(self):
		return DeltaDynamicsModel(
			self.net.copy(), self.in_mean.copy(), self.in_std.copy(), self.out_mean.copy(), self.out_std.copy()
		)


def _inputs(q, qd, action):
	return np.concatenate([np.atleast_2d(q), np.atleast_2d(qd), np.atleast_2d(action)], axis=-1)


def predict_residual(model, q, qd, action):
	"""
	State residual (dq, dqd) for one or a batch of transitions

	Returns:
		np.ndarray: (2n,) or (B, 2n)
	"""
	single = np.ndim(action) == 1
	x = (_inputs(q, qd, action) - model.in_mean) / model.in_std
	residual = model.out_mean + model.out_std * forward(model.net, x)
	return residual[0] if single else residual


class DeltaDynamicsPlant:
	"""Simulator step plus the learned state residual"""

	def __init__(self, model):
		self.model = model

	def step(self, state, action, params):
		next_state, info = control_step(state, action, params)
		residual = predict_residual(self.model, state.q, state.qd, action)
		n = params.n_links
		next_state.q = next_state.q + residual[:n]
		next_state.qd = next_state.qd + residual[n:]
		check_finite("delta dynamics step", q=next_state.q, qd=next_state.qd)
		info["applied_action"] = action
		return next_state, info


def one_step_residuals(dataset, sim_params):
	"""
	Inputs and one-step residual targets s_real' - f_sim(s_real, a) for every
	recorded transition

	Returns:
		tuple: (inputs (N, 3n), residuals (N, 2n))
	"""
	inputs, targets = [], []
	for episode in dataset.episodes:
		state = state_at(episode, 0, sim_params)
		for t in range(episode.n_steps):
			# the simulator's own delay buffer evolves along the recorded actions
			state.q = episode.q[t].copy()
			state.qd = episode.qd[t].copy()
			predicted, _ = control_step(state, episode.actions[t], sim_params)
			inputs.append(np.concatenate([episode.q[t], episode.qd[t], episode.actions[t]]))
			targets.append(np.concatenate([episode.q[t + 1] - predicted.q, episode.qd[t + 1] - predicted.qd]))
			state = predicted
	return np.array(inputs), np.array(targets)


def _init_model(inputs, targets, config, rng):
	n_in, n_out = inputs.shape[1], targets.shape[1]
	net = init_mlp(MlpSpec((n_in, *config.hidden, n_out), config.activation), rng, output_gain=0.1)
	return DeltaDynamicsModel(
		net=net,
		in_mean=inputs.mean(axis=0),
		in_std=np.maximum(inputs.std(axis=0), STD_FLOOR),
		out_mean=targets.mean(axis=0),
		out_std=np.maximum(targets.std(axis=0), STD_FLOOR),
	)


def _k_step_gradient(model, dataset, sim_params, samples, k):
	"""
	Loss and parameter gradient of K-step autoregressive rollouts

	Each step's prediction s_sim + f_delta(s, a) is compared with the recorded
	state; gradients flow through f_delta at that step only and the rollout
	continues from the model-augmented state.
	"""
	n = sim_params.n_links
	grad = np.zeros_like(model.net.flat)
	loss = 0.0
	count = len(samples) * k

	for episode_index, start in samples:
		episode = dataset.episodes[episode_index]
		state = state_at(episode, start, sim_params)
		for step in range(k):
			t = start + step
			action = episode.actions[t]
			simulated, _ = control_step(state, action, sim_params)
			x = (np.concatenate([state.q, state.qd, action]) - model.in_mean) / model.in_std
			residual = model.out_mean + model.out_std * forward(model.net, x)
			predicted = np.concatenate([simulated.q, simulated.qd]) + residual
			target = np.concatenate([episode.q[t + 1], episode.qd[t + 1]])

			error = (predicted - target) / model.out_std
			loss += float(np.mean(error ** 2)) / count
			param_grad, _ = backward(model.net, x, 2.0 * error / (error.size * count))
			grad += param_grad

			simulated.q = predicted[:n]
			simulated.qd = predicted[n:]
			state = simulated
	return loss, grad


def train_delta_dynamics(dataset, sim_params, config, seed, curves_path=None):
	"""
	Fit the delta dynamics model

	Args:
		dataset: TrajectoryDataset
		sim_params: DynamicsParams of the training simulator
		config: DeltaDynamicsConfig (K schedule k_start -> k_end)
		seed: Base seed
		curves_path: Optional CSV of (iteration, k, loss)

	Returns:
		dict: success, model, curves, one_step_mse (normalized units), diverged
	"""
	config.validate()
	if not dataset.episodes:
		throw("delta dynamics training needs a non-empty dataset")

	rng = make_rng(seed, 29)
	inputs, targets = one_step_residuals(dataset, sim_params)
	model = _init_model(inputs, targets, config, rng)
	optimizer = adam_init(model.net.spec.n_params)
	curves = []
	diverged = False

	logger.info(
		f"DLAlign: training delta dynamics - {len(inputs)} transition(s), "
		f"K {config.k_start} -> {config.k_end}, {config.iterations} iteration(s)"
	)

	for iteration in range(config.iterations):
		k = config.k_at(iteration)
		eligible = [i for i, e in enumerate(dataset.episodes) if e.n_steps >= k]
		if not eligible:
			throw(f"no recorded episode is long enough for K={k}")
		picks = rng.integers(len(eligible), size=config.batch_size)
		samples = []
		for pick in picks:
			episode_index = eligible[int(pick)]
			start = int(rng.integers(0, dataset.episodes[episode_index].n_steps - k + 1))
			samples.append((episode_index, start))

		try:
			loss, grad = _k_step_gradient(model, dataset, sim_params, samples, k)
			model.net.flat, optimizer = adam_step(model.net.flat, grad, optimizer, config.lr)
		except NumericFaultError as e:
			log_error("DLAlign Delta Dynamics Diverged", f"iteration={iteration}\nK={k}\n\nError: {e}")
			diverged = True
			break
		curves.append({"iteration": iteration, "k": k, "loss": loss})
		if iteration % 50 == 0:
			logger.debug(f"DLAlign: delta dynamics iteration {iteration} - K {k}, loss {loss:.6f}")

	one_step = one_step_mse(model, inputs, targets)
	logger.info(f"DLAlign: delta dynamics one-step MSE {one_step:.6f} (threshold {config.loss_threshold})")
	if curves_path:
		write_csv(curves_path, curves, ["iteration", "k", "loss"])

	return {
		"success": not diverged,
		"model": model,
		"curves": curves,
		"one_step_mse": one_step,
		"diverged": diverged,
	}


def one_step_mse(model, inputs, targets):
	"""Mean squared one-step residual error in normalized units"""
	if len(inputs) == 0:
		return 0.0
	x = (inputs - model.in_mean) / model.in_std
	predicted = model.out_mean + model.out_std * forward(model.net, x)
	return float(np.mean(((predicted - targets) / model.out_std) ** 2))
