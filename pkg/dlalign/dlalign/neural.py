# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Feedforward networks with analytic gradients, Adam and diagonal Gaussian policies
All parameters live in one flat float64 vector; layers are views into it.
Randomness always comes from an injected numpy Generator.
"""

from dataclasses import dataclass, field

import numpy as np

from dlalign.dlalign.exceptions import NumericFaultError
from dlalign.dlalign.utils import throw


ACTIVATIONS = ("tanh", "relu")
LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MlpSpec:
	"""Layer sizes input -> hidden... -> output; linear output layer"""

	layer_sizes: tuple
	activation: str = "tanh"

	def __post_init__(self):
		object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))

	def validate(self):
		if len(self.layer_sizes) < 2:
			throw(f"MlpSpec needs at least 2 layer sizes, got {self.layer_sizes}")
		if any(size < 1 for size in self.layer_sizes):
			throw(f"MlpSpec layer sizes must be >= 1, got {self.layer_sizes}")
		if self.activation not in ACTIVATIONS:
			throw(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
		return self

	@property
	def n_params(self):
		sizes = self.layer_sizes
		return sum((n_in + 1) * n_out for n_in, n_out in zip(sizes[:-1], sizes[1:]))

	@property
	def n_in(self):
		return self.layer_sizes[0]

	@property
	def n_out(self):
		return self.layer_sizes[-1]

	def to_dict(self):
		return {"layer_sizes": list(self.layer_sizes), "activation": self.activation}


class Mlp:
	"""MlpSpec plus its flat parameter vector"""

	def __init__(self, spec, flat=None):
		self.spec = spec.validate()
		if flat is None:
			flat = np.zeros(spec.n_params)
		flat = np.asarray(flat, dtype=np.float64)
		if flat.shape != (spec.n_params,):
			throw(f"flat parameter length {flat.shape} does not match spec ({spec.n_params},)")
		self.flat = flat

	def layers(self):
		"""(W, b) views per layer, W shaped (n_out, n_in)"""
		views = []
		offset = 0
		sizes = self.spec.layer_sizes
		for n_in, n_out in zip(sizes[:-1], sizes[1:]):
			W = self.flat[offset : offset + n_in * n_out].reshape(n_out, n_in)
			offset += n_in * n_out
			b = self.flat[offset : offset + n_out]
			offset += n_out
			views.append((W, b))
		return views

	def copy(self):
		return Mlp(self.spec, self.flat.copy())


def init_mlp(spec, rng, output_gain=1.0):
	"""
	Scaled-uniform initialization
	Hidden layers use gain 1 (tanh) or sqrt(2) (relu); biases start at zero.

	Args:
		spec: MlpSpec
		rng: numpy Generator
		output_gain: Extra scale on the output layer (small for policy means)

	Returns:
		Mlp
	"""
	net = Mlp(spec)
	gain = np.sqrt(2.0) if spec.activation == "relu" else 1.0
	layers = net.layers()
	for index, (W, _) in enumerate(layers):
		n_in = W.shape[1]
		bound = gain * np.sqrt(3.0 / n_in)
		if index == len(layers) - 1:
			bound *= output_gain
		W[...] = rng.uniform(-bound, bound, size=W.shape)
	return net


def _activate(z, activation):
	if activation == "tanh":
		return np.tanh(z)
	return np.maximum(z, 0.0)


def _activation_grad(z, a, activation):
	if activation == "tanh":
		return 1.0 - a ** 2
	return (z > 0).astype(np.float64)


def _as_batch(net, x):
	x = np.asarray(x, dtype=np.float64)
	single = x.ndim == 1
	batch = x[None] if single else x
	if batch.ndim != 2 or batch.shape[1] != net.spec.n_in:
		throw(f"input dimension {x.shape} does not match network input {net.spec.n_in}")
	return batch, single


def _trace(net, batch):
	# activations[k] is the input of layer k; pre[k] its affine output
	activations = [batch]
	pre = []
	layers = net.layers()
	for index, (W, b) in enumerate(layers):
		z = activations[-1] @ W.T + b
		pre.append(z)
		if index < len(layers) - 1:
			activations.append(_activate(z, net.spec.activation))
	return activations, pre


def forward(net, x):
	"""
	Evaluate the network

	Args:
		net: Mlp
		x: (n_in,) or (B, n_in)

	Returns:
		np.ndarray: (n_out,) or (B, n_out)
	"""
	batch, single = _as_batch(net, x)
	_, pre = _trace(net, batch)
	out = pre[-1]
	return out[0] if single else out


def backward(net, x, output_grad):
	"""
	Reverse-mode gradients of <output_grad, forward(net, x)>
	Parameter gradients are summed over the batch.

	Args:
		net: Mlp
		x: (n_in,) or (B, n_in)
		output_grad: same leading shape as the output

	Returns:
		tuple: (param_grad flat (n_params,), input_grad shaped like x)
	"""
	batch, single = _as_batch(net, x)
	grad = np.asarray(output_grad, dtype=np.float64)
	grad = grad[None] if single else grad
	if grad.shape != (batch.shape[0], net.spec.n_out):
		throw(f"output_grad shape {np.shape(output_grad)} does not match network output")

	activations, pre = _trace(net, batch)
	layers = net.layers()
	param_grad = np.zeros_like(net.flat)
	grad_views = Mlp(net.spec, param_grad).layers()

	for index in range(len(layers) - 1, -1, -1):
		W, _ = layers[index]
		dW, db = grad_views[index]
		dW[...] = grad.T @ activations[index]
		db[...] = grad.sum(axis=0)
		grad = grad @ W
		if index > 0:
			grad = grad * _activation_grad(pre[index - 1], activations[index], net.spec.activation)

	return param_grad, (grad[0] if single else grad)


@dataclass
class AdamState:
	m: np.ndarray
	v: np.ndarray
	t: int = 0


def adam_init(n_params):
	return AdamState(np.zeros(n_params), np.zeros(n_params), 0)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
	"""
	Adaptive moment update with bias correction

	Args:
		params: Flat parameter vector
		grads: Gradient of the loss (same shape)
		state: AdamState
		lr: Learning rate

	Returns:
		tuple: (new params, new AdamState)
	"""
	grads = np.asarray(grads, dtype=np.float64)
	if grads.shape != params.shape:
		throw(f"gradient shape {grads.shape} does not match parameters {params.shape}")
	if not np.all(np.isfinite(grads)):
		bad = np.flatnonzero(~np.isfinite(grads))[:5].tolist()
		throw(f"adam_step: non-finite gradient entries at {bad}", NumericFaultError)

	t = state.t + 1
	m = beta1 * state.m + (1.0 - beta1) * grads
	v = beta2 * state.v + (1.0 - beta2) * grads ** 2
	m_hat = m / (1.0 - beta1 ** t)
	v_hat = v / (1.0 - beta2 ** t)
	new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
	return new_params, AdamState(m, v, t)


@dataclass
class GaussianPolicy:
	"""Diagonal Gaussian with a state-dependent mean and learnable log_std"""

	mean_net: Mlp
	log_std: np.ndarray = field(default=None)

	def __post_init__(self):
		if self.log_std is None:
			self.log_std = np.zeros(self.mean_net.spec.n_out)
		self.log_std = np.clip(np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)

	@property
	def action_dim(self):
		return self.mean_net.spec.n_out

	@property
	def obs_dim(self):
		return self.mean_net.spec.n_in

	def copy(self):
		return GaussianPolicy(self.mean_net.copy(), self.log_std.copy())

	def set_log_std(self, value):
		self.log_std = np.clip(np.asarray(value, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)


def make_policy(obs_dim, action_dim, hidden, activation, rng, init_log_std=-1.0):
	spec = MlpSpec((obs_dim, *hidden, action_dim), activation)
	net = init_mlp(spec, rng, output_gain=0.01)
	return GaussianPolicy(net, np.full(action_dim, float(init_log_std)))


def make_critic(obs_dim, hidden, activation, rng):
	spec = MlpSpec((obs_dim, *hidden, 1), activation)
	return init_mlp(spec, rng, output_gain=1.0)


def gaussian_mean(policy, obs):
	return forward(policy.mean_net, obs)


def gaussian_sample(policy, obs, rng):
	"""
	Draw an action

	Args:
		policy: GaussianPolicy
		obs: (obs_dim,) or (B, obs_dim)
		rng: numpy Generator

	Returns:
		np.ndarray: action with the mean's shape
	"""
	mean = gaussian_mean(policy, obs)
	return mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)


def log_prob(policy, obs, action):
	"""Exact diagonal-Gaussian log density (summed over action dims)"""
	mean = gaussian_mean(policy, obs)
	return log_prob_from_mean(mean, policy.log_std, action)


def log_prob_from_mean(mean, log_std, action):
	z = (np.asarray(action) - mean) / np.exp(log_std)
	return np.sum(-0.5 * z ** 2 - log_std - 0.5 * LOG_2PI, axis=-1)


def log_prob_grads(mean, log_std, action):
	"""
	Partial derivatives of log_prob

	Returns:
		tuple: (d/d mean, d/d log_std), each shaped like action
	"""
	std = np.exp(log_std)
	z = (np.asarray(action) - mean) / std
	return z / std, z ** 2 - 1.0


def entropy(policy):
	"""sum(log_std + 0.5 log(2 pi e)); independent of the observation"""
	return float(np.sum(policy.log_std + 0.5 * (LOG_2PI + 1.0)))
