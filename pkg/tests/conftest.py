# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import numpy as np
import pytest

from dlalign.dlalign.config import loads_config
from dlalign.dlalign.dynamics import DynamicsParams, initial_state
from dlalign.dlalign.neural import make_policy
from dlalign.dlalign.ppo import PpoConfig
from dlalign.dlalign.reference import generate_synthetic
from dlalign.dlalign.tracking import NominalPlant, TrackingConfig, actor_obs_size
from dlalign.dlalign.align.rollouts import Episode, TrajectoryDataset
from dlalign.dlalign.utils import make_rng, set_error_log_dir


@pytest.fixture(autouse=True)
def _no_error_log():
	set_error_log_dir(None)
	yield
	set_error_log_dir(None)


@pytest.fixture
def params():
	return DynamicsParams().validate()


@pytest.fixture
def two_link():
	return DynamicsParams.from_dict({"n_links": 2})


@pytest.fixture
def motion(params):
	return generate_synthetic("easy", 3, params, duration=1.0)


@pytest.fixture
def tiny_ppo():
	return PpoConfig(
		n_envs=2,
		rollout_steps=16,
		minibatch_size=16,
		epochs=2,
		total_steps=64,
		actor_hidden=(8,),
		critic_hidden=(8,),
	).validate()


@pytest.fixture
def quiet_tracking():
	"""Tracking config without randomization or pushes"""
	return TrackingConfig(randomize=False, rsi=False, push_magnitude=0.0).validate()


@pytest.fixture
def policy_for(params):
	"""Random actor matching the tracking observation size"""

	def build(seed=0, history_len=5):
		obs_dim = actor_obs_size(params.n_links, history_len)
		return make_policy(obs_dim, params.n_links, (8,), "tanh", make_rng(seed), init_log_std=-1.0)

	return build


def simulate_episode(params, actions, q0, qd0=None, prime=None, plant=None, motion="synthetic"):
	"""Record an Episode by running the actions through a plant from (q0, qd0)"""
	plant = plant or NominalPlant()
	actions = np.asarray(actions, dtype=np.float64)
	q0 = np.asarray(q0, dtype=np.float64)
	qd0 = np.zeros_like(q0) if qd0 is None else np.asarray(qd0, dtype=np.float64)
	prime = q0.copy() if prime is None else np.asarray(prime, dtype=np.float64)

	state = initial_state(q0, qd0, params, prime=prime)
	q, qd = [state.q.copy()], [state.qd.copy()]
	for action in actions:
		state, _ = plant.step(state, action, params)
		q.append(state.q.copy())
		qd.append(state.qd.copy())
	return Episode(
		motion=motion,
		q=np.array(q),
		qd=np.array(qd),
		actions=actions,
		prime=prime,
		params_hash=params.params_hash(),
	).validate()


def smooth_actions(n_steps, n_links, seed, amplitude=0.3):
	"""Sum-of-sines setpoints, distinct per joint"""
	rng = make_rng(seed)
	t = np.arange(n_steps)[:, None] * 0.01
	freq = rng.uniform(0.5, 1.5, n_links)
	phase = rng.uniform(0.0, 2.0 * np.pi, n_links)
	return amplitude * np.sin(2.0 * np.pi * freq * t + phase)


@pytest.fixture
def recorded_dataset():
	"""
	Builder for a dataset recorded under `real` params from smooth actions

	Returns:
		Callable(real_params, n_episodes=3, n_steps=120, seed=0) -> TrajectoryDataset
	"""

	def build(real_params, n_episodes=3, n_steps=120, seed=0, plant=None):
		episodes = []
		for index in range(n_episodes):
			rng = make_rng(seed, index)
			q0 = rng.uniform(-0.2, 0.2, real_params.n_links)
			actions = q0 + smooth_actions(n_steps, real_params.n_links, seed * 100 + index)
			episodes.append(simulate_episode(real_params, actions, q0, plant=plant, motion=f"synthetic_{index}"))
		return TrajectoryDataset(
			dt=real_params.control_dt,
			n_links=real_params.n_links,
			params_hash=real_params.params_hash(),
			provenance="real-proxy",
			episodes=episodes,
		).validate()

	return build


@pytest.fixture
def run_config(tmp_path):
	"""Builder for a smoke-scale RunConfig writing under tmp_path"""

	def build(extra="", name="run"):
		text = f"""
motions:
  per_difficulty: 2
  held_out_per_difficulty: 1
  difficulties: [easy]
  duration: 2.0
ppo:
  n_envs: 2
  rollout_steps: 16
  minibatch_size: 32
  epochs: 1
  total_steps: 32
  actor_hidden: [8]
  critic_hidden: [8]
align:
  episodes: 2
  held_out_episodes: 1
  delta_action:
    horizon: 0.2
  delta_ppo:
    total_steps: 32
  delta_dynamics:
    hidden: [8]
    iterations: 3
    batch_size: 2
    k_end: 3
  sysid:
    mass_ratio: [1.0]
    com_shift: [0.0]
    kp_ratio: [0.9, 1.0]
    kd_ratio: [1.0]
    max_episodes: 2
finetune:
  total_steps: 32
  noise_betas: [0.1]
eval:
  horizons: [0.1, 0.2]
  stride: 0.1
  seeds: 1
  fixed_point_iterations: 2
  gradient_steps: 2
ablate:
  dataset_fractions: [1.0]
  horizons: [0.2]
  action_norm_weights: [0.2]
  closed_loop: false
io:
  output_dir: {tmp_path / name}
{extra}
"""
		return loads_config(text)

	return build
